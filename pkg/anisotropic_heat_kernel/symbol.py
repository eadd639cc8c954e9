"""
Pointwise and global quantities of the quartic symbol A(x, xi).

Q(x) = beta / sqrt(alpha gamma) splits the domain into three regimes; k, sigma and their global
extremes k_star, sigma_star follow the three-branch formulas, with ties at Q = 0 and Q = 3 taking
the middle branch.
"""

from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.ndimage import gaussian_filter

from anisotropic_heat_kernel.coefficients import (
    CoefficientField,
    grid_function,
    make_field,
    quarter_circle,
)
from anisotropic_heat_kernel.errors import (
    ClassificationError,
    EllipticityError,
    NoSurrogateError,
    ParameterError,
    ResolutionError,
)
from anisotropic_heat_kernel.logging_config import get_logger
from anisotropic_heat_kernel.models import (
    REGIME_CODES,
    Domain2D,
    GoodClassReport,
    Regime,
    RegimeSummary,
    ThetaSummary,
)

logger = get_logger(__name__)

SIGMA_CONVEX = 3.0 / (8.0 * 4.0 ** (1.0 / 3.0))
"""sigma on the strongly convex range, equal to 3 * 2^(1/3) / 16."""

GOOD_CLASS_TOLERANCE = 0.25


def symbol_values(
    alpha: np.ndarray, beta: np.ndarray, gamma: np.ndarray, xi1: np.ndarray, xi2: np.ndarray
) -> np.ndarray:
    """alpha xi1^4 + 2 beta xi1^2 xi2^2 + gamma xi2^4, broadcasting over all arguments."""
    s1, s2 = np.square(xi1), np.square(xi2)
    return alpha * s1 * s1 + 2.0 * beta * s1 * s2 + gamma * s2 * s2


def eval_symbol(field: CoefficientField, x: Sequence[float], xi: Sequence[float]) -> complex:
    """
    A(x, xi) for one point and one real frequency.

    Raises:
        DomainError: If x lies outside the field's domain.
    """
    alpha, beta, gamma = field.at_point(x)
    return complex(symbol_values(alpha, beta, gamma, float(xi[0]), float(xi[1])))


def _real_positive(alpha: np.ndarray, gamma: np.ndarray, beta: np.ndarray, tol: float) -> None:
    scale = tol * np.maximum(1.0, np.maximum(np.abs(alpha), np.abs(gamma)))
    if np.any(np.abs(alpha.imag) > scale) or np.any(np.abs(beta.imag) > scale) or np.any(
        np.abs(gamma.imag) > scale
    ):
        raise ClassificationError("Q(x) requires real coefficients")
    if np.any(alpha.real <= 0.0) or np.any(gamma.real <= 0.0):
        raise ClassificationError("Q(x) requires alpha > 0 and gamma > 0")


def q_values(
    alpha: np.ndarray, beta: np.ndarray, gamma: np.ndarray, tol: float = 1e-14
) -> np.ndarray:
    """Q = beta / sqrt(alpha gamma) for real coefficients with alpha, gamma > 0."""
    alpha, beta, gamma = (np.asarray(v, dtype=complex) for v in (alpha, beta, gamma))
    _real_positive(alpha, gamma, beta, tol)
    return beta.real / np.sqrt(alpha.real * gamma.real)


def eval_Q(field: CoefficientField, x: Sequence[float]) -> float:
    """
    Q(x) at one point.

    Raises:
        ClassificationError: If alpha or gamma is non-positive or any coefficient is non-real.
        DomainError: If x lies outside the domain.
    """
    alpha, beta, gamma = field.at_point(x)
    return float(q_values(np.asarray(alpha), np.asarray(beta), np.asarray(gamma)))


def regime_codes(q: np.ndarray) -> np.ndarray:
    """Index into REGIME_CODES: 0 for -1 < Q < 0, 1 for 0 <= Q <= 3, 2 for Q > 3."""
    q = np.asarray(q, dtype=float)
    return np.where(q < 0.0, 0, np.where(q <= 3.0, 1, 2)).astype(np.int8)


def regime_of(q: float) -> Regime:
    if q <= -1.0:
        raise ClassificationError(f"Q = {q} is not elliptic (Q must exceed -1)")
    return REGIME_CODES[int(regime_codes(np.asarray(q)))]


def k_of_q(q: np.ndarray | float) -> np.ndarray:
    """
    Optimal constant k(Q) in Re A(xi + i eta) >= -k A(eta).

    8 (1 - Q) / (1 + Q)^2 for Q < 0, 8 on [0, 3], Q^2 - 1 for Q > 3.
    """
    q = np.asarray(q, dtype=float)
    safe = np.where(q > -1.0, q, 0.0)
    return np.select(
        [q < 0.0, q <= 3.0],
        [8.0 * (1.0 - safe) / (1.0 + safe) ** 2, np.full_like(safe, 8.0)],
        default=safe**2 - 1.0,
    )


def sigma_of_k(k: np.ndarray | float) -> np.ndarray:
    """sigma = (3/4) (4 k)^(-1/3)."""
    return 0.75 * np.cbrt(1.0 / (4.0 * np.asarray(k, dtype=float)))


def sigma_of_q(q: np.ndarray | float) -> np.ndarray:
    """Closed-form sigma branches, evaluated independently of k."""
    q = np.asarray(q, dtype=float)
    safe = np.where(q > -1.0, q, 0.0)
    negative = SIGMA_CONVEX * np.cbrt((1.0 + safe) ** 2) / np.cbrt(1.0 - safe)
    large = 3.0 / 4.0 ** (4.0 / 3.0) * np.cbrt(1.0 / np.maximum(safe**2 - 1.0, 1e-300))
    return np.select(
        [q < 0.0, q <= 3.0], [negative, np.full_like(safe, SIGMA_CONVEX)], default=large
    )


def R_of_q(q: np.ndarray | float) -> np.ndarray:
    """R(Q): 2 - Q for Q < 0, 2 on [0, 3], Q - 1 for Q > 3."""
    q = np.asarray(q, dtype=float)
    return np.select([q < 0.0, q <= 3.0], [2.0 - q, np.full_like(q, 2.0)], default=q - 1.0)


def P_of_beta(beta: np.ndarray | float) -> np.ndarray:
    """P = max(beta, 0)."""
    return np.maximum(np.asarray(beta, dtype=float), 0.0)


class RegimeClassification(BaseModel):
    """Per-node Q, regime code, k and sigma plus the global k_star and sigma_star."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    Q: np.ndarray
    regime: np.ndarray = Field(..., description="codes into REGIME_CODES")
    k: np.ndarray
    sigma: np.ndarray
    k_star: float
    sigma_star: float

    def regime_at(self, node: tuple[int, int]) -> Regime:
        return REGIME_CODES[int(self.regime[node])]

    def summary(self, strongly_convex: bool) -> RegimeSummary:
        counts = {
            regime: int(np.count_nonzero(self.regime == code))
            for code, regime in enumerate(REGIME_CODES)
        }
        return RegimeSummary(
            q_min=float(self.Q.min()),
            q_max=float(self.Q.max()),
            k_star=self.k_star,
            sigma_star=self.sigma_star,
            sigma_star_closed_form=float(sigma_of_k(self.k_star)),
            node_counts=counts,
            strongly_convex=strongly_convex,
        )


def q_grid(field: CoefficientField) -> np.ndarray:
    alpha, beta, gamma, _ = field.at_nodes()
    return q_values(alpha, beta, gamma)


def ellipticity_bound(field: CoefficientField) -> np.ndarray:
    """
    Node-wise lower bound -1 + c_ell w / sqrt(alpha gamma) that uniform ellipticity puts on Q.

    Re A at the direction xi1^2 : xi2^2 = sqrt(gamma) : sqrt(alpha) gives
    1 + Q >= 2 c_ell w / sqrt(alpha gamma), so with alpha = gamma = w this reads Q > -1 + c_ell.
    A field built without the ellipticity check (c_ell <= 0) is held to Q > -1 only.
    """
    alpha, _, gamma, weight = field.at_nodes()
    root = np.sqrt(np.maximum(alpha.real * gamma.real, np.finfo(float).tiny))
    return -1.0 + max(field.c_ell, 0.0) * weight / root


def classify_regime(field: CoefficientField) -> RegimeClassification:
    """
    Classify every node of a real field.

    Raises:
        ClassificationError: If coefficients are non-real or alpha, gamma are not positive.
        EllipticityError: If Q <= -1 + c_ell w / sqrt(alpha gamma) at some node.
    """
    q = q_grid(field)
    bound = ellipticity_bound(field)
    bad = np.argwhere(q <= bound)
    if bad.size:
        node = (int(bad[0][0]), int(bad[0][1]))
        raise EllipticityError(node, float(q[node]), float(bound[node]))

    k = k_of_q(q)
    sigma = sigma_of_k(k)
    k_star = float(k.max())
    classification = RegimeClassification(
        Q=q,
        regime=regime_codes(q),
        k=k,
        sigma=sigma,
        k_star=k_star,
        sigma_star=float(sigma.min()),
    )
    logger.info(
        "Regimes classified",
        field=field.name,
        q_min=float(q.min()),
        q_max=float(q.max()),
        k_star=k_star,
        sigma_star=classification.sigma_star,
    )
    return classification


class StrongConvexity(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    nodes: np.ndarray
    holds: bool

    @property
    def fraction(self) -> float:
        return float(np.mean(self.nodes))


def check_strong_convexity(field: CoefficientField) -> StrongConvexity:
    """
    Node-wise 0 <= beta <= 3 sqrt(alpha gamma).

    Raises:
        ClassificationError: If the coefficients are not real.
    """
    if not field.is_real():
        raise ClassificationError("strong convexity is defined for real coefficients only")
    alpha, beta, gamma, _ = field.at_nodes()
    bound = 3.0 * np.sqrt(np.maximum(alpha.real * gamma.real, 0.0))
    nodes = (beta.real >= 0.0) & (beta.real <= bound)
    return StrongConvexity(nodes=nodes, holds=bool(np.all(nodes)))


def _resampled(domain: Domain2D, step: float) -> Domain2D:
    n1 = max(int(round((domain.x1_max - domain.x1_min) / step)) + 1, 4)
    n2 = max(int(round((domain.x2_max - domain.x2_min) / step)) + 1, 4)
    return domain.model_copy(update={"n1": n1, "n2": n2})


def gradient_constant(field: CoefficientField, step: float) -> float:
    """
    max (|grad alpha| + |grad beta| + |grad gamma|) / w^(3/4) over the interior nodes of a grid of
    spacing `step`.

    Central differences are exact for quadratic coefficients; the boundary ring, where only
    one-sided differences exist, is left out.
    """
    grid = _resampled(field.domain, step)
    x1, x2 = grid.mesh()
    total = np.zeros(grid.shape)
    for values in field.coefficients(x1, x2):
        d1, d2 = np.gradient(values, grid.h1, grid.h2, edge_order=2)
        total += np.sqrt(np.abs(d1) ** 2 + np.abs(d2) ** 2)
    weight = field.weight(x1, x2)
    interior = (slice(1, -1), slice(1, -1))
    return float(np.max(total[interior] / weight[interior] ** 0.75))


def check_good_class(
    field: CoefficientField,
    fd_step: Optional[float] = None,
    tolerance: float = GOOD_CLASS_TOLERANCE,
    absolute_tolerance: float = 1e-8,
) -> GoodClassReport:
    """
    Test membership in the good class by finite differences at fd_step and fd_step / 2.

    The gradient constant is accepted when halving the step does not grow it beyond
    (1 + tolerance) times its coarse value; a blow-up signals a non-Lipschitz coefficient.

    Raises:
        ResolutionError: If fd_step leaves fewer than 4 samples per axis.
    """
    domain = field.domain
    step = fd_step or min(domain.h1, domain.h2)
    span = min(domain.x1_max - domain.x1_min, domain.x2_max - domain.x2_min)
    if step <= 0.0 or span / step < 3.0:
        raise ResolutionError(f"fd_step {step} leaves fewer than 4 samples per axis")

    is_real = field.is_real()
    coarse = gradient_constant(field, step)
    refined = gradient_constant(field, 0.5 * step)
    stable = refined <= (1.0 + tolerance) * coarse + absolute_tolerance
    in_class = bool(is_real and np.isfinite(coarse) and np.isfinite(refined) and stable)
    logger.debug(
        "Good class checked", field=field.name, coarse=coarse, refined=refined, in_class=in_class
    )
    return GoodClassReport(
        is_real=is_real,
        grad_bound_constant=coarse,
        grad_bound_constant_refined=refined,
        in_good_class=in_class,
        tolerance=tolerance,
        fd_step=step,
    )


def symbol_sup_distance(field: CoefficientField, other: CoefficientField) -> float:
    """sup over nodes and unit xi of |A - A_other| / w."""
    a1, b1, g1, weight = field.at_nodes()
    a2, b2, g2, _ = other.at_nodes()
    da, db, dg = a1 - a2, b1 - b2, g1 - g2
    worst = 0.0
    for c, s in zip(*quarter_circle(field.angular_resolution)):
        worst = max(worst, float(np.max(np.abs(symbol_values(da, db, dg, c, s)) / weight)))
    return worst


class SymbolDistance(BaseModel):
    """Distance theta of a symbol from the good class and the surrogate achieving it."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    theta: float = Field(..., ge=0.0)
    surrogate: CoefficientField
    smoothing_scale: float = Field(..., ge=0.0, description="0 when the field is already good")
    candidates: list[tuple[float, Optional[float]]] = Field(default_factory=list)

    def summary(self) -> ThetaSummary:
        return ThetaSummary(
            theta=self.theta, smoothing_scale=self.smoothing_scale, candidates=self.candidates
        )


def smoothed_surrogate(field: CoefficientField, scale: float) -> CoefficientField:
    """Real parts of the coefficients, Gaussian-smoothed with reflection at the boundary."""
    domain = field.domain
    alpha, beta, gamma, _ = field.at_nodes()
    sigma = (scale / domain.h1, scale / domain.h2)
    smooth = [gaussian_filter(v.real, sigma=sigma, mode="reflect") for v in (alpha, beta, gamma)]
    return make_field(
        f"{field.name}~{scale:g}",
        domain,
        *(grid_function(domain, v) for v in smooth),
        field.w,
        parameters={"source": field.name, "smoothing_scale": scale},
        angular_resolution=field.angular_resolution,
    )


def estimate_theta(
    field: CoefficientField,
    smoothing_scales: Sequence[float],
    fd_step: Optional[float] = None,
    tolerance: float = GOOD_CLASS_TOLERANCE,
) -> SymbolDistance:
    """
    Nearest good-class symbol among Gaussian-smoothed real parts of `field`.

    Returns theta = 0 with the field itself when it is already in the good class; otherwise the
    candidate with the smallest sup |A - A~| / w. The reported pointwise bound is
    |A - A~| <= 2 theta w |xi|^4.

    Raises:
        ParameterError: If no smoothing scale is given or a scale is not positive.
        NoSurrogateError: If no candidate is in the good class.
    """
    if not smoothing_scales:
        raise ParameterError("estimate_theta needs at least one smoothing scale")
    if any(scale <= 0.0 for scale in smoothing_scales):
        raise ParameterError("smoothing scales must be positive")

    if check_good_class(field, fd_step, tolerance).in_good_class:
        return SymbolDistance(theta=0.0, surrogate=field, smoothing_scale=0.0)

    best: Optional[tuple[float, float, CoefficientField]] = None
    candidates: list[tuple[float, Optional[float]]] = []
    for scale in smoothing_scales:
        surrogate = smoothed_surrogate(field, scale)
        if not check_good_class(surrogate, fd_step, tolerance).in_good_class:
            candidates.append((scale, None))
            continue
        theta = symbol_sup_distance(field, surrogate)
        candidates.append((scale, theta))
        if best is None or theta < best[0]:
            best = (theta, scale, surrogate)

    if best is None:
        raise NoSurrogateError(
            f"no smoothing scale in {list(smoothing_scales)} yields a good-class surrogate"
        )
    theta, scale, surrogate = best
    logger.info("Theta estimated", field=field.name, theta=theta, smoothing_scale=scale)
    return SymbolDistance(
        theta=theta, surrogate=surrogate, smoothing_scale=scale, candidates=candidates
    )
