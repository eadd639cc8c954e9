"""
Pointwise algebra behind the lower bound Re A(xi + i eta) >= -k A(eta).

The quadratic form Gamma(x, .) on C^6 and the vectors p(x, xi, eta) are defined branch by branch
on the regime of Q(x); S(x; xi, xi, eta) = Gamma(x, p, p) holds identically, which makes S >= 0
and k optimal. Vectorized kernels take raw coefficient arrays so that sampling does not go
through a CoefficientField; the field-level wrappers evaluate one point.
"""

from typing import Callable, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy.optimize import minimize

from anisotropic_heat_kernel.coefficients import CoefficientField
from anisotropic_heat_kernel.errors import ClassificationError, NumericError
from anisotropic_heat_kernel.logging_config import get_logger
from anisotropic_heat_kernel.models import (
    REGIME_CODES,
    AlgebraParams,
    AlgebraReport,
    KTableRow,
    Regime,
)
from anisotropic_heat_kernel.symbol import (
    P_of_beta,
    R_of_q,
    k_of_q,
    q_values,
    regime_codes,
    regime_of,
    symbol_values,
)

logger = get_logger(__name__)

IDENTITY_TOLERANCE = 1e-10
K_TOLERANCE = 1e-6
GROUP_TOLERANCE = 1e-8

WeightFunction = Callable[[np.ndarray], np.ndarray]

# Gamma(x, p, q) = sum over terms of weight(Q) * (sum_{i in I} p_i) * conj(sum_{i in I} q_i)
GAMMA_TERMS: dict[Regime, list[tuple[tuple[int, ...], WeightFunction]]] = {
    Regime.Q_NEGATIVE: [
        ((0,), lambda q: q + 1.0),
        ((1,), lambda q: q + 1.0),
        ((2,), lambda q: -q),
        ((3,), lambda q: -2.0 * q),
        ((4,), lambda q: -2.0 * q),
        ((5,), lambda q: -q * (3.0 - q) ** 2 / (1.0 + q) ** 2),
    ],
    Regime.CONVEX: [
        ((0,), lambda q: (3.0 - q) / 3.0),
        ((1,), lambda q: (3.0 - q) / 3.0),
        ((0, 1), lambda q: q / 3.0),
        ((2,), lambda q: 4.0 * q / 3.0),
    ],
    Regime.Q_LARGE: [
        ((0,), lambda q: 2.0 * (q - 3.0)),
        ((1,), lambda q: np.ones_like(q)),
        ((2,), lambda q: 2.0 * (q - 1.0)),
        ((3,), lambda q: 2.0 * (q - 3.0) * (q + 1.0) * (q**2 + 3.0) / (q - 1.0)),
    ],
}


class PolarArguments(BaseModel):
    model_config = ConfigDict(frozen=True)

    x: tuple[float, float]
    z: tuple[complex, complex]
    z_prime: tuple[complex, complex]


class PVector(BaseModel):
    model_config = ConfigDict(frozen=True)

    p: tuple[float, float, float, float, float, float]
    regime: Regime


class GammaEvaluation(BaseModel):
    """Gamma's coefficient table at one Q: (index set, weight) pairs."""

    model_config = ConfigDict(frozen=True)

    regime: Regime
    q: float
    coefficients: list[tuple[tuple[int, ...], float]]

    @property
    def positive_semidefinite(self) -> bool:
        return all(weight >= 0.0 for _, weight in self.coefficients)


# ---------------------------------------------------------------------------
# Vectorized kernels
# ---------------------------------------------------------------------------


def polar_values(
    alpha: np.ndarray,
    beta: np.ndarray,
    gamma: np.ndarray,
    z1: np.ndarray,
    z2: np.ndarray,
    w1: np.ndarray,
    w2: np.ndarray,
) -> np.ndarray:
    """alpha z1^2 w1^2 + 2 beta z1 z2 w1 w2 + gamma z2^2 w2^2."""
    return alpha * z1**2 * w1**2 + 2.0 * beta * z1 * z2 * w1 * w2 + gamma * z2**2 * w2**2


def s_values(
    alpha: np.ndarray,
    beta: np.ndarray,
    gamma: np.ndarray,
    k: np.ndarray,
    xi: np.ndarray,
    xi_prime: np.ndarray,
    eta: np.ndarray,
) -> np.ndarray:
    """Re A(xi + i eta, xi' + i eta) + k A(eta); vectors carry their components on the last axis."""
    z1, z2 = xi[..., 0] + 1j * eta[..., 0], xi[..., 1] + 1j * eta[..., 1]
    w1, w2 = xi_prime[..., 0] + 1j * eta[..., 0], xi_prime[..., 1] + 1j * eta[..., 1]
    polar = polar_values(alpha, beta, gamma, z1, z2, w1, w2)
    return polar.real + k * np.real(symbol_values(alpha, beta, gamma, eta[..., 0], eta[..., 1]))


def p_components(
    alpha: np.ndarray, gamma: np.ndarray, q: np.ndarray, xi: np.ndarray, eta: np.ndarray
) -> np.ndarray:
    """p(x, xi, eta) with the six components on the last axis."""
    alpha, gamma, q = np.broadcast_arrays(
        np.asarray(alpha, dtype=float), np.asarray(gamma, dtype=float), np.asarray(q, dtype=float)
    )
    x1, x2, e1, e2 = xi[..., 0], xi[..., 1], eta[..., 0], eta[..., 1]
    ra, rg = np.sqrt(alpha), np.sqrt(gamma)
    r4 = np.sqrt(ra * rg)
    zero = np.zeros(np.broadcast_shapes(alpha.shape, x1.shape))
    codes = regime_codes(q)

    c_neg = (3.0 - q) / (1.0 + np.where(codes == 0, q, 0.0))
    negative = np.stack(
        np.broadcast_arrays(
            ra * (x1**2 - c_neg * e1**2),
            rg * (x2**2 - c_neg * e2**2),
            ra * x1**2 - rg * x2**2,
            ra * x1 * e1 + rg * x2 * e2,
            r4 * (x1 * e2 + x2 * e1),
            ra * e1**2 - rg * e2**2,
        ),
        axis=-1,
    )
    convex = np.stack(
        np.broadcast_arrays(
            ra * (x1**2 - 3.0 * e1**2),
            rg * (x2**2 - 3.0 * e2**2),
            r4 * (x1 * x2 - 3.0 * e1 * e2),
            zero,
            zero,
            zero,
        ),
        axis=-1,
    )
    d_large = (q + 3.0) / (np.where(codes == 2, q, 3.0) - 1.0)
    large = np.stack(
        np.broadcast_arrays(
            ra * x1 * e1 - rg * x2 * e2,
            ra * (x1**2 - q * e1**2) + rg * (x2**2 - q * e2**2),
            r4 * (x1 * x2 - d_large * e1 * e2),
            r4 * e1 * e2,
            zero,
            zero,
        ),
        axis=-1,
    )
    codes = np.broadcast_to(codes, negative.shape[:-1])[..., None]
    return np.where(codes == 0, negative, np.where(codes == 1, convex, large))


def gamma_values(q: np.ndarray, p: np.ndarray, p_prime: np.ndarray) -> np.ndarray:
    """Sesquilinear Gamma(x, p, p') for arrays of Q and 6-vectors."""
    q = np.asarray(q, dtype=float)
    p, p_prime = np.broadcast_arrays(np.asarray(p), np.asarray(p_prime))
    shape = np.broadcast_shapes(q.shape, p.shape[:-1])
    q = np.broadcast_to(q, shape).reshape(-1)
    p = np.broadcast_to(p, (*shape, 6)).reshape(-1, 6)
    p_prime = np.broadcast_to(p_prime, (*shape, 6)).reshape(-1, 6)
    codes = regime_codes(q)
    out = np.zeros(q.shape, dtype=complex)
    for code, regime in enumerate(REGIME_CODES):
        mask = codes == code
        if not np.any(mask):
            continue
        qm, pm, qpm = q[mask], p[mask], p_prime[mask]
        total = np.zeros(qm.shape, dtype=complex)
        for indices, weight in GAMMA_TERMS[regime]:
            left = pm[:, list(indices)].sum(axis=-1)
            right = qpm[:, list(indices)].sum(axis=-1)
            total += weight(qm) * left * np.conj(right)
        out[mask] = total
    return out.reshape(shape)


def gamma_coefficients(q: float) -> GammaEvaluation:
    """Coefficient table of Gamma at a single Q > -1."""
    regime = regime_of(q)
    q_array = np.asarray(q, dtype=float)
    return GammaEvaluation(
        regime=regime,
        q=q,
        coefficients=[
            (tuple(i + 1 for i in indices), float(weight(q_array)))
            for indices, weight in GAMMA_TERMS[regime]
        ],
    )


def gamma_psd_violations(q_grid: Sequence[float] | np.ndarray, tol: float = 0.0) -> int:
    """Number of (Q, term) pairs with a negative Gamma coefficient."""
    violations = 0
    for q in np.asarray(q_grid, dtype=float):
        violations += sum(1 for _, w in gamma_coefficients(float(q)).coefficients if w < -tol)
    return violations


def psd_q_grid(q_min: float, q_max: float, step: float) -> np.ndarray:
    count = int(round((q_max - q_min) / step)) + 1
    return q_min + step * np.arange(count)


# ---------------------------------------------------------------------------
# Field-level operations
# ---------------------------------------------------------------------------


def _point_q(field: CoefficientField, x: Sequence[float]) -> tuple[float, float, float, float]:
    alpha, beta, gamma = field.at_point(x)
    q = float(q_values(np.asarray(alpha), np.asarray(beta), np.asarray(gamma)))
    if q <= -1.0:
        raise ClassificationError(f"Q = {q:.6g} <= -1 at {tuple(x)}")
    return alpha.real, beta.real, gamma.real, q


def polar_symbol(args: PolarArguments, field: CoefficientField) -> complex:
    """A(x, z, z') = alpha z1^2 z1'^2 + 2 beta z1 z2 z1' z2' + gamma z2^2 z2'^2."""
    alpha, beta, gamma = field.at_point(args.x)
    return complex(polar_values(alpha, beta, gamma, *args.z, *args.z_prime))


def S_value(
    field: CoefficientField,
    x: Sequence[float],
    xi: Sequence[float],
    xi_prime: Sequence[float],
    eta: Sequence[float],
) -> float:
    """S(x, xi, xi', eta) = Re A(x, xi + i eta, xi' + i eta) + k(x) A(x, eta)."""
    alpha, beta, gamma, q = _point_q(field, x)
    return float(
        s_values(
            alpha,
            beta,
            gamma,
            float(k_of_q(q)),
            np.asarray(xi, dtype=float),
            np.asarray(xi_prime, dtype=float),
            np.asarray(eta, dtype=float),
        )
    )


def p_vector(
    field: CoefficientField, x: Sequence[float], xi: Sequence[float], eta: Sequence[float]
) -> PVector:
    alpha, _, gamma, q = _point_q(field, x)
    p = p_components(alpha, gamma, q, np.asarray(xi, dtype=float), np.asarray(eta, dtype=float))
    return PVector(p=tuple(float(v) for v in p), regime=regime_of(q))


def gamma_form(
    field: CoefficientField, x: Sequence[float], p: Sequence[complex], q: Sequence[complex]
) -> complex:
    """Gamma(x, p, q) with the branch chosen by Q(x)."""
    *_, q_value = _point_q(field, x)
    p_array, q_array = np.asarray(p, dtype=complex), np.asarray(q, dtype=complex)
    return complex(gamma_values(q_value, p_array, q_array))


def _random_vectors(rng: np.random.Generator, count: int) -> tuple[np.ndarray, np.ndarray]:
    return rng.normal(size=(count, 2)), rng.normal(size=(count, 2))


def identity_residuals(
    alpha: np.ndarray,
    beta: np.ndarray,
    gamma: np.ndarray,
    xi: np.ndarray,
    eta: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Relative residuals |S - Gamma(p, p)| / (1 + |S|), the S values and the Q values."""
    q = q_values(alpha, beta, gamma)
    alpha, beta, gamma = alpha.real, beta.real, gamma.real
    s = s_values(alpha, beta, gamma, k_of_q(q), xi, xi, eta)
    p = p_components(alpha, gamma, q, xi, eta)
    g = gamma_values(q, p, p)
    return np.abs(s - g) / (1.0 + np.abs(s)), s, q


def verify_identity_SG(
    field: CoefficientField, sample_count: int, rng: Optional[np.random.Generator] = None
) -> float:
    """
    Max relative residual of S(x; xi, xi, eta) = Gamma(x, p, p) over random nodes and frequencies.

    Nodes are drawn uniformly from the field's grid; xi and eta are standard normal.
    """
    rng = rng or np.random.default_rng()
    alpha, beta, gamma, _ = field.at_nodes()
    flat = rng.integers(0, alpha.size, size=sample_count)
    xi, eta = _random_vectors(rng, sample_count)
    residual, _, _ = identity_residuals(
        alpha.ravel()[flat], beta.ravel()[flat], gamma.ravel()[flat], xi, eta
    )
    return float(residual.max()) if sample_count else 0.0


STATIONARITY_TOLERANCE = 1e-4
"""Largest |grad| / max(1, |ratio|) accepted at the minimizer of the k ratio."""

REGIME_Q_RANGES: dict[Regime, tuple[float, float]] = {
    Regime.Q_NEGATIVE: (-0.9, 0.0),
    Regime.CONVEX: (0.0, 3.0),
    Regime.Q_LARGE: (3.0, 10.0),
}


def sample_regime_coefficients(
    regime: Regime, count: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Random real alpha, gamma in [0.5, 2] and beta with Q uniform over the regime's range."""
    low, high = REGIME_Q_RANGES[regime]
    q = rng.uniform(low, high, size=count)
    if regime == Regime.Q_LARGE:
        q = np.where(q <= 3.0, np.nextafter(3.0, 4.0), q)
    alpha = rng.uniform(0.5, 2.0, size=count)
    gamma = rng.uniform(0.5, 2.0, size=count)
    beta = q * np.sqrt(alpha * gamma)
    return alpha.astype(complex), beta.astype(complex), gamma.astype(complex)


def identity_residual_by_regime(
    samples_per_regime: int, rng: np.random.Generator
) -> tuple[dict[Regime, float], float]:
    """Per-regime max residual of the identity and the smallest S value seen."""
    by_regime: dict[Regime, float] = {}
    min_s = np.inf
    for regime in REGIME_CODES:
        alpha, beta, gamma = sample_regime_coefficients(regime, samples_per_regime, rng)
        xi, eta = _random_vectors(rng, samples_per_regime)
        residual, s, _ = identity_residuals(alpha, beta, gamma, xi, eta)
        by_regime[regime] = float(residual.max())
        min_s = min(min_s, float(s.min()))
    return by_regime, min_s


def _ratio(v: np.ndarray, q: float) -> float:
    xi1, xi2, angle = v
    e1, e2 = np.cos(angle), np.sin(angle)
    z1, z2 = xi1 + 1j * e1, xi2 + 1j * e2
    numerator = (z1**4 + 2.0 * q * z1**2 * z2**2 + z2**4).real
    return float(numerator / (e1**4 + 2.0 * q * e1**2 * e2**2 + e2**4))


def _ratio_gradient(v: np.ndarray, q: float, step: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of _ratio."""
    gradient = np.empty(3)
    for i in range(3):
        shift = np.zeros(3)
        shift[i] = step * max(1.0, abs(float(v[i])))
        gradient[i] = (_ratio(v + shift, q) - _ratio(v - shift, q)) / (2.0 * shift[i])
    return gradient


def optimal_k_numeric(
    q: float, starts: int = 32, rng: Optional[np.random.Generator] = None
) -> float:
    """
    -min over xi and unit eta of Re A(xi + i eta) / A(eta) for alpha = gamma = 1, beta = Q.

    Multi-start BFGS from `starts` random points plus the saddle |xi|^2 = 3 |eta|^2, xi || eta,
    then a Nelder-Mead polish of the best start. Stationarity is checked at the returned point.

    Raises:
        ClassificationError: If Q <= -1.
        NumericError: If every start fails or the returned point is not stationary.
    """
    if q <= -1.0:
        raise ClassificationError(f"Q = {q} is not elliptic")
    rng = rng or np.random.default_rng(0)
    seeds = [np.array([np.sqrt(3.0) * np.cos(0.3), np.sqrt(3.0) * np.sin(0.3), 0.3])]
    for _ in range(starts):
        seeds.append(np.array([*rng.normal(scale=2.0, size=2), rng.uniform(0.0, 2.0 * np.pi)]))

    best = None
    for seed in seeds:
        result = minimize(_ratio, seed, args=(q,), method="BFGS", options={"gtol": 1e-11})
        if not np.isfinite(result.fun):
            continue
        if best is None or result.fun < best.fun:
            best = result
    if best is None:
        raise NumericError(f"minimization of the k ratio failed from every start (Q={q})")
    # polish the best start; BFGS often stops on precision loss near the optimum
    polished = minimize(
        _ratio,
        best.x,
        args=(q,),
        method="Nelder-Mead",
        options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 20000},
    )
    point, value = (polished.x, polished.fun) if polished.fun < best.fun else (best.x, best.fun)
    gradient = float(np.linalg.norm(_ratio_gradient(point, q)))
    if gradient > STATIONARITY_TOLERANCE * max(1.0, abs(value)):
        raise NumericError(f"no descent to a stationary point for Q={q} (|grad|={gradient:.2e})")
    logger.debug("Optimal k minimized", q=q, k=-value, starts=len(seeds), gradient=gradient)
    return -float(value)


def _group_coefficient(values: Callable[[float], np.ndarray]) -> np.ndarray:
    """s^2 coefficient of a polynomial of degree <= 4 in s."""
    return (
        -values(2.0) + 16.0 * values(1.0) - 30.0 * values(0.0) + 16.0 * values(-1.0) - values(-2.0)
    ) / 24.0


def group_residual_values(
    alpha: np.ndarray,
    beta: np.ndarray,
    gamma: np.ndarray,
    xi1: np.ndarray,
    xi1_prime: np.ndarray,
    eta: np.ndarray,
) -> np.ndarray:
    """
    Residual of the xi1^2 eta1^2 / xi1^2 eta2^2 group of S - Gamma(p_xi, p_xi').

    With xi2 = xi2' = 0 the group is the part of S(xi, xi', eta) - Gamma(p(xi), p(xi')) quadratic
    in (xi1, xi1'); it must equal [alpha eta1^2 R + eta2^2 P] (xi1 - xi1')^2.
    """
    alpha, beta, gamma = (np.asarray(v, dtype=float) for v in (alpha, beta, gamma))
    xi1, xi1_prime = np.asarray(xi1, dtype=float), np.asarray(xi1_prime, dtype=float)
    eta = np.asarray(eta, dtype=float)
    q = q_values(alpha, beta, gamma)
    k = k_of_q(q)

    def difference(s: float) -> np.ndarray:
        xi = np.stack(np.broadcast_arrays(s * xi1, np.zeros_like(xi1)), axis=-1)
        xi_prime = np.stack(np.broadcast_arrays(s * xi1_prime, np.zeros_like(xi1_prime)), axis=-1)
        lhs = s_values(alpha, beta, gamma, k, xi, xi_prime, eta)
        p = p_components(alpha, gamma, q, xi, eta)
        p_prime = p_components(alpha, gamma, q, xi_prime, eta)
        return lhs - gamma_values(q, p, p_prime).real

    group = _group_coefficient(difference)
    closed = (alpha * eta[..., 0] ** 2 * R_of_q(q) + eta[..., 1] ** 2 * P_of_beta(beta)) * (
        xi1 - xi1_prime
    ) ** 2
    return np.abs(group - closed)


def group_term_residual(
    field: CoefficientField,
    x: Sequence[float],
    xi: Sequence[float],
    xi_prime: Sequence[float],
    eta: Sequence[float],
) -> float:
    """
    Absolute residual of the worked monomial group against
    [alpha eta1^2 R + eta2^2 P](xi1 - xi1')^2.

    Only the first components of xi and xi' enter the group.
    """
    alpha, beta, gamma, _ = _point_q(field, x)
    return float(
        group_residual_values(alpha, beta, gamma, xi[0], xi_prime[0], np.asarray(eta, dtype=float))
    )


def algebra_report(params: AlgebraParams, rng: np.random.Generator) -> AlgebraReport:
    """Run the identity, positivity, optimal-k and group checks and collect their residuals."""
    by_regime, min_s = identity_residual_by_regime(params.samples_per_regime, rng)
    identity = max(by_regime.values())
    violations = gamma_psd_violations(
        psd_q_grid(params.psd_q_min, params.psd_q_max, params.psd_q_step)
    )

    table = []
    for q in params.q_values:
        formula = float(k_of_q(q))
        numeric = optimal_k_numeric(q, rng=rng)
        table.append(
            KTableRow(q=q, k_formula=formula, k_numeric=numeric, abs_error=abs(numeric - formula))
        )

    group = 0.0
    for regime in REGIME_CODES:
        alpha, beta, gamma = sample_regime_coefficients(regime, params.samples_per_regime, rng)
        xi = rng.normal(size=(params.samples_per_regime, 2))
        eta = rng.normal(size=(params.samples_per_regime, 2))
        residual = group_residual_values(alpha.real, beta.real, gamma.real, xi[:, 0], xi[:, 1], eta)
        group = max(group, float(residual.max()))

    passed = (
        identity <= IDENTITY_TOLERANCE
        and violations == 0
        and all(row.abs_error <= K_TOLERANCE for row in table)
        and group <= GROUP_TOLERANCE
        and min_s >= -IDENTITY_TOLERANCE
    )
    logger.info(
        "Algebra verified",
        identity_max_residual=identity,
        psd_violations=violations,
        group_term_max_residual=group,
        passed=passed,
    )
    return AlgebraReport(
        identity_max_residual=identity,
        identity_residual_by_regime=by_regime,
        psd_violations=violations,
        k_numeric_vs_formula=table,
        group_term_max_residual=group,
        min_s_value=min_s,
        samples_per_regime=params.samples_per_regime,
        passed=passed,
    )


