"""
Finsler distances induced by the symbol.

The metric at x is the support function F*(x, v) = sup{v . xi : A(x, xi) <= 1} of the unit ball
of the quartic symbol. Distances come from shortest paths on a coprime neighbourhood stencil,
from Lax-Friedrichs sweeping for A(x, grad phi) = 1, or in closed form for constant coefficients.
Lower bounds for d_M come from mollified, rescaled distance functions whose gradient and Hessian
are certified by finite differences.
"""

from math import gcd
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.ndimage import gaussian_filter
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from anisotropic_heat_kernel.coefficients import CoefficientField, quarter_circle
from anisotropic_heat_kernel.config import settings
from anisotropic_heat_kernel.errors import (
    CertificateError,
    ConvergenceError,
    DomainError,
    MetricError,
    ParameterError,
)
from anisotropic_heat_kernel.logging_config import get_logger
from anisotropic_heat_kernel.models import DistanceMethod, DistanceSummary, Domain2D

logger = get_logger(__name__)

FAR = 1e6


class FinslerMetric(BaseModel):
    """Dual norm of a coefficient field, sampled on `angular_resolution` directions."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    field: CoefficientField
    angular_resolution: int = Field(default_factory=lambda: settings.angular_resolution)

    @property
    def domain(self) -> Domain2D:
        return self.field.domain


def dual_norm_values(
    alpha: np.ndarray,
    beta: np.ndarray,
    gamma: np.ndarray,
    v1: np.ndarray,
    v2: np.ndarray,
    resolution: int,
) -> np.ndarray:
    """
    F*(v) = max over unit omega of |v . omega| / Re A(omega)^(1/4), vectorized.

    The maximum is taken over `resolution / 2` angles on the half circle and refined by a
    parabola through the best sample and its neighbours.

    Raises:
        MetricError: If Re A(omega) <= 0 for a sampled direction.
    """
    alpha, beta, gamma, v1, v2 = np.broadcast_arrays(
        np.real(alpha), np.real(beta), np.real(gamma), np.asarray(v1, float), np.asarray(v2, float)
    )
    count = resolution // 2
    step = np.pi / count

    def ratio(theta: np.ndarray | float) -> np.ndarray:
        c, s = np.cos(theta), np.sin(theta)
        a = alpha * c**4 + 2.0 * beta * c**2 * s**2 + gamma * s**4
        if np.any(a <= 0.0):
            raise MetricError("symbol is degenerate: Re A(x, omega) <= 0 for a unit omega")
        return np.abs(v1 * c + v2 * s) / np.sqrt(np.sqrt(a))

    best = np.full(v1.shape, -np.inf)
    best_theta = np.zeros(v1.shape)
    for k in range(count):
        value = ratio(k * step)
        better = value > best
        best = np.where(better, value, best)
        best_theta = np.where(better, k * step, best_theta)

    left, right = ratio(best_theta - step), ratio(best_theta + step)
    curvature = left - 2.0 * best + right
    with np.errstate(divide="ignore", invalid="ignore"):
        shift = np.where(curvature < 0.0, 0.5 * step * (left - right) / curvature, 0.0)
    shift = np.clip(shift, -step, step)
    return np.maximum(best, ratio(best_theta + shift))


def dual_norm(metric: FinslerMetric, x: tuple[float, float], v: tuple[float, float]) -> float:
    """
    Support function of {xi : A(x, xi) <= 1} in direction v.

    Raises:
        DomainError: If x lies outside the domain.
        MetricError: If the symbol is degenerate at x.
    """
    alpha, beta, gamma = metric.field.at_point(x)
    return float(
        dual_norm_values(alpha, beta, gamma, v[0], v[1], metric.angular_resolution)
    )


class DistanceField(BaseModel):
    """Distance from a source node on the domain grid."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    source: tuple[float, float]
    source_node: tuple[int, int]
    domain: Domain2D
    values: np.ndarray
    method: DistanceMethod
    stencil_order: int = 0
    bracket: Optional[tuple[float, float]] = None

    def at(self, point: tuple[float, float]) -> float:
        """Value at the node nearest to `point`."""
        if not self.domain.contains(point):
            raise DomainError(f"point {point} lies outside the domain")
        return float(self.values[self.domain.nearest_node(point)])

    def summary(self, **extra: object) -> DistanceSummary:
        return DistanceSummary(
            source=self.source,
            method=self.method,
            stencil_order=self.stencil_order,
            max_value=float(np.max(self.values)),
            bracket=self.bracket,
            **extra,
        )


def stencil_offsets(order: int) -> list[tuple[int, int]]:
    """
    One offset per undirected stencil direction: coprime (a, b) with max(|a|, |b|) <= order.

    Order 1 gives 4 directions, order 2 gives 8 and order 3 gives 16.
    """
    if order < 1:
        raise ParameterError(f"stencil order must be >= 1, got {order}")
    offsets = []
    for a in range(0, order + 1):
        for b in range(-order, order + 1):
            if (a == 0 and b <= 0) or gcd(a, abs(b)) != 1:
                continue
            offsets.append((a, b))
    return offsets


def _snap_source(
    domain: Domain2D, source: tuple[float, float]
) -> tuple[tuple[int, int], tuple[float, float]]:
    if not domain.contains(source):
        raise DomainError(f"source {source} lies outside the domain")
    node = domain.nearest_node(source)
    return node, domain.node_point(node)


def _edge_weights(metric: FinslerMetric, a: int, b: int) -> np.ndarray:
    """Midpoint dual norm of the offset (a h1, b h2) for every edge with that offset."""
    domain = metric.domain
    i = np.arange(domain.n1 - a)
    j = np.arange(max(0, -b), domain.n2 - max(0, b))
    x1 = domain.x1_min + (i + 0.5 * a) * domain.h1
    x2 = domain.x2_min + (j + 0.5 * b) * domain.h2
    m1, m2 = np.meshgrid(x1, x2, indexing="ij")
    if metric.field.constant:
        m1, m2 = m1[:1, :1], m2[:1, :1]
    alpha, beta, gamma = metric.field.coefficients(m1, m2)
    weights = dual_norm_values(
        alpha, beta, gamma, a * domain.h1, b * domain.h2, metric.angular_resolution
    )
    return np.broadcast_to(weights, (i.size, j.size))


def _dijkstra(metric: FinslerMetric, node: tuple[int, int], order: int) -> np.ndarray:
    domain = metric.domain
    n1, n2 = domain.shape
    index = np.arange(n1 * n2).reshape(n1, n2)
    rows, cols, data = [], [], []
    for a, b in stencil_offsets(order):
        weights = _edge_weights(metric, a, b)
        j0 = max(0, -b)
        start = index[: n1 - a, j0 : n2 - max(0, b)]
        end = index[a:, j0 + b : n2 - max(0, b) + b]
        rows.append(start.ravel())
        cols.append(end.ravel())
        data.append(weights.ravel())
    graph = coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(n1 * n2,) * 2
    ).tocsr()
    values = dijkstra(graph, directed=False, indices=int(index[node]))
    return np.asarray(values).reshape(n1, n2)


def lax_friedrichs_viscosity(field: CoefficientField, resolution: int) -> float:
    """max over nodes and the unit dual sphere A = 1 of |grad_xi A| / 4."""
    alpha, beta, gamma, _ = field.at_nodes()
    alpha, beta, gamma = alpha.real, beta.real, gamma.real
    worst = 0.0
    for c, s in zip(*quarter_circle(resolution)):
        scale = (alpha * c**4 + 2.0 * beta * c**2 * s**2 + gamma * s**4) ** -0.25
        p1, p2 = c * scale, s * scale
        g1 = 4.0 * alpha * p1**3 + 4.0 * beta * p1 * p2**2
        g2 = 4.0 * beta * p1**2 * p2 + 4.0 * gamma * p2**3
        worst = max(worst, float(np.max(np.hypot(g1, g2))) / 4.0)
    return worst


def _hamiltonian(
    alpha: np.ndarray, beta: np.ndarray, gamma: np.ndarray, p1: np.ndarray, p2: np.ndarray
) -> np.ndarray:
    a = alpha * p1**4 + 2.0 * beta * p1**2 * p2**2 + gamma * p2**4
    return np.sqrt(np.sqrt(np.maximum(a, 0.0)))


def _extrapolate_boundary(phi: np.ndarray) -> None:
    phi[0, :] = np.minimum(np.maximum(2.0 * phi[1, :] - phi[2, :], phi[2, :]), phi[0, :])
    phi[-1, :] = np.minimum(np.maximum(2.0 * phi[-2, :] - phi[-3, :], phi[-3, :]), phi[-1, :])
    phi[:, 0] = np.minimum(np.maximum(2.0 * phi[:, 1] - phi[:, 2], phi[:, 2]), phi[:, 0])
    phi[:, -1] = np.minimum(np.maximum(2.0 * phi[:, -2] - phi[:, -3], phi[:, -3]), phi[:, -1])


def _fast_sweeping(
    metric: FinslerMetric, node: tuple[int, int], tolerance: float, max_iterations: int
) -> np.ndarray:
    """
    Lax-Friedrichs sweeping for A(x, grad phi)^(1/4) = 1 with phi(source) = 0.

    Each sweep updates whole rows (or columns) in order, so information travels the full grid
    along the sweep axis per pass; four orderings make one iteration.
    """
    domain = metric.domain
    h1, h2 = domain.h1, domain.h2
    alpha, beta, gamma, _ = metric.field.at_nodes()
    alpha, beta, gamma = alpha.real, beta.real, gamma.real
    sigma = lax_friedrichs_viscosity(metric.field, metric.angular_resolution)
    denominator = sigma / h1 + sigma / h2

    phi = np.full(domain.shape, FAR)
    phi[node] = 0.0

    def update_rows(i: int) -> None:
        sl = slice(1, -1)
        east, west = phi[i + 1, sl], phi[i - 1, sl]
        north, south = phi[i, 2:], phi[i, :-2]
        p1 = (east - west) / (2.0 * h1)
        p2 = (north - south) / (2.0 * h2)
        h = _hamiltonian(alpha[i, sl], beta[i, sl], gamma[i, sl], p1, p2)
        candidate = (
            1.0 - h + sigma * (east + west) / (2.0 * h1) + sigma * (north + south) / (2.0 * h2)
        ) / denominator
        phi[i, sl] = np.minimum(phi[i, sl], candidate)

    def update_columns(j: int) -> None:
        sl = slice(1, -1)
        east, west = phi[2:, j], phi[:-2, j]
        north, south = phi[sl, j + 1], phi[sl, j - 1]
        p1 = (east - west) / (2.0 * h1)
        p2 = (north - south) / (2.0 * h2)
        h = _hamiltonian(alpha[sl, j], beta[sl, j], gamma[sl, j], p1, p2)
        candidate = (
            1.0 - h + sigma * (east + west) / (2.0 * h1) + sigma * (north + south) / (2.0 * h2)
        ) / denominator
        phi[sl, j] = np.minimum(phi[sl, j], candidate)

    n1, n2 = domain.shape
    orderings = [
        (update_rows, range(1, n1 - 1)),
        (update_rows, range(n1 - 2, 0, -1)),
        (update_columns, range(1, n2 - 1)),
        (update_columns, range(n2 - 2, 0, -1)),
    ]
    residual = np.inf
    for iteration in range(1, max_iterations + 1):
        previous = phi.copy()
        for update, order in orderings:
            for line in order:
                update(line)
                phi[node] = 0.0
            _extrapolate_boundary(phi)
            phi[node] = 0.0
        residual = float(np.max(np.abs(phi - previous)))
        if residual < tolerance:
            logger.debug("Sweeping converged", iterations=iteration, residual=residual)
            return phi
    raise ConvergenceError(
        f"fast sweeping did not converge within {max_iterations} iterations", residual
    )


def constant_distance_field(metric: FinslerMetric, source: tuple[float, float]) -> DistanceField:
    """
    F*(x - source) on the grid for constant coefficients.

    Raises:
        ParameterError: If the coefficients are not constant.
    """
    field = metric.field
    if not field.constant:
        raise ParameterError("the closed-form distance needs constant coefficients")
    domain = metric.domain
    node, point = _snap_source(domain, source)
    x1, x2 = domain.mesh()
    alpha, beta, gamma = field.at_point(point)
    values = dual_norm_values(
        alpha, beta, gamma, x1 - point[0], x2 - point[1], metric.angular_resolution
    )
    return DistanceField(
        source=point,
        source_node=node,
        domain=domain,
        values=values,
        method=DistanceMethod.CLOSED_FORM,
    )


def distance_field(
    metric: FinslerMetric,
    source: tuple[float, float],
    method: DistanceMethod = DistanceMethod.DIJKSTRA_STENCIL,
    stencil_order: int = 3,
    tolerance: Optional[float] = None,
    max_iterations: Optional[int] = None,
) -> DistanceField:
    """
    Distance from `source` (snapped to the nearest node) to every node.

    Raises:
        DomainError: If the source lies outside the domain.
        ConvergenceError: If sweeping does not converge; carries the last residual.
    """
    if method == DistanceMethod.CLOSED_FORM:
        return constant_distance_field(metric, source)

    domain = metric.domain
    node, point = _snap_source(domain, source)
    if method == DistanceMethod.DIJKSTRA_STENCIL:
        values = _dijkstra(metric, node, stencil_order)
    elif method == DistanceMethod.FAST_SWEEPING:
        values = _fast_sweeping(
            metric,
            node,
            tolerance or settings.sweeping_tolerance,
            max_iterations or settings.sweeping_max_iterations,
        )
        stencil_order = 1
    else:
        raise ParameterError(f"unknown distance method '{method}'")

    if not np.all(np.isfinite(values)):
        raise MetricError("distance is not finite on the whole grid")
    logger.info(
        "Distance field computed",
        method=str(method),
        source=point,
        stencil_order=stencil_order,
        max_value=float(values.max()),
    )
    return DistanceField(
        source=point,
        source_node=node,
        domain=domain,
        values=values,
        method=method,
        stencil_order=stencil_order,
    )


def lipschitz_defect(metric: FinslerMetric, dist: DistanceField) -> float:
    """max over axis edges of |phi(y) - phi(x)| - F*(midpoint, y - x); <= 0 when 1-Lipschitz."""
    worst = -np.inf
    for a, b in ((1, 0), (0, 1)):
        weights = _edge_weights(metric, a, b)
        n1, n2 = dist.values.shape
        difference = np.abs(dist.values[a:, b:] - dist.values[: n1 - a, : n2 - b])
        worst = max(worst, float(np.max(difference - weights)))
    return worst


class AdmissibleCertificate(BaseModel):
    """Finite-difference certificate that phi lies in the class with A(grad phi) <= 1 and M."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    phi: np.ndarray
    domain: Domain2D
    M: float = Field(..., gt=0.0)
    sup_A_grad: float
    sup_hessian_ratio: float
    ew_gradient_constant: float = Field(..., description="sup |grad phi| w^(1/4), reported only")
    admissible: bool
    tolerance: float

    def lower_bound(self, x: tuple[float, float], x_prime: tuple[float, float]) -> float:
        """phi(x') - phi(x), a lower bound for d_M(x, x')."""
        if not self.admissible:
            raise CertificateError("phi is not admissible; it certifies no lower bound")
        return float(
            self.phi[self.domain.nearest_node(x_prime)] - self.phi[self.domain.nearest_node(x)]
        )


def certify_admissible(
    metric: FinslerMetric, phi: np.ndarray, M: float, tolerance: float = 1e-6
) -> AdmissibleCertificate:
    """
    sup A(x, grad phi) and sup |Hess phi| w^(1/2) over interior nodes by central differences.

    admissible iff sup A <= 1 + tolerance and the Hessian ratio <= M.
    """
    domain = metric.domain
    phi = np.asarray(phi, dtype=float)
    if phi.shape != domain.shape:
        raise ParameterError(f"phi has shape {phi.shape}, expected {domain.shape}")
    if M <= 0.0:
        raise ParameterError(f"M must be positive, got {M}")

    g1, g2 = np.gradient(phi, domain.h1, domain.h2)
    h11, h12 = np.gradient(g1, domain.h1, domain.h2)
    _, h22 = np.gradient(g2, domain.h1, domain.h2)
    alpha, beta, gamma, weight = metric.field.at_nodes()
    a = np.real(alpha * g1**4 + 2.0 * beta * g1**2 * g2**2 + gamma * g2**4)
    hessian = np.sqrt(h11**2 + 2.0 * h12**2 + h22**2) * np.sqrt(weight)
    ew = np.hypot(g1, g2) * weight**0.25

    interior = (slice(1, -1), slice(1, -1))
    sup_a = float(np.max(a[interior]))
    sup_hessian = float(np.max(hessian[interior]))
    return AdmissibleCertificate(
        phi=phi,
        domain=domain,
        M=M,
        sup_A_grad=sup_a,
        sup_hessian_ratio=sup_hessian,
        ew_gradient_constant=float(np.max(ew[interior])),
        admissible=bool(sup_a <= 1.0 + tolerance and sup_hessian <= M),
        tolerance=tolerance,
    )


def mollify_phi(phi: np.ndarray, domain: Domain2D, scale: float) -> np.ndarray:
    """
    Gaussian smoothing of phi with standard deviation `scale`, reflected at the boundary.

    Raises:
        ParameterError: If scale is smaller than the grid spacing.
    """
    if scale < min(domain.h1, domain.h2):
        raise ParameterError(
            f"smoothing scale {scale} is below the grid spacing {min(domain.h1, domain.h2)}"
        )
    return gaussian_filter(
        np.asarray(phi, dtype=float), sigma=(scale / domain.h1, scale / domain.h2), mode="reflect"
    )


def certified_bracket(
    metric: FinslerMetric,
    dist: DistanceField,
    scale: float,
    target: tuple[float, float],
    M: Optional[float] = None,
) -> tuple[AdmissibleCertificate, tuple[float, float]]:
    """
    Bracket d_M(source, target) between a certified lower bound and the computed distance.

    The distance function is mollified at `scale`, rescaled so that sup A(grad phi) = 1 and
    certified; M defaults to the measured Hessian ratio.
    """
    smooth = mollify_phi(dist.values, dist.domain, scale)
    trial = certify_admissible(metric, smooth, M=1.0)
    if trial.sup_A_grad > 1.0:
        smooth = smooth / trial.sup_A_grad**0.25
        trial = certify_admissible(metric, smooth, M=1.0)
    certificate = certify_admissible(metric, smooth, M or max(trial.sup_hessian_ratio, 1e-12))
    upper = dist.at(target)
    lower = certificate.lower_bound(dist.source, target) if certificate.admissible else 0.0
    logger.info(
        "Distance bracket certified",
        scale=scale,
        M=certificate.M,
        lower=lower,
        upper=upper,
        admissible=certificate.admissible,
    )
    return certificate, (lower, upper)
