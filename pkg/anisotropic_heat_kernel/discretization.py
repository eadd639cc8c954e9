"""
Finite-difference discretization of the divergence-form operator and its quadratic forms.

H_h = D11^T W_alpha D11 + 2 D12^T W_beta D12 + D22^T W_gamma D22 on the node grid of a Dirichlet
rectangle. D11 and D22 are centred second differences at nodes, D12 is the mixed difference at cell
centres. Grid functions are clamped on two boundary layers, so u and its normal differences vanish
there and only the remaining nodes are unknowns.
"""

from typing import Optional

import numpy as np
import scipy.sparse as sp
from pydantic import BaseModel, ConfigDict
from scipy.sparse.linalg import norm as sparse_norm

from anisotropic_heat_kernel.coefficients import CoefficientField
from anisotropic_heat_kernel.errors import (
    ParameterError,
    ResolutionError,
    ScalingError,
    SupportError,
)
from anisotropic_heat_kernel.logging_config import get_logger
from anisotropic_heat_kernel.models import Domain2D

logger = get_logger(__name__)

CLAMPED_LAYERS = 2
MIN_NODES = 6
MAX_EXPONENT_RANGE = 300.0


class GridFunction(BaseModel):
    """Complex node values on a Domain2D grid."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    domain: Domain2D
    values: np.ndarray

    @classmethod
    def of(cls, domain: Domain2D, values: np.ndarray) -> "GridFunction":
        """
        Checked constructor.

        Raises:
            ParameterError: If the shape differs from the domain's or a value is not finite.
        """
        values = np.asarray(values, dtype=complex)
        if values.shape != domain.shape:
            raise ParameterError(
                f"grid function has shape {values.shape}, domain expects {domain.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ParameterError("grid function has non-finite values")
        return cls(domain=domain, values=values)

    @classmethod
    def zeros(cls, domain: Domain2D) -> "GridFunction":
        return cls.of(domain, np.zeros(domain.shape))

    @classmethod
    def delta(cls, domain: Domain2D, node: tuple[int, int]) -> "GridFunction":
        """Discrete Dirac mass at `node`: 1 / cell area there, 0 elsewhere."""
        values = np.zeros(domain.shape, dtype=complex)
        values[node] = 1.0 / domain.cell_area
        return cls.of(domain, values)

    @property
    def cell_area(self) -> float:
        return self.domain.cell_area

    def norm(self) -> float:
        """Discrete L2 norm sqrt(h1 h2 sum |u|^2)."""
        return float(np.sqrt(self.cell_area * np.sum(np.abs(self.values) ** 2)))

    def mass(self) -> complex:
        return complex(self.cell_area * np.sum(self.values))

    def is_clamped(self, tol: float = 1e-14) -> bool:
        scale = tol * max(float(np.max(np.abs(self.values))), 1e-300)
        return bool(np.all(np.abs(self.values[clamped_mask(self.domain)]) <= scale))


def clamped_mask(domain: Domain2D) -> np.ndarray:
    """True on the two outer node layers."""
    mask = np.ones(domain.shape, dtype=bool)
    mask[CLAMPED_LAYERS:-CLAMPED_LAYERS, CLAMPED_LAYERS:-CLAMPED_LAYERS] = False
    return mask


def bump(
    domain: Domain2D,
    centre: tuple[float, float],
    radius: float,
    power: int = 6,
    frequency: Optional[tuple[float, float]] = None,
) -> GridFunction:
    """
    Compactly supported bump (1 - |x - centre|^2 / radius^2)_+^power, optionally modulated by
    exp(i frequency . x). Values on the clamped layers are set to zero.
    """
    if radius <= 0.0:
        raise ParameterError(f"bump radius must be positive, got {radius}")
    x1, x2 = domain.mesh()
    rho2 = ((x1 - centre[0]) ** 2 + (x2 - centre[1]) ** 2) / radius**2
    values = np.where(rho2 < 1.0, np.clip(1.0 - rho2, 0.0, None) ** power, 0.0).astype(complex)
    if frequency is not None:
        values = values * np.exp(1j * (frequency[0] * x1 + frequency[1] * x2))
    values[clamped_mask(domain)] = 0.0
    return GridFunction.of(domain, values)


def _require_resolution(domain: Domain2D) -> None:
    if domain.n1 < MIN_NODES or domain.n2 < MIN_NODES:
        raise ResolutionError(
            f"assembly needs at least {MIN_NODES} nodes per axis, got {domain.n1}x{domain.n2}"
        )


def _second_difference(n: int, h: float) -> sp.csr_matrix:
    """(n - 2) x n map to centred second differences at nodes 1..n-2."""
    return (sp.diags([1.0, -2.0, 1.0], [0, 1, 2], shape=(n - 2, n)) / h**2).tocsr()


def _forward_difference(n: int, h: float) -> sp.csr_matrix:
    return (sp.diags([-1.0, 1.0], [0, 1], shape=(n - 1, n)) / h).tocsr()


class DifferenceMaps(BaseModel):
    """D11, D12, D22 on the full node vector (C order) and the coefficients at their rows."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    d11: sp.csr_matrix
    d12: sp.csr_matrix
    d22: sp.csr_matrix
    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray


def difference_maps(field: CoefficientField, domain: Optional[Domain2D] = None) -> DifferenceMaps:
    domain = domain or field.domain
    _require_resolution(domain)
    n1, n2 = domain.shape
    eye1, eye2 = sp.identity(n1, format="csr"), sp.identity(n2, format="csr")
    x1, x2 = domain.x1, domain.x2

    a1, a2 = np.meshgrid(x1[1:-1], x2, indexing="ij")
    g1, g2 = np.meshgrid(x1, x2[1:-1], indexing="ij")
    c1, c2 = domain.cell_mesh()
    alpha = field.coefficients(a1, a2)[0]
    beta = field.coefficients(c1, c2)[1]
    gamma = field.coefficients(g1, g2)[2]

    return DifferenceMaps(
        d11=sp.kron(_second_difference(n1, domain.h1), eye2, format="csr"),
        d12=sp.kron(
            _forward_difference(n1, domain.h1), _forward_difference(n2, domain.h2), format="csr"
        ),
        d22=sp.kron(eye1, _second_difference(n2, domain.h2), format="csr"),
        alpha=np.broadcast_to(alpha, a1.shape).ravel(),
        beta=np.broadcast_to(beta, c1.shape).ravel(),
        gamma=np.broadcast_to(gamma, g1.shape).ravel(),
    )


class DiscreteOperator(BaseModel):
    """Sparse H_h restricted to the unclamped nodes."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    matrix: sp.csr_matrix
    domain: Domain2D
    field_name: str
    unknowns: np.ndarray
    real_coefficients: bool

    @property
    def size(self) -> int:
        return int(self.matrix.shape[0])

    def restrict(self, u: GridFunction) -> np.ndarray:
        """Unknown-node vector of a clamped grid function."""
        _require_clamped(u)
        return u.values.ravel()[self.unknowns]

    def extend(self, vector: np.ndarray) -> GridFunction:
        values = np.zeros(self.domain.n1 * self.domain.n2, dtype=complex)
        values[self.unknowns] = vector
        return GridFunction.of(self.domain, values.reshape(self.domain.shape))

    def symmetry_defect(self) -> float:
        """||H - H^T||_F / ||H||_F."""
        scale = sparse_norm(self.matrix)
        return float(sparse_norm(self.matrix - self.matrix.T) / scale) if scale else 0.0

    def apply(self, u: GridFunction) -> GridFunction:
        return self.extend(self.matrix @ self.restrict(u))


def unknown_indices(domain: Domain2D) -> np.ndarray:
    """Flat (C order) indices of the nodes not in the clamped layers."""
    return np.flatnonzero(~clamped_mask(domain).ravel())


def assemble_operator(
    field: CoefficientField, domain: Optional[Domain2D] = None
) -> DiscreteOperator:
    """
    Assemble H_h for `field` on `domain` (the field's own grid by default).

    Raises:
        ResolutionError: If the grid has fewer than 6 nodes along an axis.
    """
    domain = domain or field.domain
    maps = difference_maps(field, domain)
    full = (
        maps.d11.T @ sp.diags(maps.alpha) @ maps.d11
        + 2.0 * (maps.d12.T @ sp.diags(maps.beta) @ maps.d12)
        + maps.d22.T @ sp.diags(maps.gamma) @ maps.d22
    ).tocsr()
    unknowns = unknown_indices(domain)
    matrix = full[unknowns][:, unknowns].tocsr()

    real = bool(
        not np.any(maps.alpha.imag) and not np.any(maps.beta.imag) and not np.any(maps.gamma.imag)
    )
    if real:
        matrix = matrix.real.tocsr()
    logger.info(
        "Assembled discrete operator",
        field=field.name,
        grid=list(domain.shape),
        unknowns=int(unknowns.size),
        nonzeros=int(matrix.nnz),
        real_coefficients=real,
    )
    return DiscreteOperator(
        matrix=matrix,
        domain=domain,
        field_name=field.name,
        unknowns=unknowns,
        real_coefficients=real,
    )


def _require_clamped(u: GridFunction) -> None:
    if not u.is_clamped():
        raise SupportError("grid function must vanish on the two clamped boundary layers")


def _sesquilinear(maps: DifferenceMaps, f: np.ndarray, g: np.ndarray, cell_area: float) -> complex:
    """h1 h2 sum of alpha D11f conj(D11g) + 2 beta D12f conj(D12g) + gamma D22f conj(D22g)."""
    f, g = f.ravel(), g.ravel()
    total = (
        np.sum(maps.alpha * (maps.d11 @ f) * np.conj(maps.d11 @ g))
        + 2.0 * np.sum(maps.beta * (maps.d12 @ f) * np.conj(maps.d12 @ g))
        + np.sum(maps.gamma * (maps.d22 @ f) * np.conj(maps.d22 @ g))
    )
    return complex(cell_area * total)


def quadratic_form(field: CoefficientField, u: GridFunction) -> complex:
    """
    Discrete Q(u) = integral of alpha |u_11|^2 + 2 beta |u_12|^2 + gamma |u_22|^2.

    Equals h1 h2 u^H H_h u for the operator assembled on the same grid.

    Raises:
        SupportError: If u does not vanish on the clamped layers.
    """
    _require_clamped(u)
    maps = difference_maps(field, u.domain)
    return _sesquilinear(maps, u.values, u.values, u.cell_area)


def _twist_exponent(phi: np.ndarray, lam: float, domain: Domain2D) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    if phi.shape != domain.shape:
        raise ParameterError(f"phi has shape {phi.shape}, domain expects {domain.shape}")
    spread = abs(lam) * float(np.max(phi) - np.min(phi))
    if spread > MAX_EXPONENT_RANGE:
        raise ScalingError(
            f"lambda * range(phi) = {spread:.4g} exceeds {MAX_EXPONENT_RANGE:g}; exp would overflow"
        )
    psi = lam * phi
    # a constant shift of psi cancels between the two factors
    return psi - 0.5 * (np.max(psi) + np.min(psi))


def twisted_form(field: CoefficientField, u: GridFunction, phi: np.ndarray, lam: float) -> complex:
    """
    Q_psi(u) = Q(e^psi u, e^-psi u) with psi = lam * phi, using the same difference maps as Q.

    Raises:
        SupportError: If u does not vanish on the clamped layers.
        ScalingError: If lam * range(phi) > 300.
    """
    _require_clamped(u)
    psi = _twist_exponent(phi, lam, u.domain)
    maps = difference_maps(field, u.domain)
    return _sesquilinear(maps, np.exp(psi) * u.values, np.exp(-psi) * u.values, u.cell_area)


def central_derivatives(values: np.ndarray, domain: Domain2D) -> dict[str, np.ndarray]:
    h1, h2 = domain.h1, domain.h2
    d1, d2 = np.gradient(values, h1, h2)
    d11 = np.zeros_like(values)
    d22 = np.zeros_like(values)
    d11[1:-1, :] = (values[2:, :] - 2.0 * values[1:-1, :] + values[:-2, :]) / h1**2
    d22[:, 1:-1] = (values[:, 2:] - 2.0 * values[:, 1:-1] + values[:, :-2]) / h2**2
    d12 = np.gradient(d1, h2, axis=1)
    return {"1": d1, "2": d2, "11": d11, "22": d22, "12": d12}


def principal_form_groups(
    field: CoefficientField, u: GridFunction, phi: np.ndarray, lam: float
) -> dict[int, complex]:
    """
    The lambda^4, lambda^2 and lambda^0 groups of Q_{1, lam phi}(u), keyed by the power of lam.

    The lambda^0 group is the discrete Q(u); the other two use central differences of u and phi
    at the nodes.
    """
    _require_clamped(u)
    domain = u.domain
    _twist_exponent(phi, lam, domain)
    phi1, phi2 = np.gradient(np.asarray(phi, dtype=float), domain.h1, domain.h2)
    x1, x2 = domain.mesh()
    alpha, beta, gamma = (np.broadcast_to(c, domain.shape) for c in field.coefficients(x1, x2))

    v = u.values
    d = central_derivatives(v, domain)
    abs_u2 = np.abs(v) ** 2

    quartic = alpha * phi1**4 + 2.0 * beta * phi1**2 * phi2**2 + gamma * phi2**4
    group4 = lam**4 * np.sum(quartic * abs_u2)

    def pair(f: np.ndarray, g: np.ndarray) -> np.ndarray:
        return f * np.conj(g) + g * np.conj(f)

    group2 = lam**2 * np.sum(
        alpha * phi1**2 * (pair(v, d["11"]) - 4.0 * np.abs(d["1"]) ** 2)
        + 2.0
        * beta
        * (
            phi1 * phi2 * (pair(v, d["12"]) - pair(d["1"], d["2"]))
            - (phi2**2 * np.abs(d["1"]) ** 2 + phi1**2 * np.abs(d["2"]) ** 2)
        )
        + gamma * phi2**2 * (pair(v, d["22"]) - 4.0 * np.abs(d["2"]) ** 2)
    )
    area = domain.cell_area
    return {
        4: complex(area * group4),
        2: complex(area * group2),
        0: quadratic_form(field, u),
    }


def principal_form(
    field: CoefficientField, u: GridFunction, phi: np.ndarray, lam: float
) -> complex:
    """
    Q_{1, lam phi}(u): the top-order part of the twisted form.

    Raises:
        SupportError: If u does not vanish on the clamped layers.
        ScalingError: If lam * range(phi) > 300.
    """
    return complex(sum(principal_form_groups(field, u, phi, lam).values()))
