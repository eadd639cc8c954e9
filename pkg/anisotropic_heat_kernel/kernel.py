"""
Heat kernels G(x, x', t) of the fourth-order operator.

Constant coefficients: exact Fourier quadrature (2 pi)^-2 int exp(i xi . z - t A(xi)) d xi on a
truncated, rescaled lattice. Variable coefficients: the discrete operator H_h and the action of
exp(-t H_h) on a discrete Dirac mass, by shift-and-invert Krylov or Crank-Nicolson.
"""

from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
from pydantic import BaseModel, ConfigDict
from scipy.linalg import expm
from scipy.sparse.linalg import splu

from anisotropic_heat_kernel.coefficients import CoefficientField, quarter_circle
from anisotropic_heat_kernel.config import settings
from anisotropic_heat_kernel.discretization import (
    DiscreteOperator,
    GridFunction,
    assemble_operator,
    clamped_mask,
)
from anisotropic_heat_kernel.errors import (
    ClassificationError,
    ParameterError,
    SolverError,
    SupportError,
)
from anisotropic_heat_kernel.logging_config import get_logger
from anisotropic_heat_kernel.models import Domain2D, KernelMetadata, KernelMethod

logger = get_logger(__name__)

KRYLOV_MAX_DIMENSION = 150
KRYLOV_SHIFT_FRACTION = 0.1
CN_START_STEPS = 16
CN_MAX_STEPS = 2**15
MASS_WINDOW = 40.0
MASS_SPACING = 0.5


# ---------------------------------------------------------------------------
# Constant coefficients: Fourier quadrature
# ---------------------------------------------------------------------------


class FourierLattice(BaseModel):
    """Trapezoid lattice in zeta = t^(1/4) xi with the weighted values of exp(-A(zeta))."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    nodes: np.ndarray
    weighted_symbol: np.ndarray
    half_width: float


def constant_coefficients(field: CoefficientField) -> tuple[complex, complex, complex]:
    if not field.constant:
        raise ParameterError(f"field '{field.name}' does not have constant coefficients")
    a, b, g = field.coefficients(np.zeros(1), np.zeros(1))
    return complex(a[0]), complex(b[0]), complex(g[0])


def fourier_lattice(
    field: CoefficientField, lattice: Optional[int] = None, cutoff: Optional[float] = None
) -> FourierLattice:
    """
    Box [-L, L]^2 with exp(-Re A(zeta)) < cutoff outside, L = (-ln cutoff / min Re A(omega))^(1/4).

    Raises:
        ParameterError: If the field is not constant or the lattice is too small.
        ClassificationError: If Re A(omega) <= 0 for some unit omega.
    """
    lattice = lattice or settings.fourier_lattice
    cutoff = cutoff or settings.fourier_cutoff
    if lattice < 16:
        raise ParameterError(f"Fourier lattice needs at least 16 points per axis, got {lattice}")
    alpha, beta, gamma = constant_coefficients(field)

    cos, sin = quarter_circle(field.angular_resolution)
    a_min = float(np.min(np.real(alpha * cos**4 + 2.0 * beta * cos**2 * sin**2 + gamma * sin**4)))
    if a_min <= 0.0:
        raise ClassificationError(
            f"symbol of '{field.name}' is not elliptic: min Re A = {a_min:.4g}"
        )

    half_width = (-np.log(cutoff) / a_min) ** 0.25
    nodes = np.linspace(-half_width, half_width, lattice)
    weights = np.full(lattice, nodes[1] - nodes[0])
    weights[[0, -1]] *= 0.5

    z1, z2 = np.meshgrid(nodes, nodes, indexing="ij")
    symbol = alpha * z1**4 + 2.0 * beta * z1**2 * z2**2 + gamma * z2**4
    return FourierLattice(
        nodes=nodes,
        weighted_symbol=np.exp(-symbol) * np.outer(weights, weights),
        half_width=float(half_width),
    )


def _check_time(t: float) -> None:
    if not t > 0.0:
        raise ParameterError(f"time must be positive, got {t}")


def fourier_kernel_grid(
    field: CoefficientField,
    z1: np.ndarray,
    z2: np.ndarray,
    t: float,
    lattice: Optional[FourierLattice] = None,
) -> np.ndarray:
    """G on the tensor grid z1 x z2 (shape (len(z1), len(z2)))."""
    _check_time(t)
    lattice = lattice or fourier_lattice(field)
    scale = t**-0.25
    e1 = np.exp(1j * np.outer(np.asarray(z1, dtype=float) * scale, lattice.nodes))
    e2 = np.exp(1j * np.outer(np.asarray(z2, dtype=float) * scale, lattice.nodes))
    return (e1 @ lattice.weighted_symbol @ e2.T) / (4.0 * np.pi**2 * np.sqrt(t))


def fourier_kernel_points(
    field: CoefficientField,
    z: np.ndarray,
    t: float,
    lattice: Optional[FourierLattice] = None,
) -> np.ndarray:
    """G at scattered displacements z of shape (m, 2)."""
    _check_time(t)
    lattice = lattice or fourier_lattice(field)
    z = np.atleast_2d(np.asarray(z, dtype=float)) * t**-0.25
    e1 = np.exp(1j * np.outer(z[:, 0], lattice.nodes))
    e2 = np.exp(1j * np.outer(z[:, 1], lattice.nodes))
    return np.sum((e1 @ lattice.weighted_symbol) * e2, axis=1) / (4.0 * np.pi**2 * np.sqrt(t))


def kernel_constant_fourier(
    field: CoefficientField,
    z: tuple[float, float] | np.ndarray,
    t: float,
    lattice: Optional[FourierLattice] = None,
) -> complex:
    """
    G(z, t) for a constant-coefficient field.

    Raises:
        ParameterError: If t <= 0 or the field is not constant.
    """
    return complex(fourier_kernel_points(field, np.asarray(z, dtype=float)[None, :], t, lattice)[0])


def fourier_kernel_mass(
    field: CoefficientField, t: float, lattice: Optional[FourierLattice] = None
) -> complex:
    """Trapezoid integral of G(., t) over |z_i| <= 40 t^(1/4) with spacing 0.5 t^(1/4)."""
    _check_time(t)
    lattice = lattice or fourier_lattice(field)
    count = int(round(2.0 * MASS_WINDOW / MASS_SPACING)) + 1
    axis = np.linspace(-MASS_WINDOW, MASS_WINDOW, count) * t**0.25
    weights = np.full(count, MASS_SPACING * t**0.25)
    weights[[0, -1]] *= 0.5
    values = fourier_kernel_grid(field, axis, axis, t, lattice)
    return complex(weights @ values @ weights)


# ---------------------------------------------------------------------------
# Variable coefficients: exp(-t H_h)
# ---------------------------------------------------------------------------


def _factorized(matrix: sp.csr_matrix, shift: float):
    """Solver for (I + shift H) x = b; real factorizations solve real and imaginary parts apart."""
    lhs = (sp.identity(matrix.shape[0], format="csc", dtype=matrix.dtype) + shift * matrix).tocsc()
    try:
        lu = splu(lhs)
    except RuntimeError as exc:
        raise SolverError(f"sparse LU of I + {shift:.3g} H failed: {exc}") from exc
    if np.iscomplexobj(lhs.data):
        return lambda b: lu.solve(np.asarray(b, dtype=complex))
    return lambda b: (
        lu.solve(np.ascontiguousarray(b.real)) + 1j * lu.solve(np.ascontiguousarray(b.imag))
    )


def krylov_action(
    matrix: sp.csr_matrix,
    vector: np.ndarray,
    t: float,
    tolerance: Optional[float] = None,
    max_dimension: int = KRYLOV_MAX_DIMENSION,
) -> np.ndarray:
    """
    exp(-t H) v by shift-and-invert Arnoldi on (I + g H)^-1 with g = t / 10.

    The Krylov space is grown until two successive approximations agree to `tolerance` relative.

    Raises:
        SolverError: If `max_dimension` vectors do not reach the tolerance.
    """
    tolerance = tolerance or settings.krylov_tolerance
    norm0 = float(np.linalg.norm(vector))
    if norm0 == 0.0:
        return np.zeros_like(vector, dtype=complex)
    shift = KRYLOV_SHIFT_FRACTION * t
    solve = _factorized(matrix, shift)

    n = vector.size
    basis = np.zeros((n, max_dimension + 1), dtype=complex)
    hessenberg = np.zeros((max_dimension + 1, max_dimension), dtype=complex)
    basis[:, 0] = vector / norm0
    previous: Optional[np.ndarray] = None
    change = np.inf

    for j in range(max_dimension):
        w = solve(basis[:, j])
        for _ in range(2):
            coefficients = basis[:, : j + 1].conj().T @ w
            w = w - basis[:, : j + 1] @ coefficients
            hessenberg[: j + 1, j] += coefficients
        hessenberg[j + 1, j] = np.linalg.norm(w)
        m = j + 1

        projected = hessenberg[:m, :m]
        inverse = np.linalg.solve(projected, np.eye(m))
        small = expm(-(t / shift) * (inverse - np.eye(m)))[:, 0]
        approximation = norm0 * (basis[:, :m] @ small)

        breakdown = abs(hessenberg[j + 1, j]) <= 1e-14 * np.abs(projected).max()
        if previous is not None:
            scale = max(np.linalg.norm(approximation), 1e-300)
            change = float(np.linalg.norm(approximation - previous) / scale)
            logger.debug("Krylov step", dimension=m, change=change)
            if change <= tolerance:
                logger.info("Krylov exponential converged", dimension=m, change=change, t=t)
                return approximation
        if breakdown:
            return approximation
        previous = approximation
        basis[:, j + 1] = w / hessenberg[j + 1, j]

    raise SolverError(f"Krylov action did not converge in {max_dimension} vectors", residual=change)


def crank_nicolson_action(
    matrix: sp.csr_matrix,
    vector: np.ndarray,
    t: float,
    tolerance: Optional[float] = None,
    start_steps: int = CN_START_STEPS,
    max_steps: int = CN_MAX_STEPS,
) -> np.ndarray:
    """
    exp(-t H) v by Crank-Nicolson, the first step replaced by two backward-Euler half steps.

    The step count doubles until two successive results agree to `tolerance` relative.

    Raises:
        SolverError: If `max_steps` steps do not reach the tolerance.
    """
    tolerance = tolerance or settings.crank_nicolson_tolerance
    if not np.any(vector):
        return np.zeros_like(vector, dtype=complex)

    def integrate(steps: int) -> np.ndarray:
        dt = t / steps
        solve = _factorized(matrix, 0.5 * dt)
        explicit = (sp.identity(matrix.shape[0], format="csr") - 0.5 * dt * matrix).tocsr()
        u = solve(solve(np.asarray(vector, dtype=complex)))
        for _ in range(steps - 1):
            u = solve(explicit @ u)
        return u

    steps = start_steps
    coarse = integrate(steps)
    change = np.inf
    while steps < max_steps:
        steps *= 2
        fine = integrate(steps)
        change = float(np.linalg.norm(fine - coarse) / max(np.linalg.norm(fine), 1e-300))
        logger.debug("Crank-Nicolson doubling", steps=steps, change=change)
        if change <= tolerance:
            logger.info("Crank-Nicolson converged", steps=steps, change=change, t=t)
            return fine
        coarse = fine
    raise SolverError(f"Crank-Nicolson did not converge with {max_steps} steps", residual=change)


def evolve(
    operator: DiscreteOperator,
    u0: GridFunction,
    t: float,
    method: KernelMethod = KernelMethod.KRYLOV_EXPONENTIAL,
    tolerance: Optional[float] = None,
) -> GridFunction:
    """
    Approximate exp(-t H_h) u0.

    Raises:
        ParameterError: If t < 0, the grids differ or the method is not a time stepper.
        SupportError: If u0 does not vanish on the clamped layers.
        SolverError: If the linear algebra fails or does not converge.
    """
    if t < 0.0:
        raise ParameterError(f"evolution time must be non-negative, got {t}")
    if u0.domain != operator.domain:
        raise ParameterError("initial datum and operator live on different grids")
    if t == 0.0:
        return u0
    vector = operator.restrict(u0)
    if method == KernelMethod.KRYLOV_EXPONENTIAL:
        result = krylov_action(operator.matrix, vector, t, tolerance)
    elif method == KernelMethod.CRANK_NICOLSON:
        result = crank_nicolson_action(operator.matrix, vector, t, tolerance)
    else:
        raise ParameterError(f"evolve does not support method '{method}'")
    return operator.extend(result)


# ---------------------------------------------------------------------------
# Kernel slices
# ---------------------------------------------------------------------------


class KernelSlice(BaseModel):
    """G(., x', t) on the grid for a fixed source node and several times."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    source: tuple[int, int]
    domain: Domain2D
    times: list[float]
    values: list[np.ndarray]
    method: KernelMethod

    @property
    def source_point(self) -> tuple[float, float]:
        return self.domain.node_point(self.source)

    def at(self, node: tuple[int, int], index: int) -> complex:
        return complex(self.values[index][node])

    def mass(self) -> list[float]:
        return [float(np.real(self.domain.cell_area * np.sum(v))) for v in self.values]

    def metadata(
        self, symmetry_defect: Optional[float] = None, files: Sequence[str] = ()
    ) -> KernelMetadata:
        return KernelMetadata(
            source=self.source,
            source_point=self.source_point,
            times=self.times,
            method=self.method,
            domain=self.domain,
            mass=self.mass(),
            symmetry_defect=symmetry_defect,
            files=list(files),
        )


def _check_times(times: Sequence[float]) -> list[float]:
    times = [float(t) for t in times]
    if not times:
        raise ParameterError("at least one time is required")
    if any(t <= 0.0 for t in times):
        raise ParameterError(f"times must be positive, got {times}")
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ParameterError(f"times must be strictly increasing, got {times}")
    return times


def kernel_slice(
    field: CoefficientField,
    source: tuple[int, int],
    times: Sequence[float],
    method: KernelMethod = KernelMethod.KRYLOV_EXPONENTIAL,
    domain: Optional[Domain2D] = None,
    operator: Optional[DiscreteOperator] = None,
    tolerance: Optional[float] = None,
) -> KernelSlice:
    """
    Kernel columns G(., source, t) for increasing times.

    Time steppers start from the discrete Dirac mass at `source` and advance through the times
    in order; the Fourier method evaluates the full-plane kernel at the grid nodes.

    Raises:
        ParameterError: If times are not positive and increasing.
        SupportError: If a time stepper is asked for a source on the clamped layers.
    """
    domain = domain or (operator.domain if operator is not None else field.domain)
    times = _check_times(times)
    source = (int(source[0]), int(source[1]))
    if not (0 <= source[0] < domain.n1 and 0 <= source[1] < domain.n2):
        raise ParameterError(f"source node {source} is outside the {domain.n1}x{domain.n2} grid")

    values: list[np.ndarray] = []
    if method == KernelMethod.FOURIER_CONSTANT:
        lattice = fourier_lattice(field)
        xs1, xs2 = domain.node_point(source)
        for t in times:
            values.append(fourier_kernel_grid(field, domain.x1 - xs1, domain.x2 - xs2, t, lattice))
    else:
        if clamped_mask(domain)[source]:
            raise SupportError(f"source node {source} lies on the clamped boundary layers")
        operator = operator or assemble_operator(field, domain)
        current = GridFunction.delta(domain, source)
        elapsed = 0.0
        for t in times:
            current = evolve(operator, current, t - elapsed, method, tolerance)
            elapsed = t
            values.append(current.values)

    logger.info(
        "Kernel slice computed",
        field=field.name,
        method=str(method),
        source=list(source),
        times=times,
    )
    return KernelSlice(source=source, domain=domain, times=times, values=values, method=method)


def symmetry_defect(first: KernelSlice, second: KernelSlice) -> float:
    """max_t |G(a, b, t) - G(b, a, t)| / max |G| for slices sourced at a and b."""
    if first.domain != second.domain or first.times != second.times:
        raise ParameterError("slices must share grid and times")
    defect, scale = 0.0, 0.0
    for u, v in zip(first.values, second.values):
        defect = max(defect, abs(u[second.source] - v[first.source]))
        scale = max(scale, float(np.max(np.abs(u))), float(np.max(np.abs(v))))
    return defect / scale if scale else 0.0
