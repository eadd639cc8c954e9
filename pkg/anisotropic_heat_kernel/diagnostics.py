"""
Measured constants of the weighted Sobolev and interpolation hypotheses.

Every quantity is a supremum or infimum over a finite family of smooth bumps, so the reported
constants are lower bounds for the existential constants, never proofs of them.
"""

from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from anisotropic_heat_kernel.coefficients import CoefficientField
from anisotropic_heat_kernel.discretization import (
    CLAMPED_LAYERS,
    GridFunction,
    assemble_operator,
    bump,
    central_derivatives,
    quadratic_form,
)
from anisotropic_heat_kernel.errors import ParameterError
from anisotropic_heat_kernel.logging_config import get_logger
from anisotropic_heat_kernel.models import Domain2D

logger = get_logger(__name__)

GARDING_TOLERANCE = 1e-8
DEFAULT_S_GRID = tuple(float(s) for s in np.linspace(0.5, 1.0, 51))
DEFAULT_EPSILONS = (1e-3, 1e-2, 1e-1, 1.0)
DEFAULT_LAMBDAS = (0.5, 1.0, 2.0)
DERIVATIVE_PAIRS = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2))


class BumpFamily(BaseModel):
    """Bumps (1 - rho^2)^power for every radius at every centre, in physical units."""

    model_config = ConfigDict(frozen=True)

    radii: list[float]
    centres: list[tuple[float, float]]
    power: int = 6

    def fits(self, domain: Domain2D, centre: tuple[float, float], radius: float) -> bool:
        margin = (CLAMPED_LAYERS + 1) * max(domain.h1, domain.h2)
        return (
            domain.x1_min + margin <= centre[0] - radius
            and centre[0] + radius <= domain.x1_max - margin
            and domain.x2_min + margin <= centre[1] - radius
            and centre[1] + radius <= domain.x2_max - margin
        )

    def materialize(self, domain: Domain2D) -> list[tuple[float, GridFunction]]:
        """(radius, bump) pairs whose support stays clear of the clamped layers."""
        return [
            (radius, bump(domain, centre, radius, self.power))
            for centre in self.centres
            for radius in self.radii
            if self.fits(domain, centre, radius)
        ]


def default_bump_family(domain: Domain2D, count: int = 5) -> BumpFamily:
    """Geometric radii from 6 h to 0.45 of the half width, at the centre and four offsets."""
    h = max(domain.h1, domain.h2)
    half = 0.5 * min(domain.x1_max - domain.x1_min, domain.x2_max - domain.x2_min)
    c1 = 0.5 * (domain.x1_min + domain.x1_max)
    c2 = 0.5 * (domain.x2_min + domain.x2_max)
    offset = 0.25 * half
    return BumpFamily(
        radii=[float(r) for r in np.geomspace(6.0 * h, 0.45 * half, count)],
        centres=[
            (c1, c2),
            (c1 + offset, c2),
            (c1 - offset, c2),
            (c1, c2 + offset),
            (c1 + offset, c2 - offset),
        ],
    )


def random_bumps(
    domain: Domain2D, count: int, rng: np.random.Generator, max_frequency: float = 4.0
) -> list[GridFunction]:
    """
    `count` bumps with random centre, radius and plane-wave modulation, all clear of the clamped
    layers. Radii lie between 8 h and 0.4 of the half width.
    """
    if count < 1:
        raise ParameterError(f"count must be positive, got {count}")
    h = max(domain.h1, domain.h2)
    half = 0.5 * min(domain.x1_max - domain.x1_min, domain.x2_max - domain.x2_min)
    centre = (0.5 * (domain.x1_min + domain.x1_max), 0.5 * (domain.x2_min + domain.x2_max))
    margin = (CLAMPED_LAYERS + 1) * h
    samples = []
    for _ in range(count):
        radius = float(rng.uniform(8.0 * h, 0.4 * half))
        reach = half - radius - margin
        offset = rng.uniform(-reach, reach, size=2) if reach > 0.0 else np.zeros(2)
        frequency = rng.uniform(-max_frequency, max_frequency, size=2)
        samples.append(
            bump(
                domain,
                (centre[0] + float(offset[0]), centre[1] + float(offset[1])),
                radius,
                frequency=(float(frequency[0]), float(frequency[1])),
            )
        )
    return samples


class InterpolationRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    k: int
    l: int
    lam: float
    epsilon: float
    constant: float


class HypothesisDiagnostics(BaseModel):
    """Measured (H1), (H2) and interpolation constants over a bump family."""

    model_config = ConfigDict(frozen=True)

    s_estimate: float = Field(..., ge=0.5, le=1.0)
    h1_constant: float
    h1_by_s: list[tuple[float, float]]
    h2_table: list[tuple[float, float]]
    eq8_table: list[InterpolationRow]
    garding_constant: float = Field(
        ..., description="min over the family of Re Q(u) / int w |D^2 u|^2"
    )
    family_size: int


class BumpMeasures(BaseModel):
    """Discrete integrals of one bump."""

    model_config = ConfigDict(frozen=True)

    sup: float
    l2_squared: float
    re_q: float
    grad_half_weight: float
    hessian_weight: float
    mixed: dict[tuple[int, int], float]


def measure_bump(field: CoefficientField, u: GridFunction) -> BumpMeasures:
    domain = u.domain
    area = domain.cell_area
    x1, x2 = domain.mesh()
    w = field.weight(x1, x2)
    d = central_derivatives(u.values, domain)
    norms = {
        0: np.abs(u.values),
        1: np.sqrt(np.abs(d["1"]) ** 2 + np.abs(d["2"]) ** 2),
        2: np.sqrt(np.abs(d["11"]) ** 2 + 2.0 * np.abs(d["12"]) ** 2 + np.abs(d["22"]) ** 2),
    }
    mixed = {
        (k, l): float(area * np.sum(w ** ((k + l) / 4.0) * norms[k] * norms[l]))
        for k, l in DERIVATIVE_PAIRS
    }
    return BumpMeasures(
        sup=float(np.max(norms[0])),
        l2_squared=float(area * np.sum(norms[0] ** 2)),
        re_q=float(np.real(quadratic_form(field, u))),
        grad_half_weight=float(area * np.sum(np.sqrt(w) * norms[1] ** 2)),
        hessian_weight=float(area * np.sum(w * norms[2] ** 2)),
        mixed=mixed,
    )


def h1_ratio(measures: BumpMeasures, s: float) -> float:
    """||u||_inf / ([Re Q(u)]^(s/2) ||u||_2^(1-s))."""
    return measures.sup / (measures.re_q ** (s / 2.0) * measures.l2_squared ** ((1.0 - s) / 2.0))


def scaling_exponent(measures: Sequence[BumpMeasures]) -> float:
    """
    Least-squares slope of log(||u||_inf / ||u||_2) against log(Re Q(u)^(1/2) / ||u||_2),
    clipped to [1/2, 1].

    The (H1) ratio at exponent s stays bounded over the family exactly when this slope is at
    most s, so the slope is the smallest admissible exponent the family can see.
    """
    x = np.array([0.5 * np.log(m.re_q / m.l2_squared) for m in measures])
    y = np.array([np.log(m.sup) - 0.5 * np.log(m.l2_squared) for m in measures])
    if np.ptp(x) < 1e-12:
        return 0.5
    slope = np.polyfit(x, y, 1)[0]
    return float(np.clip(slope, 0.5, 1.0))


def hypothesis_diagnostics(
    field: CoefficientField,
    family: Optional[BumpFamily] = None,
    s_grid: Sequence[float] = DEFAULT_S_GRID,
    epsilons: Sequence[float] = DEFAULT_EPSILONS,
    lambdas: Sequence[float] = DEFAULT_LAMBDAS,
    interpolation_epsilon: float = 0.5,
) -> HypothesisDiagnostics:
    """
    Measure the (H1), (H2) and interpolation constants of `field` over a bump family.

    (H1): the worst ratio over the family for each s, and the scaling exponent of the family as
    s_estimate.
    (H2): for each epsilon the smallest c with
        int w^(1/2) |grad u|^2 <= epsilon int w |D^2 u|^2 + c / epsilon int |u|^2.
    Interpolation: for each (k, l, lambda) the smallest c with
        (1 + lambda^(4-k-l)) int w^((k+l)/4) |D^k u| |D^l u|
            <= epsilon Re Q(u) + c epsilon^(-(k+l)/(4-k-l)) (1 + lambda^4) ||u||^2.

    Raises:
        ParameterError: If the family is empty on the field's grid.
    """
    family = family or default_bump_family(field.domain)
    bumps = family.materialize(field.domain)
    if not bumps:
        raise ParameterError("bump family is empty on this grid")
    measures = [measure_bump(field, u) for _, u in bumps]
    measures = [m for m in measures if m.re_q > 0.0]
    if not measures:
        raise ParameterError("no bump in the family has positive Re Q(u)")

    h1_by_s = [(float(s), max(h1_ratio(m, s) for m in measures)) for s in s_grid]
    s_estimate = scaling_exponent(measures)
    h1_constant = max(h1_ratio(m, s_estimate) for m in measures)

    h2_table = []
    for eps in epsilons:
        c = max(
            eps * (m.grad_half_weight - eps * m.hessian_weight) / m.l2_squared for m in measures
        )
        h2_table.append((float(eps), max(0.0, float(c))))

    eq8_table = []
    for k, l in DERIVATIVE_PAIRS:
        order = k + l
        for lam in lambdas:
            c = max(
                ((1.0 + lam ** (4 - order)) * m.mixed[(k, l)] - interpolation_epsilon * m.re_q)
                / (interpolation_epsilon ** (-order / (4 - order)) * (1.0 + lam**4) * m.l2_squared)
                for m in measures
            )
            eq8_table.append(
                InterpolationRow(
                    k=k, l=l, lam=lam, epsilon=interpolation_epsilon, constant=max(0.0, float(c))
                )
            )

    garding = min(m.re_q / m.hessian_weight for m in measures)
    logger.info(
        "Hypothesis diagnostics measured",
        field=field.name,
        family_size=len(measures),
        s_estimate=s_estimate,
        h1_constant=h1_constant,
        garding_constant=garding,
    )
    return HypothesisDiagnostics(
        s_estimate=s_estimate,
        h1_constant=h1_constant,
        h1_by_s=h1_by_s,
        h2_table=h2_table,
        eq8_table=eq8_table,
        garding_constant=float(garding),
        family_size=len(measures),
    )


class GardingCheck(BaseModel):
    model_config = ConfigDict(frozen=True)

    min_eigenvalue: float
    operator_norm: float
    ratio: float
    passed: bool
    nodes: int


def garding_min_eigenvalue(
    field: CoefficientField, domain: Optional[Domain2D] = None, nodes: int = 33
) -> GardingCheck:
    """
    Smallest eigenvalue of the Hermitian part of H_h on a small grid, relative to ||H_h||.

    The default grid resamples the field's rectangle with `nodes` points per axis.
    """
    if domain is None:
        domain = field.domain.model_copy(update={"n1": nodes, "n2": nodes})
    operator = assemble_operator(field, domain)
    dense = operator.matrix.toarray()
    eigenvalues = np.linalg.eigvalsh(0.5 * (dense + dense.conj().T))
    norm = float(np.max(np.abs(eigenvalues)))
    lowest = float(eigenvalues[0])
    ratio = lowest / norm if norm else 0.0
    logger.info("Garding eigenvalue check", field=field.name, min_eigenvalue=lowest, ratio=ratio)
    return GardingCheck(
        min_eigenvalue=lowest,
        operator_norm=norm,
        ratio=ratio,
        passed=ratio >= -GARDING_TOLERANCE,
        nodes=int(domain.n1),
    )
