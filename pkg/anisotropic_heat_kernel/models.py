"""
Data models for the Anisotropic Heat Kernel toolkit.

Defines the computational domain, the enumerations shared across modules, the JSON report
models emitted by the CLI and the run configuration document.
"""

from enum import StrEnum
from typing import Any, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from anisotropic_heat_kernel.config import settings


class BoundaryKind(StrEnum):
    """Geometry of the domain."""

    DIRICHLET_RECTANGLE = "dirichlet_rectangle"
    FULL_PLANE = "full_plane"


class Regime(StrEnum):
    """Range of Q(x) selecting the branch of k, sigma, Gamma and p."""

    Q_NEGATIVE = "q_negative"
    CONVEX = "convex"
    Q_LARGE = "q_large"


REGIME_CODES: tuple[Regime, ...] = (Regime.Q_NEGATIVE, Regime.CONVEX, Regime.Q_LARGE)


class DistanceMethod(StrEnum):
    """Algorithm used to compute a DistanceField."""

    DIJKSTRA_STENCIL = "dijkstra_stencil"
    FAST_SWEEPING = "fast_sweeping"
    CLOSED_FORM = "closed_form"


class KernelMethod(StrEnum):
    """Algorithm used to compute a KernelSlice."""

    FOURIER_CONSTANT = "fourier_constant"
    CRANK_NICOLSON = "crank_nicolson"
    KRYLOV_EXPONENTIAL = "krylov_exponential"


class Domain2D(BaseModel):
    """Axis-aligned rectangle with a uniform node grid."""

    model_config = ConfigDict(
        frozen=True,
        extra="forbid",
        json_schema_extra={
            "example": {
                "x1_min": -1.0,
                "x1_max": 1.0,
                "x2_min": -1.0,
                "x2_max": 1.0,
                "n1": 65,
                "n2": 65,
                "boundary_kind": "dirichlet_rectangle",
            }
        },
    )

    x1_min: float = Field(..., description="Left edge")
    x1_max: float = Field(..., description="Right edge")
    x2_min: float = Field(..., description="Bottom edge")
    x2_max: float = Field(..., description="Top edge")
    n1: int = Field(..., ge=4, description="Number of nodes along x1")
    n2: int = Field(..., ge=4, description="Number of nodes along x2")
    boundary_kind: BoundaryKind = BoundaryKind.DIRICHLET_RECTANGLE

    @model_validator(mode="after")
    def _check_bounds(self) -> "Domain2D":
        if not self.x1_min < self.x1_max:
            raise ValueError(f"x1_min must be < x1_max, got {self.x1_min} >= {self.x1_max}")
        if not self.x2_min < self.x2_max:
            raise ValueError(f"x2_min must be < x2_max, got {self.x2_min} >= {self.x2_max}")
        return self

    @classmethod
    def square(cls, half_width: float, n: int, **kwargs: Any) -> "Domain2D":
        """Centred square [-half_width, half_width]^2 with n nodes per axis."""
        return cls(
            x1_min=-half_width,
            x1_max=half_width,
            x2_min=-half_width,
            x2_max=half_width,
            n1=n,
            n2=n,
            **kwargs,
        )

    @property
    def h1(self) -> float:
        return (self.x1_max - self.x1_min) / (self.n1 - 1)

    @property
    def h2(self) -> float:
        return (self.x2_max - self.x2_min) / (self.n2 - 1)

    @property
    def cell_area(self) -> float:
        return self.h1 * self.h2

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n1, self.n2)

    @property
    def x1(self) -> np.ndarray:
        return np.linspace(self.x1_min, self.x1_max, self.n1)

    @property
    def x2(self) -> np.ndarray:
        return np.linspace(self.x2_min, self.x2_max, self.n2)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Node coordinates, indexed [i, j] with i along x1."""
        return np.meshgrid(self.x1, self.x2, indexing="ij")

    def cell_mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Cell-centre coordinates, shape (n1 - 1, n2 - 1)."""
        c1 = 0.5 * (self.x1[:-1] + self.x1[1:])
        c2 = 0.5 * (self.x2[:-1] + self.x2[1:])
        return np.meshgrid(c1, c2, indexing="ij")

    def contains(self, point: tuple[float, float] | np.ndarray, tol: float = 1e-12) -> bool:
        if self.boundary_kind == BoundaryKind.FULL_PLANE:
            return True
        x1, x2 = float(point[0]), float(point[1])
        return (
            self.x1_min - tol <= x1 <= self.x1_max + tol
            and self.x2_min - tol <= x2 <= self.x2_max + tol
        )

    def nearest_node(self, point: tuple[float, float] | np.ndarray) -> tuple[int, int]:
        i = int(np.clip(np.rint((point[0] - self.x1_min) / self.h1), 0, self.n1 - 1))
        j = int(np.clip(np.rint((point[1] - self.x2_min) / self.h2), 0, self.n2 - 1))
        return i, j

    def node_point(self, node: tuple[int, int]) -> tuple[float, float]:
        return (self.x1_min + node[0] * self.h1, self.x2_min + node[1] * self.h2)


# ---------------------------------------------------------------------------
# Report models (everything the CLI writes as JSON)
# ---------------------------------------------------------------------------


class RegimeSummary(BaseModel):
    """Global scalars of a RegimeClassification."""

    model_config = ConfigDict(frozen=True)

    q_min: float
    q_max: float
    k_star: float
    sigma_star: float
    sigma_star_closed_form: float = Field(..., description="(3/4)(4 k*)^(-1/3)")
    node_counts: dict[Regime, int]
    strongly_convex: bool


class GoodClassReport(BaseModel):
    """Membership of a symbol in the good class (real, gradients bounded by c w^(3/4))."""

    model_config = ConfigDict(frozen=True)

    is_real: bool
    grad_bound_constant: float
    grad_bound_constant_refined: float
    in_good_class: bool
    tolerance: float
    fd_step: float


class ThetaSummary(BaseModel):
    model_config = ConfigDict(frozen=True)

    theta: float
    smoothing_scale: float
    pointwise_bound: str = "|A - A_tilde| <= 2 theta w |xi|^4"
    candidates: list[tuple[float, Optional[float]]] = Field(
        default_factory=list, description="(scale, theta) per candidate; None if not good class"
    )


class SymbolReport(BaseModel):
    """Output of the `report` subcommand."""

    model_config = ConfigDict(frozen=True)

    preset: str
    domain: Domain2D
    c_upper: float = Field(..., description="sampled |coefficient| <= c w constant")
    c_ell: float = Field(..., description="sampled ellipticity constant")
    sampling: Literal["sampled"] = "sampled"
    regime: Optional[RegimeSummary] = None
    strongly_convex_fraction: Optional[float] = None
    good_class: GoodClassReport
    theta: Optional[ThetaSummary] = None
    q_at_centre: Optional[float] = None


class KTableRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    q: float
    k_formula: float
    k_numeric: float
    abs_error: float


class AlgebraReport(BaseModel):
    """Output of the `algebra-verify` subcommand."""

    model_config = ConfigDict(frozen=True)

    identity_max_residual: float
    identity_residual_by_regime: dict[Regime, float]
    psd_violations: int
    k_numeric_vs_formula: list[KTableRow]
    group_term_max_residual: float
    min_s_value: float
    samples_per_regime: int
    passed: bool


class DistanceSummary(BaseModel):
    """Output of the `distance` subcommand."""

    model_config = ConfigDict(frozen=True)

    source: tuple[float, float]
    method: DistanceMethod
    stencil_order: int
    max_value: float
    bracket: Optional[tuple[float, float]] = None
    bracket_target: Optional[tuple[float, float]] = None
    certificate_M: Optional[float] = None
    ew_gradient_constant: Optional[float] = None


class KernelMetadata(BaseModel):
    """Output of the `kernel` subcommand (the grids go to CSV)."""

    model_config = ConfigDict(frozen=True)

    source: tuple[int, int]
    source_point: tuple[float, float]
    times: list[float]
    method: KernelMethod
    domain: Domain2D
    mass: list[float]
    symmetry_defect: Optional[float] = None
    files: list[str] = Field(default_factory=list)


class Violation(BaseModel):
    model_config = ConfigDict(frozen=True)

    x: tuple[float, float]
    x_prime: tuple[float, float]
    t: float
    margin: float


class SharpnessResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    sigma_plus_delta_fails: bool
    delta: float
    sigma_tested: float


class BoundReport(BaseModel):
    """Verdicts and fitted constants for the Gaussian bound."""

    model_config = ConfigDict(frozen=True)

    epsilon: float = Field(..., gt=0.0, lt=1.0)
    M_proxy: Optional[float] = None
    s_used: float
    sigma_star: float
    exponent_constant: float = Field(..., description="sigma_* - c theta - epsilon as tested")
    theta: float = 0.0
    c_theta: float = 0.0
    fitted_c_eps: float
    fitted_c_eps_M: float
    calibration_points: int
    test_points: int
    violations: list[Violation]
    sigma_empirical: Optional[float | dict[str, float]] = None
    sharpness: Optional[SharpnessResult] = None
    certificate_lower_bound: Optional[float] = None

    @property
    def holds(self) -> bool:
        return not self.violations


class FailureReport(BaseModel):
    """Written when a run fails an invariant or a numerical step."""

    model_config = ConfigDict(frozen=True)

    subcommand: str
    error_type: str
    message: str
    detail: Optional[Any] = None


# ---------------------------------------------------------------------------
# Run configuration
# ---------------------------------------------------------------------------


class CoefficientSpec(BaseModel):
    """Preset name plus parameters, or tabulated CSV paths."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    preset: str = Field(..., description="constant | bilaplacian | smooth-Q-sweep | ...")
    parameters: dict[str, Any] = Field(default_factory=dict)
    paths: Optional[dict[str, str]] = Field(
        None, description="tabulated preset only: CSV paths keyed alpha, beta, gamma, w"
    )


class ReportParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    smoothing_scales: list[float] = Field(default_factory=lambda: [0.05, 0.1, 0.2])
    fd_step: Optional[float] = None


class AlgebraParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    samples_per_regime: int = Field(100_000, ge=1)
    q_values: list[float] = Field(
        default_factory=lambda: [-0.9, -0.5, -0.1, 0.0, 0.5, 1.0, 2.0, 3.0, 5.0, 10.0]
    )
    psd_q_min: float = -0.99
    psd_q_max: float = 20.0
    psd_q_step: float = 0.01


class DistanceParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    source: tuple[float, float] = (0.0, 0.0)
    method: Literal["dijkstra", "sweeping", "closed_form"] = "dijkstra"
    order: int = Field(3, ge=1)
    certificate_scale: Optional[float] = None
    bracket_target: Optional[tuple[float, float]] = None


class KernelParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    source: Optional[tuple[int, int]] = None
    times: list[float] = Field(default_factory=lambda: [1e-3, 1e-2])
    method: Literal["fourier", "cn", "krylov"] = "krylov"
    svg: bool = False


class BoundParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    epsilon: float = Field(0.02, gt=0.0, lt=1.0)
    delta: float = 0.05
    times: list[float] = Field(
        default_factory=lambda: [float(t) for t in np.logspace(-3, 0, 13)]
    )
    s_used: Optional[float] = None
    method: Literal["fourier", "krylov"] = "fourier"
    sigma_directions: int = Field(8, ge=1)


class RunConfig(BaseModel):
    """One JSON document describing a run; unknown keys are rejected."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    domain: Domain2D
    coefficients: CoefficientSpec
    seed: int = Field(default_factory=lambda: settings.random_seed)
    output_directory: Optional[str] = None
    report: ReportParams = Field(default_factory=ReportParams)
    algebra: AlgebraParams = Field(default_factory=AlgebraParams)
    distance: DistanceParams = Field(default_factory=DistanceParams)
    kernel: KernelParams = Field(default_factory=KernelParams)
    bound: BoundParams = Field(default_factory=BoundParams)
