"""
Coefficient fields alpha, beta, gamma and the weight w over a rectangular domain.

A CoefficientField is immutable; its constants c_upper and c_ell are computed once by grid
sampling when the field is built, so every report can state them as "sampled".
"""

from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.interpolate import RegularGridInterpolator

from anisotropic_heat_kernel.artifacts import read_grid_csv
from anisotropic_heat_kernel.config import settings
from anisotropic_heat_kernel.errors import ClassificationError, DomainError, ParameterError
from anisotropic_heat_kernel.logging_config import get_logger
from anisotropic_heat_kernel.models import CoefficientSpec, Domain2D

logger = get_logger(__name__)

CoefficientFunction = Callable[[np.ndarray, np.ndarray], np.ndarray]


def constant_function(value: complex) -> CoefficientFunction:
    """Vectorized constant; the result has the broadcast shape of its arguments."""

    def evaluate(x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
        shape = np.broadcast(np.asarray(x1), np.asarray(x2)).shape
        return np.full(shape, value, dtype=complex)

    return evaluate


def quarter_circle(resolution: int) -> tuple[np.ndarray, np.ndarray]:
    """
    Unit directions covering the first quadrant of an equispaced angular grid.

    Quartic even symbols take the same values in every quadrant, so this is equivalent to the
    full grid of `resolution` angles.
    """
    if resolution < 4 or resolution % 4:
        raise ParameterError(
            f"angular resolution must be a positive multiple of 4, got {resolution}"
        )
    theta = np.linspace(0.0, 0.5 * np.pi, resolution // 4 + 1)
    return np.cos(theta), np.sin(theta)


class CoefficientField(BaseModel):
    """alpha, beta, gamma (complex) and w (positive) as vectorized functions on a domain."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    name: str
    domain: Domain2D
    alpha: CoefficientFunction = Field(..., exclude=True)
    beta: CoefficientFunction = Field(..., exclude=True)
    gamma: CoefficientFunction = Field(..., exclude=True)
    w: CoefficientFunction = Field(..., exclude=True)
    parameters: dict[str, Any] = Field(default_factory=dict)
    constant: bool = False
    c_upper: float = Field(..., ge=0.0, description="sampled: |coef| <= c_upper w")
    c_ell: float = Field(..., description="sampled: Re A >= c_ell w |xi|^4")
    angular_resolution: int = 720

    def coefficients(
        self, x1: np.ndarray, x2: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """alpha, beta, gamma at the given points as complex arrays."""
        x1, x2 = np.asarray(x1, dtype=float), np.asarray(x2, dtype=float)
        return (
            np.asarray(self.alpha(x1, x2), dtype=complex),
            np.asarray(self.beta(x1, x2), dtype=complex),
            np.asarray(self.gamma(x1, x2), dtype=complex),
        )

    def weight(self, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
        x1, x2 = np.asarray(x1, dtype=float), np.asarray(x2, dtype=float)
        return np.real(np.asarray(self.w(x1, x2))).astype(float)

    def at_nodes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """alpha, beta, gamma, w sampled on the domain nodes."""
        x1, x2 = self.domain.mesh()
        return (*self.coefficients(x1, x2), self.weight(x1, x2))

    def at_point(self, x: tuple[float, float] | np.ndarray) -> tuple[complex, complex, complex]:
        """Coefficients at one point; raises DomainError outside the domain."""
        if not self.domain.contains(x):
            raise DomainError(f"point {tuple(np.asarray(x, dtype=float))} lies outside the domain")
        a, b, g = self.coefficients(np.asarray(x[0]), np.asarray(x[1]))
        return complex(a), complex(b), complex(g)

    def is_real(self, tol: float = 1e-14) -> bool:
        """True when all sampled coefficients have vanishing imaginary part."""
        alpha, beta, gamma, w = self.at_nodes()
        scale = tol * np.maximum(w, 1.0)
        return bool(
            np.all(np.abs(alpha.imag) <= scale)
            and np.all(np.abs(beta.imag) <= scale)
            and np.all(np.abs(gamma.imag) <= scale)
        )


def _sampled_constants(
    domain: Domain2D,
    alpha: CoefficientFunction,
    beta: CoefficientFunction,
    gamma: CoefficientFunction,
    w: CoefficientFunction,
    angular_resolution: int,
) -> tuple[float, float, tuple[int, int]]:
    """Return (c_upper, c_ell, node of worst ellipticity)."""
    x1, x2 = domain.mesh()
    a = np.asarray(alpha(x1, x2), dtype=complex)
    b = np.asarray(beta(x1, x2), dtype=complex)
    g = np.asarray(gamma(x1, x2), dtype=complex)
    weight = np.real(np.asarray(w(x1, x2))).astype(float)

    if not np.all(np.isfinite(weight)) or np.any(weight <= 0.0):
        finite = np.where(np.isfinite(weight), weight, -np.inf)
        bad = np.unravel_index(np.argmin(finite), weight.shape)
        raise ClassificationError(f"weight must be positive and finite; fails at node {bad}")
    for label, values in (("alpha", a), ("beta", b), ("gamma", g)):
        if not np.all(np.isfinite(values)):
            raise ClassificationError(f"{label} is not finite on the sampled domain")

    c_upper = float(np.max(np.maximum.reduce([np.abs(a), np.abs(b), np.abs(g)]) / weight))

    cos, sin = quarter_circle(angular_resolution)
    worst = np.full(weight.shape, np.inf)
    for c, s in zip(cos, sin):
        value = np.real(a * c**4 + 2.0 * b * c**2 * s**2 + g * s**4) / weight
        np.minimum(worst, value, out=worst)
    node = np.unravel_index(int(np.argmin(worst)), worst.shape)
    return c_upper, float(worst[node]), (int(node[0]), int(node[1]))


def make_field(
    name: str,
    domain: Domain2D,
    alpha: CoefficientFunction,
    beta: CoefficientFunction,
    gamma: CoefficientFunction,
    w: Optional[CoefficientFunction] = None,
    parameters: Optional[dict[str, Any]] = None,
    constant: bool = False,
    angular_resolution: Optional[int] = None,
    require_elliptic: bool = True,
) -> CoefficientField:
    """
    Build a CoefficientField and compute its sampled constants.

    Args:
        name: Preset or descriptive name.
        domain: Domain the field is sampled on.
        alpha, beta, gamma: Vectorized coefficient functions.
        w: Weight function; defaults to 1.
        parameters: Preset parameters recorded in reports.
        constant: True when the coefficients do not depend on x.
        angular_resolution: Angles for the ellipticity supremum (settings default).
        require_elliptic: Raise ClassificationError when c_ell <= 0.

    Raises:
        ClassificationError: If w is not positive and finite, or the symbol is not elliptic.
    """
    resolution = angular_resolution or settings.angular_resolution
    weight = w or constant_function(1.0)
    c_upper, c_ell, worst_node = _sampled_constants(domain, alpha, beta, gamma, weight, resolution)
    if require_elliptic and c_ell <= 0.0:
        raise ClassificationError(
            f"symbol is not elliptic: min Re A(x, xi)/w(x) = {c_ell:.6g} at node {worst_node}"
        )
    logger.debug("Coefficient field built", name=name, c_upper=c_upper, c_ell=c_ell)
    return CoefficientField(
        name=name,
        domain=domain,
        alpha=alpha,
        beta=beta,
        gamma=gamma,
        w=weight,
        parameters=dict(parameters or {}),
        constant=constant,
        c_upper=c_upper,
        c_ell=c_ell,
        angular_resolution=resolution,
    )


def grid_function(domain: Domain2D, values: np.ndarray) -> CoefficientFunction:
    """Linear interpolation of node values; evaluation clamps to the domain."""
    values = np.asarray(values)
    if values.shape != domain.shape:
        raise ParameterError(f"grid values have shape {values.shape}, expected {domain.shape}")
    axes = (domain.x1, domain.x2)
    real = RegularGridInterpolator(axes, values.real.astype(float), method="linear")
    imag = None
    if np.iscomplexobj(values) and np.any(values.imag != 0.0):
        imag = RegularGridInterpolator(axes, values.imag.astype(float), method="linear")

    def evaluate(x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
        x1, x2 = np.broadcast_arrays(np.asarray(x1, dtype=float), np.asarray(x2, dtype=float))
        points = np.stack(
            [
                np.clip(x1, domain.x1_min, domain.x1_max),
                np.clip(x2, domain.x2_min, domain.x2_max),
            ],
            axis=-1,
        )
        out = real(points).astype(complex)
        if imag is not None:
            out = out + 1j * imag(points)
        return out

    return evaluate


def field_from_grids(
    name: str,
    domain: Domain2D,
    alpha: np.ndarray,
    beta: np.ndarray,
    gamma: np.ndarray,
    w: Optional[np.ndarray] = None,
    parameters: Optional[dict[str, Any]] = None,
    angular_resolution: Optional[int] = None,
) -> CoefficientField:
    """Tabulated field from node values on `domain`."""
    weight = grid_function(domain, w) if w is not None else None
    return make_field(
        name,
        domain,
        grid_function(domain, alpha),
        grid_function(domain, beta),
        grid_function(domain, gamma),
        weight,
        parameters=parameters,
        angular_resolution=angular_resolution,
    )


# ---------------------------------------------------------------------------
# Presets
# ---------------------------------------------------------------------------


def constant_field(
    domain: Domain2D,
    alpha: complex = 1.0,
    beta: complex = 1.0,
    gamma: complex = 1.0,
    name: str = "constant",
    **kwargs: Any,
) -> CoefficientField:
    """Constant coefficients with w = 1."""
    return make_field(
        name,
        domain,
        constant_function(alpha),
        constant_function(beta),
        constant_function(gamma),
        parameters={"alpha": alpha, "beta": beta, "gamma": gamma},
        constant=True,
        **kwargs,
    )


def bilaplacian(domain: Domain2D, **kwargs: Any) -> CoefficientField:
    """alpha = beta = gamma = 1: the symbol |xi|^4."""
    return constant_field(domain, 1.0, 1.0, 1.0, name="bilaplacian", **kwargs)


def q_profile(
    domain: Domain2D, q_min: float, q_max: float, profile: str = "linear", width: float = 0.25
) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    """Q(x) sweeping [q_min, q_max] across the domain."""
    if q_min > q_max:
        raise ParameterError(f"q_min must not exceed q_max, got {q_min} > {q_max}")
    mid = 0.5 * (q_min + q_max)
    half = 0.5 * (q_max - q_min)
    centre1 = 0.5 * (domain.x1_min + domain.x1_max)
    centre2 = 0.5 * (domain.x2_min + domain.x2_max)
    length1 = domain.x1_max - domain.x1_min

    if profile == "linear":
        return lambda x1, x2: q_min + (q_max - q_min) * (np.asarray(x1) - domain.x1_min) / length1
    if profile == "tanh":
        scale = width * length1
        edge = np.tanh(0.5 * length1 / scale)
        return lambda x1, x2: mid + half * np.tanh((np.asarray(x1) - centre1) / scale) / edge
    if profile == "radial":
        r_max = np.hypot(domain.x1_max - centre1, domain.x2_max - centre2)
        return lambda x1, x2: q_min + (q_max - q_min) * (
            np.hypot(np.asarray(x1) - centre1, np.asarray(x2) - centre2) / r_max
        ) ** 2
    raise ParameterError(f"unknown Q profile '{profile}', expected linear, tanh or radial")


def smooth_q_sweep(
    domain: Domain2D,
    q_min: float = -0.5,
    q_max: float = 5.0,
    profile: str = "tanh",
    width: float = 0.25,
    alpha0: float = 1.0,
    gamma0: float = 1.0,
    modulation: float = 0.0,
    **kwargs: Any,
) -> CoefficientField:
    """
    Real smooth field with Q(x) = beta/sqrt(alpha gamma) following a profile.

    alpha carries an optional smooth modulation 1 + modulation * cos(x2) so that the
    coefficients are genuinely x-dependent even along the Q level sets.
    """
    q = q_profile(domain, q_min, q_max, profile, width)

    def alpha(x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
        x1, x2 = np.broadcast_arrays(np.asarray(x1, dtype=float), np.asarray(x2, dtype=float))
        return (alpha0 * (1.0 + modulation * np.cos(x2))).astype(complex)

    def gamma(x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
        return constant_function(gamma0)(x1, x2)

    def beta(x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
        return (q(x1, x2) * np.sqrt(alpha(x1, x2).real * gamma0)).astype(complex)

    return make_field(
        "smooth-Q-sweep",
        domain,
        alpha,
        beta,
        gamma,
        parameters={
            "q_min": q_min,
            "q_max": q_max,
            "profile": profile,
            "width": width,
            "alpha0": alpha0,
            "gamma0": gamma0,
            "modulation": modulation,
        },
        **kwargs,
    )


def degenerate_weight(
    domain: Domain2D, q: float = 1.0, delta: float = 0.05, power: float = 1.0, **kwargs: Any
) -> CoefficientField:
    """alpha = gamma = w, beta = q w with w = (delta + |x|^2)^(power/2)."""

    def weight(x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
        return (delta + np.asarray(x1) ** 2 + np.asarray(x2) ** 2) ** (0.5 * power)

    def alpha(x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
        return weight(x1, x2).astype(complex)

    def beta(x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
        return (q * weight(x1, x2)).astype(complex)

    return make_field(
        "degenerate-weight",
        domain,
        alpha,
        beta,
        alpha,
        weight,
        parameters={"q": q, "delta": delta, "power": power},
        **kwargs,
    )


def rough_perturbation(
    domain: Domain2D,
    amplitude: float = 0.05,
    mode: str = "square-wave",
    wavelength: float = 0.5,
    **kwargs: Any,
) -> CoefficientField:
    """
    Bi-Laplacian perturbed outside the good class.

    square-wave: alpha = 1 + amplitude * sign(sin(2 pi x1 / wavelength)) (bounded, not Lipschitz).
    imaginary: beta = 1 + i amplitude (complex-valued).
    """
    if mode == "square-wave":

        def alpha(x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
            x1, x2 = np.broadcast_arrays(np.asarray(x1, dtype=float), np.asarray(x2, dtype=float))
            return (1.0 + amplitude * np.sign(np.sin(2.0 * np.pi * x1 / wavelength))).astype(
                complex
            )

        beta = constant_function(1.0)
    elif mode == "imaginary":
        alpha = constant_function(1.0)
        beta = constant_function(1.0 + 1j * amplitude)
    else:
        raise ParameterError(
            f"unknown perturbation mode '{mode}', expected square-wave or imaginary"
        )

    return make_field(
        "rough-perturbation",
        domain,
        alpha,
        beta,
        constant_function(1.0),
        parameters={"amplitude": amplitude, "mode": mode, "wavelength": wavelength},
        **kwargs,
    )


def tabulated(domain: Domain2D, paths: dict[str, str], **kwargs: Any) -> CoefficientField:
    """
    Field read from CSV grids (header n1,n2,x1_min,x1_max,x2_min,x2_max, then n1 rows).

    Values between the tabulated nodes are linearly interpolated; `domain` must lie inside the
    tabulated rectangle.
    """
    missing = {"alpha", "beta", "gamma"} - set(paths)
    if missing:
        raise ParameterError(f"tabulated preset needs CSV paths for {sorted(missing)}")

    functions: dict[str, CoefficientFunction] = {}
    for key, path in paths.items():
        table_domain, values = read_grid_csv(Path(path))
        if not (
            table_domain.x1_min <= domain.x1_min
            and domain.x1_max <= table_domain.x1_max
            and table_domain.x2_min <= domain.x2_min
            and domain.x2_max <= table_domain.x2_max
        ):
            raise DomainError(f"domain exceeds the tabulated rectangle of {path}")
        functions[key] = grid_function(table_domain, values)

    return make_field(
        "tabulated",
        domain,
        functions["alpha"],
        functions["beta"],
        functions["gamma"],
        functions.get("w"),
        parameters={"paths": dict(paths)},
        **kwargs,
    )


PRESETS: dict[str, Callable[..., CoefficientField]] = {
    "constant": constant_field,
    "bilaplacian": bilaplacian,
    "smooth-Q-sweep": smooth_q_sweep,
    "degenerate-weight": degenerate_weight,
    "rough-perturbation": rough_perturbation,
}


def build_field(spec: CoefficientSpec, domain: Domain2D) -> CoefficientField:
    """
    Build the field named by a run config.

    Raises:
        ParameterError: If the preset is unknown or its parameters are rejected.
    """
    if spec.preset == "tabulated":
        if not spec.paths:
            raise ParameterError("tabulated preset requires 'paths'")
        return tabulated(domain, spec.paths)
    try:
        factory = PRESETS[spec.preset]
    except KeyError:
        raise ParameterError(
            f"unknown preset '{spec.preset}', expected one of {sorted([*PRESETS, 'tabulated'])}"
        ) from None
    try:
        return factory(domain, **spec.parameters)
    except TypeError as exc:
        raise ParameterError(f"invalid parameters for preset '{spec.preset}': {exc}") from exc
