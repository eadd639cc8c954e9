"""
Run configuration validation logic for the CLI.

Validates RunConfig documents against the rules their field types cannot express.
"""

from typing import Optional, Sequence

from anisotropic_heat_kernel.coefficients import PRESETS
from anisotropic_heat_kernel.models import RunConfig

SUBCOMMANDS = ("report", "algebra-verify", "distance", "kernel", "bound", "schemas")
TABULATED_KEYS = {"alpha", "beta", "gamma", "w"}


def _validate_times(label: str, times: Sequence[float]) -> None:
    if not times:
        raise ValueError(f"{label} cannot be empty")
    if any(t <= 0.0 for t in times):
        raise ValueError(f"{label} must be positive, got: {list(times)}")
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ValueError(f"{label} must be strictly increasing, got: {list(times)}")


def validate_run_config(config: RunConfig, subcommand: Optional[str] = None) -> None:
    """
    Validate a RunConfig according to the rules of the toolkit.

    Args:
        config: The parsed run configuration.
        subcommand: When given, the rules of that subcommand are checked as well.

    Raises:
        ValueError: If validation fails with a descriptive error message.
    """
    if subcommand is not None and subcommand not in SUBCOMMANDS:
        raise ValueError(f"unknown subcommand '{subcommand}', expected one of {list(SUBCOMMANDS)}")

    spec = config.coefficients
    if spec.preset == "tabulated":
        if not spec.paths:
            raise ValueError("tabulated coefficients need 'paths' for alpha, beta and gamma")
        unknown = set(spec.paths) - TABULATED_KEYS
        if unknown:
            raise ValueError(f"tabulated paths have unknown keys: {sorted(unknown)}")
        missing = {"alpha", "beta", "gamma"} - set(spec.paths)
        if missing:
            raise ValueError(f"tabulated paths are missing: {sorted(missing)}")
    else:
        if spec.preset not in PRESETS:
            raise ValueError(
                f"unknown preset '{spec.preset}', expected one of {sorted([*PRESETS, 'tabulated'])}"
            )
        if spec.paths:
            raise ValueError(f"'paths' is only valid for the tabulated preset, not '{spec.preset}'")

    domain = config.domain

    if subcommand in (None, "report"):
        scales = config.report.smoothing_scales
        if not scales or any(scale <= 0.0 for scale in scales):
            raise ValueError(
                f"report.smoothing_scales must be positive and non-empty, got: {scales}"
            )
        if config.report.fd_step is not None and config.report.fd_step <= 0.0:
            raise ValueError(f"report.fd_step must be positive, got: {config.report.fd_step}")

    if subcommand in (None, "algebra-verify"):
        algebra = config.algebra
        if algebra.psd_q_min <= -1.0:
            raise ValueError(f"algebra.psd_q_min must exceed -1, got: {algebra.psd_q_min}")
        if algebra.psd_q_max <= algebra.psd_q_min:
            raise ValueError("algebra.psd_q_max must exceed algebra.psd_q_min")
        if algebra.psd_q_step <= 0.0:
            raise ValueError(f"algebra.psd_q_step must be positive, got: {algebra.psd_q_step}")
        if any(q <= -1.0 for q in algebra.q_values):
            raise ValueError(f"algebra.q_values must exceed -1, got: {algebra.q_values}")

    if subcommand in (None, "distance"):
        distance = config.distance
        if not domain.contains(distance.source):
            raise ValueError(f"distance.source {distance.source} lies outside the domain")
        if distance.bracket_target is not None and not domain.contains(distance.bracket_target):
            raise ValueError(
                f"distance.bracket_target {distance.bracket_target} lies outside the domain"
            )
        if distance.order > 4:
            raise ValueError(f"distance.order must be at most 4, got: {distance.order}")
        if distance.certificate_scale is not None and distance.certificate_scale <= 0.0:
            raise ValueError("distance.certificate_scale must be positive")

    if subcommand in (None, "kernel"):
        kernel = config.kernel
        _validate_times("kernel.times", kernel.times)
        if kernel.source is not None:
            i, j = kernel.source
            if not (0 <= i < domain.n1 and 0 <= j < domain.n2):
                raise ValueError(
                    f"kernel.source {kernel.source} is outside the {domain.n1}x{domain.n2} grid"
                )
            interior = 2 <= i < domain.n1 - 2 and 2 <= j < domain.n2 - 2
            if kernel.method != "fourier" and not interior:
                raise ValueError(
                    f"kernel.source {kernel.source} lies on the clamped boundary layers"
                )
        if kernel.method != "fourier" and min(domain.n1, domain.n2) < 6:
            raise ValueError("grid kernels need at least 6 nodes per axis")

    if subcommand in (None, "bound"):
        bound = config.bound
        _validate_times("bound.times", bound.times)
        if bound.s_used is not None and not 0.5 <= bound.s_used <= 1.0:
            raise ValueError(f"bound.s_used must lie in [0.5, 1], got: {bound.s_used}")
        if bound.delta == 0.0:
            raise ValueError("bound.delta cannot be zero")
