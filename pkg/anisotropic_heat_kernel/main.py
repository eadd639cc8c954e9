"""
Command-line entry point.

Every subcommand reads one RunConfig, writes its artifacts below the output directory and
exits 0 on success, 1 when an invariant or a numerical step fails (a failure report is
written) and 2 on malformed input.
"""

import argparse
import json
import uuid
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

import numpy as np
import structlog
from pydantic import BaseModel, ValidationError

from anisotropic_heat_kernel.algebra import algebra_report
from anisotropic_heat_kernel.artifacts import (
    ArtifactWriter,
    ArtifactWriterConfig,
    RunArtifactWriter,
)
from anisotropic_heat_kernel.bounds import (
    bound_rows,
    probe_field_sharpness,
    smallest_c_theta,
    verify_bound,
)
from anisotropic_heat_kernel.coefficients import CoefficientField, build_field
from anisotropic_heat_kernel.config import settings
from anisotropic_heat_kernel.errors import HeatKernelError, InvariantViolation, NoSurrogateError
from anisotropic_heat_kernel.finsler import (
    FinslerMetric,
    certified_bracket,
    distance_field,
    lipschitz_defect,
)
from anisotropic_heat_kernel.kernel import kernel_slice, symmetry_defect
from anisotropic_heat_kernel.logging_config import get_logger, setup_logging
from anisotropic_heat_kernel.models import (
    AlgebraReport,
    BoundReport,
    DistanceMethod,
    DistanceSummary,
    Domain2D,
    FailureReport,
    KernelMetadata,
    KernelMethod,
    RunConfig,
    SymbolReport,
)
from anisotropic_heat_kernel.symbol import (
    check_good_class,
    check_strong_convexity,
    classify_regime,
    estimate_theta,
    eval_Q,
)
from anisotropic_heat_kernel.validation import validate_run_config

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

DISTANCE_METHODS = {
    "dijkstra": DistanceMethod.DIJKSTRA_STENCIL,
    "sweeping": DistanceMethod.FAST_SWEEPING,
    "closed_form": DistanceMethod.CLOSED_FORM,
}
KERNEL_METHODS = {
    "fourier": KernelMethod.FOURIER_CONSTANT,
    "cn": KernelMethod.CRANK_NICOLSON,
    "krylov": KernelMethod.KRYLOV_EXPONENTIAL,
}
SCHEMA_MODELS: dict[str, type[BaseModel]] = {
    "run_config": RunConfig,
    "symbol_report": SymbolReport,
    "algebra_report": AlgebraReport,
    "distance_summary": DistanceSummary,
    "kernel_metadata": KernelMetadata,
    "bound_report": BoundReport,
    "failure_report": FailureReport,
}
LIPSCHITZ_TOLERANCE = 1e-9
SYMMETRY_TOLERANCE = 1e-6


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def run_report(config: RunConfig, writer: ArtifactWriter) -> int:
    field = build_field(config.coefficients, config.domain)
    good_class = check_good_class(field, config.report.fd_step)

    regime = None
    convex_fraction = None
    q_at_centre = None
    if good_class.is_real:
        classification = classify_regime(field)
        convexity = check_strong_convexity(field)
        regime = classification.summary(convexity.holds)
        convex_fraction = convexity.fraction
        centre = (config.domain.n1 // 2, config.domain.n2 // 2)
        q_at_centre = eval_Q(field, config.domain.node_point(centre))
        if abs(regime.sigma_star - regime.sigma_star_closed_form) > 1e-12:
            raise InvariantViolation("sigma_star_closed_form", regime.model_dump(mode="json"))

    try:
        theta = estimate_theta(
            field, config.report.smoothing_scales, config.report.fd_step
        ).summary()
    except NoSurrogateError as e:
        logger.warning("No good-class surrogate", error=str(e))
        theta = None

    report = SymbolReport(
        preset=config.coefficients.preset,
        domain=config.domain,
        c_upper=field.c_upper,
        c_ell=field.c_ell,
        regime=regime,
        strongly_convex_fraction=convex_fraction,
        good_class=good_class,
        theta=theta,
        q_at_centre=q_at_centre,
    )
    writer.write_json("report.json", report)
    if field.c_ell <= 0.0:
        raise InvariantViolation("uniform_ellipticity", {"c_ell": field.c_ell})
    return EXIT_OK


def run_algebra_verify(config: RunConfig, writer: ArtifactWriter) -> int:
    report = algebra_report(config.algebra, np.random.default_rng(config.seed))
    writer.write_json("algebra.json", report)
    writer.write_table_csv(
        "k_table.csv",
        ("q", "k_formula", "k_numeric", "abs_error"),
        (
            (row.q, row.k_formula, row.k_numeric, row.abs_error)
            for row in report.k_numeric_vs_formula
        ),
    )
    if not report.passed:
        raise InvariantViolation("algebra", report.model_dump(mode="json"))
    return EXIT_OK


def run_distance(config: RunConfig, writer: ArtifactWriter) -> int:
    params = config.distance
    field = build_field(config.coefficients, config.domain)
    metric = FinslerMetric(field=field)
    method = DISTANCE_METHODS[params.method]
    dist = distance_field(metric, params.source, method, params.order)

    extra: dict[str, Any] = {}
    if params.certificate_scale is not None and params.bracket_target is not None:
        certificate, bracket = certified_bracket(
            metric, dist, params.certificate_scale, params.bracket_target
        )
        dist = dist.model_copy(update={"bracket": bracket})
        extra = {
            "bracket_target": params.bracket_target,
            "certificate_M": certificate.M,
            "ew_gradient_constant": certificate.ew_gradient_constant,
        }

    writer.write_grid_csv("distance.csv", config.domain, dist.values)
    writer.write_json("distance.json", dist.summary(**extra))

    if method is DistanceMethod.DIJKSTRA_STENCIL:
        defect = lipschitz_defect(metric, dist)
        if defect > LIPSCHITZ_TOLERANCE * max(1.0, float(np.max(dist.values))):
            raise InvariantViolation("distance_lipschitz", {"defect": defect})
    if dist.bracket is not None and dist.bracket[0] > dist.bracket[1] + LIPSCHITZ_TOLERANCE:
        raise InvariantViolation("distance_bracket", {"bracket": dist.bracket})
    return EXIT_OK


def _partner_node(domain: Domain2D, source: tuple[int, int]) -> tuple[int, int]:
    shift = (max(1, domain.n1 // 8), max(1, domain.n2 // 8))
    i = source[0] + shift[0] if source[0] + shift[0] < domain.n1 - 2 else source[0] - shift[0]
    j = source[1] + shift[1] if source[1] + shift[1] < domain.n2 - 2 else source[1] - shift[1]
    return int(np.clip(i, 2, domain.n1 - 3)), int(np.clip(j, 2, domain.n2 - 3))


def run_kernel(config: RunConfig, writer: ArtifactWriter) -> int:
    params = config.kernel
    domain = config.domain
    field = build_field(config.coefficients, domain)
    method = KERNEL_METHODS[params.method]
    source = params.source or (domain.n1 // 2, domain.n2 // 2)
    kernel = kernel_slice(field, source, params.times, method)

    files: list[str] = []
    for index, t in enumerate(kernel.times):
        values = kernel.values[index]
        for part, data in (("re", values.real), ("im", values.imag), ("abs", np.abs(values))):
            files.append(str(writer.write_grid_csv(f"kernel_t{index}_{part}.csv", domain, data)))
        if params.svg:
            magnitude = np.abs(values)
            floor = np.finfo(float).tiny
            files.append(
                str(
                    writer.write_svg_heatmap(
                        f"kernel_t{index}.svg",
                        domain,
                        np.log10(np.maximum(magnitude, floor)),
                        f"log10 |G(x, x', {t:g})|",
                    )
                )
            )

    defect = None
    if method is not KernelMethod.FOURIER_CONSTANT:
        partner = kernel_slice(field, _partner_node(domain, source), params.times, method)
        defect = symmetry_defect(kernel, partner)

    writer.write_json("kernel.json", kernel.metadata(symmetry_defect=defect, files=files))
    if defect is not None and field.is_real() and defect > SYMMETRY_TOLERANCE:
        raise InvariantViolation("kernel_symmetry", {"symmetry_defect": defect})
    return EXIT_OK


def _bound_kernel(config: RunConfig, field: CoefficientField):
    domain = config.domain
    method = KERNEL_METHODS[config.bound.method]
    source = (domain.n1 // 2, domain.n2 // 2)
    return kernel_slice(field, source, config.bound.times, method)


def run_bound(config: RunConfig, writer: ArtifactWriter) -> int:
    params = config.bound
    s_used = params.s_used if params.s_used is not None else 0.5
    field = build_field(config.coefficients, config.domain)

    distance_to_good = estimate_theta(field, config.report.smoothing_scales, config.report.fd_step)
    surrogate = distance_to_good.surrogate
    theta = distance_to_good.theta
    sigma_star = classify_regime(surrogate).sigma_star

    kernel = _bound_kernel(config, field)
    metric = FinslerMetric(field=surrogate)
    method = DistanceMethod.CLOSED_FORM if surrogate.constant else DistanceMethod.DIJKSTRA_STENCIL
    dist = distance_field(metric, kernel.source_point, method, config.distance.order)

    certificate_M = None
    lower = None
    if config.distance.certificate_scale is not None and config.distance.bracket_target is not None:
        certificate, (lower, _) = certified_bracket(
            metric, dist, config.distance.certificate_scale, config.distance.bracket_target
        )
        certificate_M = certificate.M

    c_theta = 0.0
    if theta > 0.0:
        c_theta = smallest_c_theta(kernel, dist, sigma_star, theta, s_used, params.epsilon)
    report = verify_bound(
        kernel,
        dist,
        sigma_star,
        s_used=s_used,
        epsilon=params.epsilon,
        theta=theta,
        c_theta=c_theta,
        M_proxy=certificate_M,
        certificate_lower_bound=lower,
    )

    if field.constant:
        estimate, sharpness = probe_field_sharpness(
            field, params.delta, s_used, directions=params.sigma_directions
        )
        report = report.model_copy(
            update={
                "sigma_empirical": {**estimate.by_direction, "min": estimate.sigma},
                "sharpness": sharpness,
            }
        )

    writer.write_json("bound.json", report)
    writer.write_table_csv(
        "bound.csv",
        ("t", "angle", "d", "log_lhs", "log_rhs", "margin"),
        bound_rows(kernel, dist, report),
    )

    if not report.holds:
        raise InvariantViolation(
            "gaussian_bound",
            {"violations": len(report.violations), "worst_margin": report.violations[0].margin},
        )
    verdict = report.sharpness
    if verdict is not None and verdict.sigma_plus_delta_fails != (params.delta > 0.0):
        raise InvariantViolation("sharpness", verdict.model_dump(mode="json"))
    return EXIT_OK


def run_schemas(config: RunConfig, writer: ArtifactWriter) -> int:
    for name, model in SCHEMA_MODELS.items():
        writer.write_schema(f"{name}.schema.json", model)
    return EXIT_OK


HANDLERS: dict[str, Callable[[RunConfig, ArtifactWriter], int]] = {
    "report": run_report,
    "algebra-verify": run_algebra_verify,
    "distance": run_distance,
    "kernel": run_kernel,
    "bound": run_bound,
    "schemas": run_schemas,
}


def _write_failure(writer: ArtifactWriter, subcommand: str, error: Exception) -> None:
    detail = getattr(error, "detail", None)
    residual = getattr(error, "residual", None)
    if detail is None and residual is not None:
        detail = {"residual": residual}
    failure = FailureReport(
        subcommand=subcommand,
        error_type=type(error).__name__,
        message=str(error),
        detail=detail,
    )
    writer.write_json("failure.json", failure)


def run(config: RunConfig, subcommand: str, writer: Optional[ArtifactWriter] = None) -> int:
    """
    Run one subcommand on a parsed configuration and map its outcome to an exit status.

    Returns:
        0 on success, 1 when an invariant or numerical step fails, 2 on invalid input.
    """
    structlog.contextvars.clear_contextvars()
    structlog.contextvars.bind_contextvars(run_id=str(uuid.uuid4()), subcommand=subcommand)
    writer = writer or RunArtifactWriter(
        ArtifactWriterConfig(output_directory=config.output_directory or settings.output_directory)
    )

    try:
        validate_run_config(config, subcommand)
        logger.info("Run started", preset=config.coefficients.preset, seed=config.seed)
        status = HANDLERS[subcommand](config, writer)
        logger.info("Run finished", status=status)
        return status

    except (RuntimeError, ArithmeticError, np.linalg.LinAlgError) as e:
        # Invariant violations and numerical failures; LinAlgError is also a ValueError
        logger.error("Run failed", error_type=type(e).__name__, error=str(e))
        _write_failure(writer, subcommand, e)
        return EXIT_FAILURE
    except ValueError as e:
        logger.warning("Invalid input", error_type=type(e).__name__, error=str(e))
        if isinstance(e, HeatKernelError):
            _write_failure(writer, subcommand, e)
        return EXIT_USAGE


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _float_list(text: str) -> list[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got '{text}'")


def _float_pair(text: str) -> tuple[float, float]:
    values = _float_list(text)
    if len(values) != 2:
        raise argparse.ArgumentTypeError(f"expected 'x1,x2', got '{text}'")
    return values[0], values[1]


def _int_pair(text: str) -> tuple[int, int]:
    try:
        i, j = (int(part) for part in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'i,j', got '{text}'")
    return i, j


def _parameter(text: str) -> tuple[str, Any]:
    key, sep, raw = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"expected 'key=value', got '{text}'")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="anisotropic-heat-kernel",
        description=(
            "Gaussian heat-kernel estimates for fourth-order anisotropic operators in the plane."
        ),
    )
    parser.add_argument("--log-level", default=None, help="overrides HEATKERNEL_LOG_LEVEL")
    subparsers = parser.add_subparsers(dest="subcommand", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="RunConfig JSON file")
    common.add_argument("--preset", default=None, help="coefficient preset name")
    common.add_argument(
        "--param", type=_parameter, action="append", default=[], help="preset parameter key=value"
    )
    common.add_argument("--output", default=None, help="output directory")
    common.add_argument("--seed", type=int, default=None)

    report = subparsers.add_parser(
        "report", parents=[common], help="symbol, regime and theta report"
    )
    report.add_argument("--smoothing-scales", type=_float_list, default=None)
    report.add_argument("--fd-step", type=float, default=None)

    algebra = subparsers.add_parser("algebra-verify", parents=[common], help="algebraic identities")
    algebra.add_argument("--samples", type=int, default=None, help="samples per regime")

    distance = subparsers.add_parser("distance", parents=[common], help="Finsler distance field")
    distance.add_argument("--source", type=_float_pair, default=None)
    distance.add_argument("--method", choices=sorted(DISTANCE_METHODS), default=None)
    distance.add_argument("--order", type=int, default=None)
    distance.add_argument("--certificate-scale", type=float, default=None)
    distance.add_argument("--target", type=_float_pair, default=None)

    kernel = subparsers.add_parser("kernel", parents=[common], help="heat-kernel slices")
    kernel.add_argument("--source", type=_int_pair, default=None, help="source node i,j")
    kernel.add_argument("--times", type=_float_list, default=None)
    kernel.add_argument("--method", choices=sorted(KERNEL_METHODS), default=None)
    kernel.add_argument("--svg", action="store_true")

    bound = subparsers.add_parser("bound", parents=[common], help="Gaussian bound and sharpness")
    bound.add_argument("--epsilon", type=float, default=None)
    bound.add_argument("--delta", type=float, default=None)
    bound.add_argument("--times", type=_float_list, default=None)
    bound.add_argument("--s", dest="s_used", type=float, default=None)
    bound.add_argument("--method", choices=["fourier", "krylov"], default=None)
    bound.add_argument("--directions", type=int, default=None)

    subparsers.add_parser("schemas", parents=[common], help="JSON schemas of every report")
    return parser


def default_config(subcommand: str) -> dict[str, Any]:
    """Configuration used when no --config file is given."""
    half_width, nodes = (3.0, 97) if subcommand == "bound" else (1.0, 65)
    return {
        "domain": Domain2D.square(half_width, nodes).model_dump(mode="json"),
        "coefficients": {"preset": "bilaplacian"},
    }


OVERRIDES: dict[str, dict[str, tuple[str, ...]]] = {
    "report": {
        "smoothing_scales": ("report", "smoothing_scales"),
        "fd_step": ("report", "fd_step"),
    },
    "algebra-verify": {"samples": ("algebra", "samples_per_regime")},
    "distance": {
        "source": ("distance", "source"),
        "method": ("distance", "method"),
        "order": ("distance", "order"),
        "certificate_scale": ("distance", "certificate_scale"),
        "target": ("distance", "bracket_target"),
    },
    "kernel": {
        "source": ("kernel", "source"),
        "times": ("kernel", "times"),
        "method": ("kernel", "method"),
        "svg": ("kernel", "svg"),
    },
    "bound": {
        "epsilon": ("bound", "epsilon"),
        "delta": ("bound", "delta"),
        "times": ("bound", "times"),
        "s_used": ("bound", "s_used"),
        "method": ("bound", "method"),
        "directions": ("bound", "sigma_directions"),
    },
    "schemas": {},
}


def load_config(args: argparse.Namespace) -> RunConfig:
    """
    Read the --config file (or the defaults) and apply command-line overrides.

    Raises:
        ValidationError: If the merged document is not a valid RunConfig.
        ValueError: If the file cannot be read or parsed.
    """
    if args.config is not None:
        try:
            document = json.loads(args.config.read_text(encoding="utf-8"))
        except OSError as e:
            raise ValueError(f"cannot read config file {args.config}: {e}")
        except json.JSONDecodeError as e:
            raise ValueError(f"config file {args.config} is not valid JSON: {e}")
    else:
        document = default_config(args.subcommand)

    if args.preset is not None:
        current = document.get("coefficients") or {}
        parameters = current.get("parameters", {}) if current.get("preset") == args.preset else {}
        document["coefficients"] = {"preset": args.preset, "parameters": parameters}
    if args.param:
        coefficients = document.setdefault("coefficients", {})
        coefficients.setdefault("parameters", {}).update(dict(args.param))
    if args.output is not None:
        document["output_directory"] = args.output
    if args.seed is not None:
        document["seed"] = args.seed

    for attribute, (section, key) in OVERRIDES[args.subcommand].items():
        value = getattr(args, attribute, None)
        if value is None or value is False:
            continue
        document.setdefault(section, {})[key] = value

    return RunConfig.model_validate(document)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.log_level or settings.log_level)

    try:
        config = load_config(args)
    except ValidationError as e:
        logger.warning("Invalid configuration", errors=e.errors(include_url=False))
        return EXIT_USAGE
    except ValueError as e:
        logger.warning("Invalid configuration", error=str(e))
        return EXIT_USAGE

    return run(config, args.subcommand)
