"""
Tests for the command-line entry point.
"""

import json

import numpy as np
import pytest
import structlog

from anisotropic_heat_kernel import main as cli
from anisotropic_heat_kernel.artifacts import ArtifactWriterConfig, RunArtifactWriter
from anisotropic_heat_kernel.config import Settings
from anisotropic_heat_kernel.errors import InvariantViolation, SolverError
from anisotropic_heat_kernel.logging_config import get_logger, setup_logging
from anisotropic_heat_kernel.main import (
    EXIT_FAILURE,
    EXIT_OK,
    EXIT_USAGE,
    SCHEMA_MODELS,
    build_parser,
    load_config,
    main,
    run,
)
from anisotropic_heat_kernel.models import (
    AlgebraReport,
    CoefficientSpec,
    DistanceSummary,
    Domain2D,
    KernelMetadata,
    RunConfig,
    SymbolReport,
)


@pytest.fixture
def writer(tmp_path):
    return RunArtifactWriter(ArtifactWriterConfig(output_directory=str(tmp_path)))


def make_config(preset="bilaplacian", parameters=None, **overrides):
    return RunConfig(
        domain=Domain2D.square(1.0, 17),
        coefficients=CoefficientSpec(preset=preset, parameters=parameters or {}),
        **overrides,
    )


def read_json(writer, name):
    return json.loads((writer.directory / name).read_text(encoding="utf-8"))


class TestLoadConfig:
    """Tests for argument parsing and configuration overrides."""

    def test_defaults(self):
        config = load_config(build_parser().parse_args(["report"]))
        assert config.coefficients.preset == "bilaplacian"
        assert config.domain.n1 == 65

    def test_bound_default_domain(self):
        config = load_config(build_parser().parse_args(["bound"]))
        assert config.domain.x1_max == 3.0
        assert config.domain.n1 == 97

    def test_subcommand_overrides(self):
        args = build_parser().parse_args(
            ["kernel", "--times", "0.01,0.1", "--source", "20,21", "--method", "fourier", "--svg"]
        )
        config = load_config(args)
        assert config.kernel.times == [0.01, 0.1]
        assert config.kernel.source == (20, 21)
        assert config.kernel.method == "fourier"
        assert config.kernel.svg

    def test_preset_and_parameters(self):
        args = build_parser().parse_args(
            [
                "report",
                "--preset",
                "smooth-Q-sweep",
                "--param",
                "q_max=3",
                "--param",
                "profile=linear",
            ]
        )
        config = load_config(args)
        assert config.coefficients.preset == "smooth-Q-sweep"
        assert config.coefficients.parameters == {"q_max": 3, "profile": "linear"}

    def test_config_file(self, tmp_path):
        path = tmp_path / "run.json"
        document = {
            "domain": Domain2D.square(2.0, 33).model_dump(mode="json"),
            "coefficients": {"preset": "constant", "parameters": {"beta": 4.0}},
            "bound": {"epsilon": 0.05},
        }
        path.write_text(json.dumps(document), encoding="utf-8")
        args = build_parser().parse_args(["bound", "--config", str(path), "--delta", "-0.05"])
        config = load_config(args)
        assert config.domain.x1_max == 2.0
        assert config.bound.epsilon == 0.05
        assert config.bound.delta == -0.05

    def test_unreadable_config_file(self, tmp_path):
        args = build_parser().parse_args(["report", "--config", str(tmp_path / "missing.json")])
        with pytest.raises(ValueError, match="cannot read"):
            load_config(args)

    def test_bad_parameter_syntax(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["report", "--param", "beta"])


class TestRun:
    """Tests for run and its exit statuses."""

    def test_schemas(self, writer):
        assert run(make_config(), "schemas", writer) == EXIT_OK
        assert len(writer.written) == len(SCHEMA_MODELS)
        assert "properties" in read_json(writer, "run_config.schema.json")

    def test_report(self, writer):
        assert run(make_config(), "report", writer) == EXIT_OK
        report = read_json(writer, "report.json")
        assert report["regime"]["k_star"] == pytest.approx(8.0)
        assert report["good_class"]["in_good_class"]
        assert report["q_at_centre"] == pytest.approx(1.0)

    def test_algebra_verify(self, writer):
        config = make_config(
            algebra={"samples_per_regime": 200, "q_values": [1.0], "psd_q_step": 0.5}
        )
        assert run(config, "algebra-verify", writer) == EXIT_OK
        assert read_json(writer, "algebra.json")["passed"]
        assert (writer.directory / "k_table.csv").exists()

    def test_distance(self, writer):
        assert run(make_config(distance={"method": "closed_form"}), "distance", writer) == EXIT_OK
        summary = read_json(writer, "distance.json")
        assert summary["method"] == "closed_form"
        assert summary["max_value"] == pytest.approx(2.0**0.5, rel=1e-6)

    def test_fourier_kernel(self, writer):
        config = make_config(kernel={"times": [0.01, 0.1], "method": "fourier"})
        assert run(config, "kernel", writer) == EXIT_OK
        metadata = read_json(writer, "kernel.json")
        assert metadata["source"] == [8, 8]
        assert len(metadata["files"]) == 6
        assert metadata["symmetry_defect"] is None

    def test_grid_kernel_reports_symmetry(self, writer):
        config = make_config(kernel={"times": [1e-3], "method": "krylov"})
        assert run(config, "kernel", writer) == EXIT_OK
        assert read_json(writer, "kernel.json")["symmetry_defect"] <= 1e-6

    def test_invalid_config_is_usage_error(self, writer):
        assert run(make_config(preset="biharmonic"), "report", writer) == EXIT_USAGE
        assert not (writer.directory / "failure.json").exists()

    def test_bad_preset_parameter_writes_failure(self, writer):
        config = make_config(parameters={"zeta": 1.0})
        assert run(config, "report", writer) == EXIT_USAGE
        assert read_json(writer, "failure.json")["error_type"] == "ParameterError"

    def test_invariant_violation_exits_one(self, writer, mocker):
        error = InvariantViolation("kernel_symmetry", {"symmetry_defect": 0.1})
        handler = mocker.Mock(side_effect=error)
        mocker.patch.dict(cli.HANDLERS, {"kernel": handler})
        assert run(make_config(), "kernel", writer) == EXIT_FAILURE
        failure = read_json(writer, "failure.json")
        assert failure["subcommand"] == "kernel"
        assert failure["error_type"] == "InvariantViolation"
        assert failure["detail"] == {"symmetry_defect": 0.1}

    def test_solver_error_records_residual(self, writer, mocker):
        handler = mocker.Mock(side_effect=SolverError("no convergence", residual=0.5))
        mocker.patch.dict(cli.HANDLERS, {"kernel": handler})
        assert run(make_config(), "kernel", writer) == EXIT_FAILURE
        assert read_json(writer, "failure.json")["detail"] == {"residual": 0.5}

    def test_singular_matrix_is_a_failure_not_a_usage_error(self, writer, mocker):
        handler = mocker.Mock(side_effect=np.linalg.LinAlgError("Singular matrix"))
        mocker.patch.dict(cli.HANDLERS, {"kernel": handler})
        assert run(make_config(), "kernel", writer) == EXIT_FAILURE
        failure = read_json(writer, "failure.json")
        assert failure["error_type"] == "LinAlgError"
        assert failure["message"] == "Singular matrix"


class TestMain:
    """Tests for main."""

    def test_schemas_to_output_directory(self, tmp_path):
        assert main(["schemas", "--output", str(tmp_path)]) == EXIT_OK
        assert (tmp_path / "bound_report.schema.json").exists()

    def test_invalid_document(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"coefficients": {"preset": "bilaplacian"}}), encoding="utf-8")
        assert main(["report", "--config", str(path)]) == EXIT_USAGE

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text("{", encoding="utf-8")
        assert main(["report", "--config", str(path)]) == EXIT_USAGE


class TestEmittedReports:
    """Tests that emitted reports match their published models."""

    @pytest.mark.parametrize(
        "subcommand,overrides,name,model",
        [
            ("report", {}, "report.json", SymbolReport),
            (
                "algebra-verify",
                {"algebra": {"samples_per_regime": 100, "q_values": [0.5], "psd_q_step": 0.5}},
                "algebra.json",
                AlgebraReport,
            ),
            ("distance", {"distance": {"method": "closed_form"}}, "distance.json", DistanceSummary),
            (
                "kernel",
                {"kernel": {"times": [0.1], "method": "fourier"}},
                "kernel.json",
                KernelMetadata,
            ),
        ],
    )
    def test_report_validates_against_model(self, writer, subcommand, overrides, name, model):
        assert run(make_config(**overrides), subcommand, writer) == EXIT_OK
        model.model_validate_json((writer.directory / name).read_text(encoding="utf-8"))

    def test_same_seed_gives_identical_reports(self, tmp_path):
        config = make_config(
            seed=7, algebra={"samples_per_regime": 100, "q_values": [2.0], "psd_q_step": 0.5}
        )
        texts = []
        for name in ("first", "second"):
            target = RunArtifactWriter(ArtifactWriterConfig(output_directory=str(tmp_path / name)))
            assert run(config, "algebra-verify", target) == EXIT_OK
            texts.append((target.directory / "algebra.json").read_bytes())
        assert texts[0] == texts[1]


class TestSettings:
    """Tests for environment-driven settings."""

    def test_prefixed_environment_overrides(self, monkeypatch):
        monkeypatch.setenv("HEATKERNEL_ANGULAR_RESOLUTION", "360")
        monkeypatch.setenv("HEATKERNEL_LOG_LEVEL", "DEBUG")
        settings = Settings()
        assert settings.angular_resolution == 360
        assert settings.log_level == "DEBUG"

    def test_unrelated_variables_ignored(self, monkeypatch):
        monkeypatch.setenv("ANGULAR_RESOLUTION", "12")
        assert Settings().angular_resolution == 720


class TestLogging:
    """Tests for the structured log stream."""

    def test_json_lines_carry_run_context(self, capsys):
        setup_logging("INFO")
        structlog.contextvars.bind_contextvars(run_id="abc", subcommand="report")
        try:
            get_logger("tests").info("Step finished", nodes=17)
        finally:
            structlog.contextvars.clear_contextvars()
        record = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert record["event"] == "Step finished"
        assert record["run_id"] == "abc"
        assert record["subcommand"] == "report"
        assert record["level"] == "info"
        assert record["nodes"] == 17

    def test_unbound_context_is_null(self, capsys):
        setup_logging("INFO")
        get_logger("tests").warning("No run")
        record = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert record["run_id"] is None
        assert record["subcommand"] is None
