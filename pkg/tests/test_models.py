"""
Tests for data models: Domain2D, the report models and RunConfig.
"""

import pytest
from pydantic import ValidationError

from anisotropic_heat_kernel.config import settings
from anisotropic_heat_kernel.models import (
    BoundaryKind,
    BoundReport,
    CoefficientSpec,
    Domain2D,
    KernelMethod,
    Regime,
    RunConfig,
    Violation,
)


class TestDomain2D:
    """Tests for Domain2D model."""

    def test_square(self):
        """Test the centred square constructor and the derived spacings."""
        domain = Domain2D.square(1.0, 33)
        assert domain.shape == (33, 33)
        assert domain.h1 == pytest.approx(1.0 / 16.0)
        assert domain.cell_area == pytest.approx(1.0 / 256.0)
        assert domain.boundary_kind is BoundaryKind.DIRICHLET_RECTANGLE

    def test_mesh_is_indexed_along_x1_first(self):
        domain = Domain2D(x1_min=0.0, x1_max=2.0, x2_min=0.0, x2_max=1.0, n1=5, n2=4)
        x1, x2 = domain.mesh()
        assert x1.shape == (5, 4)
        assert x1[4, 0] == 2.0 and x2[0, 3] == 1.0
        assert domain.cell_mesh()[0].shape == (4, 3)

    def test_empty_interval_raises_error(self):
        """Test that x1_min >= x1_max is rejected."""
        with pytest.raises(ValidationError, match="x1_min"):
            Domain2D(x1_min=1.0, x1_max=1.0, x2_min=0.0, x2_max=1.0, n1=5, n2=5)

    def test_too_few_nodes_raises_error(self):
        with pytest.raises(ValidationError):
            Domain2D.square(1.0, 3)

    def test_unknown_field_raises_error(self):
        with pytest.raises(ValidationError):
            Domain2D.square(1.0, 9, spacing=0.1)

    def test_nearest_node_and_node_point(self):
        domain = Domain2D.square(1.0, 9)
        assert domain.nearest_node((0.26, -0.24)) == (5, 3)
        assert domain.node_point((5, 3)) == pytest.approx((0.25, -0.25))
        assert domain.nearest_node((5.0, -5.0)) == (8, 0)

    def test_contains(self):
        domain = Domain2D.square(1.0, 9)
        assert domain.contains((1.0, -1.0))
        assert not domain.contains((1.1, 0.0))
        plane = Domain2D.square(1.0, 9, boundary_kind="full_plane")
        assert plane.contains((10.0, 0.0))

    def test_is_immutable(self):
        domain = Domain2D.square(1.0, 9)
        with pytest.raises(ValidationError):
            domain.n1 = 10


class TestBoundReport:
    """Tests for BoundReport model."""

    @staticmethod
    def report(**overrides):
        values = dict(
            epsilon=0.02,
            s_used=0.5,
            sigma_star=0.2362,
            exponent_constant=0.2162,
            fitted_c_eps=1.2,
            fitted_c_eps_M=0.0,
            calibration_points=10,
            test_points=40,
            violations=[],
        )
        values.update(overrides)
        return BoundReport(**values)

    def test_holds_without_violations(self):
        assert self.report().holds

    def test_violations_break_the_bound(self):
        violation = Violation(x=(0.5, 0.0), x_prime=(0.0, 0.0), t=0.01, margin=-0.3)
        assert not self.report(violations=[violation]).holds

    def test_epsilon_range(self):
        with pytest.raises(ValidationError):
            self.report(epsilon=0.0)

    def test_sigma_empirical_accepts_directions(self):
        report = self.report(sigma_empirical={"0.000000": 0.24, "min": 0.24})
        assert report.model_dump()["sigma_empirical"]["min"] == 0.24


class TestRunConfig:
    """Tests for RunConfig model."""

    def test_defaults(self):
        config = RunConfig(
            domain=Domain2D.square(1.0, 33), coefficients=CoefficientSpec(preset="bilaplacian")
        )
        assert config.kernel.method == "krylov"
        assert config.bound.epsilon == 0.02
        assert config.distance.order == 3
        assert config.bound.times[0] == pytest.approx(1e-3)
        assert config.bound.times[-1] == pytest.approx(1.0)
        assert config.seed == settings.random_seed

    def test_seed_defaults_from_settings(self, monkeypatch):
        monkeypatch.setattr(settings, "random_seed", 7)
        spec = CoefficientSpec(preset="bilaplacian")
        assert RunConfig(domain=Domain2D.square(1.0, 9), coefficients=spec).seed == 7
        assert RunConfig(domain=Domain2D.square(1.0, 9), coefficients=spec, seed=3).seed == 3

    def test_from_json_document(self):
        document = {
            "domain": {"x1_min": -1, "x1_max": 1, "x2_min": -1, "x2_max": 1, "n1": 17, "n2": 17},
            "coefficients": {"preset": "constant", "parameters": {"beta": -0.5}},
            "kernel": {"times": [0.01], "method": "fourier"},
        }
        config = RunConfig.model_validate(document)
        assert config.coefficients.parameters == {"beta": -0.5}
        assert config.kernel.times == [0.01]

    def test_unknown_keys_are_rejected(self):
        with pytest.raises(ValidationError):
            RunConfig.model_validate(
                {
                    "domain": Domain2D.square(1.0, 9).model_dump(),
                    "coefficients": {"preset": "bilaplacian"},
                    "colour": "blue",
                }
            )

    def test_unknown_kernel_method_is_rejected(self):
        with pytest.raises(ValidationError):
            RunConfig(
                domain=Domain2D.square(1.0, 9),
                coefficients=CoefficientSpec(preset="bilaplacian"),
                kernel={"method": "euler"},
            )


class TestEnums:
    """Tests for the string enumerations."""

    def test_values_serialize_as_strings(self):
        assert str(Regime.CONVEX) == "convex"
        assert KernelMethod("krylov_exponential") is KernelMethod.KRYLOV_EXPONENTIAL
