"""
Tests for the Finsler dual norm, distance fields and admissibility certificates.
"""

import numpy as np
import pytest

from anisotropic_heat_kernel.coefficients import bilaplacian, constant_field, smooth_q_sweep
from anisotropic_heat_kernel.errors import (
    CertificateError,
    ConvergenceError,
    DomainError,
    MetricError,
    ParameterError,
)
from anisotropic_heat_kernel.finsler import (
    FinslerMetric,
    certified_bracket,
    certify_admissible,
    distance_field,
    dual_norm,
    lipschitz_defect,
    mollify_phi,
    stencil_offsets,
)
from anisotropic_heat_kernel.models import DistanceMethod, Domain2D


@pytest.fixture
def domain():
    return Domain2D.square(1.0, 33)


@pytest.fixture
def euclidean(domain):
    return FinslerMetric(field=bilaplacian(domain))


class TestDualNorm:
    """Tests for dual_norm."""

    def test_bilaplacian_is_euclidean(self, euclidean):
        assert dual_norm(euclidean, (0.0, 0.0), (3.0, 4.0)) == pytest.approx(5.0, rel=1e-7)

    def test_negative_q_axis_value(self, domain):
        """Test F*(e1) for alpha = gamma = 1, beta = -1/2."""
        metric = FinslerMetric(field=constant_field(domain, 1.0, -0.5, 1.0))
        assert dual_norm(metric, (0.0, 0.0), (1.0, 0.0)) == pytest.approx(1.07457, abs=1e-4)

    def test_homogeneous_and_even(self, domain):
        metric = FinslerMetric(field=constant_field(domain, 2.0, 0.3, 0.5))
        value = dual_norm(metric, (0.0, 0.0), (0.4, -0.7))
        assert dual_norm(metric, (0.0, 0.0), (0.8, -1.4)) == pytest.approx(2.0 * value, rel=1e-9)
        assert dual_norm(metric, (0.0, 0.0), (-0.4, 0.7)) == pytest.approx(value, rel=1e-9)

    def test_triangle_inequality(self, domain):
        metric = FinslerMetric(field=constant_field(domain, 1.0, 4.0, 1.0))
        u, v = (0.3, 0.1), (-0.2, 0.5)
        total = dual_norm(metric, (0.0, 0.0), (u[0] + v[0], u[1] + v[1]))
        assert total <= dual_norm(metric, (0.0, 0.0), u) + dual_norm(metric, (0.0, 0.0), v) + 1e-9

    def test_degenerate_symbol(self, domain):
        metric = FinslerMetric(field=constant_field(domain, 1.0, -1.5, 1.0, require_elliptic=False))
        with pytest.raises(MetricError):
            dual_norm(metric, (0.0, 0.0), (1.0, 0.0))

    def test_point_outside_domain(self, euclidean):
        with pytest.raises(DomainError):
            dual_norm(euclidean, (3.0, 0.0), (1.0, 0.0))


class TestStencil:
    """Tests for stencil_offsets."""

    @pytest.mark.parametrize("order,count", [(1, 4), (2, 8), (3, 16)])
    def test_direction_counts(self, order, count):
        assert len(stencil_offsets(order)) == count

    def test_rejects_order_zero(self):
        with pytest.raises(ParameterError):
            stencil_offsets(0)


class TestDistanceField:
    """Tests for distance_field."""

    def test_closed_form_bilaplacian(self, euclidean, domain):
        dist = distance_field(euclidean, (0.0, 0.0), DistanceMethod.CLOSED_FORM)
        x1, x2 = domain.mesh()
        np.testing.assert_allclose(dist.values, np.hypot(x1, x2), atol=1e-6)
        assert dist.method is DistanceMethod.CLOSED_FORM

    def test_closed_form_needs_constant_field(self, domain):
        metric = FinslerMetric(field=smooth_q_sweep(domain))
        with pytest.raises(ParameterError):
            distance_field(metric, (0.0, 0.0), DistanceMethod.CLOSED_FORM)

    def test_dijkstra_brackets_euclidean(self, euclidean, domain):
        """Test that order-3 stencil paths overestimate |x| by at most 2%."""
        dist = distance_field(euclidean, (0.0, 0.0))
        exact = np.hypot(*domain.mesh())
        assert np.all(dist.values >= exact - 1e-7)
        assert np.all(dist.values <= 1.02 * exact + 1e-7)
        assert dist.source_node == (16, 16)

    def test_higher_order_is_more_accurate(self, euclidean, domain):
        exact = np.hypot(*domain.mesh())
        coarse = distance_field(euclidean, (0.0, 0.0), stencil_order=1)
        fine = distance_field(euclidean, (0.0, 0.0), stencil_order=3)
        assert np.max(fine.values - exact) < np.max(coarse.values - exact)

    def test_source_is_snapped(self, euclidean, domain):
        dist = distance_field(euclidean, (0.01, -0.01))
        assert dist.source == domain.node_point((16, 16))
        assert dist.at((0.0, 0.0)) == 0.0

    def test_source_outside_domain(self, euclidean):
        with pytest.raises(DomainError):
            distance_field(euclidean, (1.5, 0.0))

    def test_dijkstra_is_lipschitz(self, domain):
        metric = FinslerMetric(field=smooth_q_sweep(domain, modulation=0.2))
        dist = distance_field(metric, (0.25, -0.25))
        assert lipschitz_defect(metric, dist) <= 1e-10

    def test_sweeping_is_symmetric_for_bilaplacian(self):
        metric = FinslerMetric(field=bilaplacian(Domain2D.square(1.0, 25)))
        dist = distance_field(metric, (0.0, 0.0), DistanceMethod.FAST_SWEEPING)
        assert dist.values[12, 12] == 0.0
        assert np.all(dist.values >= 0.0)
        np.testing.assert_allclose(dist.values, dist.values.T, atol=1e-5)
        assert dist.values[20, 12] > dist.values[16, 12] > 0.0

    def test_sweeping_iteration_cap(self, euclidean):
        with pytest.raises(ConvergenceError) as excinfo:
            distance_field(euclidean, (0.0, 0.0), DistanceMethod.FAST_SWEEPING, max_iterations=1)
        assert excinfo.value.residual > 0.0

    def test_summary(self, euclidean):
        summary = distance_field(euclidean, (0.0, 0.0), DistanceMethod.CLOSED_FORM).summary()
        assert summary.max_value == pytest.approx(np.sqrt(2.0), rel=1e-7)
        assert summary.bracket is None


class TestCertificates:
    """Tests for certify_admissible and certified_bracket."""

    def test_linear_phi_is_admissible(self, euclidean, domain):
        x1, _ = domain.mesh()
        certificate = certify_admissible(euclidean, x1, M=1.0)
        assert certificate.admissible
        assert certificate.sup_A_grad == pytest.approx(1.0)
        assert certificate.lower_bound((0.0, 0.0), (0.5, 0.0)) == pytest.approx(0.5)

    def test_steep_phi_is_not_admissible(self, euclidean, domain):
        x1, _ = domain.mesh()
        certificate = certify_admissible(euclidean, 2.0 * x1, M=1.0)
        assert not certificate.admissible
        with pytest.raises(CertificateError):
            certificate.lower_bound((0.0, 0.0), (0.5, 0.0))

    def test_curved_phi_needs_large_m(self, euclidean, domain):
        x1, x2 = domain.mesh()
        phi = 0.25 * (x1**2 + x2**2)
        assert certify_admissible(euclidean, phi, M=1.0).admissible
        assert not certify_admissible(euclidean, phi, M=0.1).admissible

    def test_rejects_bad_arguments(self, euclidean):
        with pytest.raises(ParameterError):
            certify_admissible(euclidean, np.zeros((3, 3)), M=1.0)
        with pytest.raises(ParameterError):
            certify_admissible(euclidean, np.zeros((33, 33)), M=0.0)

    def test_mollify_rejects_tiny_scale(self, domain):
        with pytest.raises(ParameterError):
            mollify_phi(np.zeros(domain.shape), domain, 0.1 * domain.h1)

    def test_bracket_rejects_scale_below_spacing(self, euclidean, domain):
        dist = distance_field(euclidean, (0.0, 0.0), DistanceMethod.CLOSED_FORM)
        with pytest.raises(ParameterError, match="grid spacing"):
            certified_bracket(euclidean, dist, 0.8 * domain.h1, (0.5, 0.0))

    def test_bracket_contains_distance(self, euclidean, domain):
        """Test lower <= d <= upper for the Euclidean distance to (0.5, 0)."""
        dist = distance_field(euclidean, (0.0, 0.0), DistanceMethod.CLOSED_FORM)
        certificate, (lower, upper) = certified_bracket(euclidean, dist, domain.h1, (0.5, 0.0))
        assert certificate.admissible
        assert upper == pytest.approx(0.5)
        assert 0.35 < lower <= upper + 1e-12
