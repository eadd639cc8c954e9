"""
Tests for the pointwise lower-bound algebra.
"""

import numpy as np
import pytest

from anisotropic_heat_kernel.algebra import (
    S_value,
    algebra_report,
    gamma_coefficients,
    gamma_form,
    gamma_psd_violations,
    group_term_residual,
    identity_residual_by_regime,
    optimal_k_numeric,
    p_vector,
    polar_symbol,
    PolarArguments,
    psd_q_grid,
    verify_identity_SG,
)
from anisotropic_heat_kernel.coefficients import bilaplacian, constant_field, smooth_q_sweep
from anisotropic_heat_kernel.errors import ClassificationError
from anisotropic_heat_kernel.models import AlgebraParams, Domain2D, Regime
from anisotropic_heat_kernel.symbol import k_of_q


@pytest.fixture
def domain():
    return Domain2D.square(1.0, 9)


class TestPVector:
    """Regression values of p(x, xi, eta)."""

    def test_large_q(self, domain):
        """Test p for Q = 5, xi = (1, 0), eta = (0, 1)."""
        field = constant_field(domain, 1.0, 5.0, 1.0)
        result = p_vector(field, (0.0, 0.0), (1.0, 0.0), (0.0, 1.0))
        assert result.regime is Regime.Q_LARGE
        assert result.p == pytest.approx((0.0, -4.0, 0.0, 0.0, 0.0, 0.0))

    def test_convex(self, domain):
        """Test p for the bi-Laplacian, xi = 0, eta = (1, 1)."""
        result = p_vector(bilaplacian(domain), (0.0, 0.0), (0.0, 0.0), (1.0, 1.0))
        assert result.regime is Regime.CONVEX
        assert result.p == pytest.approx((-3.0, -3.0, -3.0, 0.0, 0.0, 0.0))


class TestGamma:
    """Tests for the form Gamma and its coefficients."""

    def test_convex_value(self, domain):
        """Test Gamma(p, p) = 8/3 for Q = 1, p = (1, 1, 0, 0, 0, 0)."""
        p = (1.0, 1.0, 0.0, 0.0, 0.0, 0.0)
        assert gamma_form(bilaplacian(domain), (0.0, 0.0), p, p) == pytest.approx(8.0 / 3.0)

    def test_negative_q_last_coefficient(self):
        """Test the p6 coefficient at Q = -1/2."""
        evaluation = gamma_coefficients(-0.5)
        assert evaluation.regime is Regime.Q_NEGATIVE
        assert evaluation.coefficients[-1] == ((6,), pytest.approx(24.5))

    @pytest.mark.parametrize("q", [-0.99, -0.5, 0.0, 1.0, 3.0, 3.01, 7.0, 20.0])
    def test_coefficients_are_nonnegative(self, q):
        assert gamma_coefficients(q).positive_semidefinite

    def test_no_violations_on_grid(self):
        assert gamma_psd_violations(psd_q_grid(-0.99, 20.0, 0.05)) == 0

    def test_psd_grid_endpoints(self):
        grid = psd_q_grid(-0.99, 20.0, 0.01)
        assert grid[0] == pytest.approx(-0.99)
        assert grid[-1] == pytest.approx(20.0)

    def test_rejects_non_elliptic_q(self):
        with pytest.raises(ClassificationError):
            gamma_coefficients(-1.0)


class TestIdentity:
    """Tests for S = Gamma(p, p) and S >= 0."""

    def test_identity_per_regime(self):
        """Test the identity on random coefficients of every regime."""
        by_regime, min_s = identity_residual_by_regime(5000, np.random.default_rng(7))
        assert set(by_regime) == set(Regime)
        assert max(by_regime.values()) <= 1e-10
        assert min_s >= -1e-10

    def test_identity_on_field(self, domain):
        """Test the identity at nodes of a sweep across all three regimes."""
        field = smooth_q_sweep(domain, q_min=-0.8, q_max=8.0, profile="linear")
        assert verify_identity_SG(field, 3000, np.random.default_rng(1)) <= 1e-10

    def test_s_value_nonnegative(self, domain):
        field = constant_field(domain, 1.0, -0.5, 1.0)
        rng = np.random.default_rng(3)
        for _ in range(50):
            xi, eta = rng.normal(size=2), rng.normal(size=2)
            assert S_value(field, (0.0, 0.0), xi, xi, eta) >= -1e-10

    def test_s_vanishes_at_convex_saddle(self, domain):
        """Test that S = 0 at xi = sqrt(3) eta for the bi-Laplacian."""
        eta = np.array([0.6, 0.8])
        xi = np.sqrt(3.0) * eta
        value = S_value(bilaplacian(domain), (0.0, 0.0), xi, xi, eta)
        assert value == pytest.approx(0.0, abs=1e-12)

    def test_polar_symbol_restricts_to_symbol(self, domain):
        """Test that A(x, z, z) with real z is the symbol."""
        args = PolarArguments(x=(0.0, 0.0), z=(1.0, 2.0), z_prime=(1.0, 2.0))
        assert polar_symbol(args, bilaplacian(domain)) == pytest.approx(25.0)


class TestGroupTerm:
    """Tests for the xi1^2 eta^2 group closed form."""

    @pytest.mark.parametrize("beta", [-0.5, 1.0, 5.0])
    def test_group_matches_closed_form(self, domain, beta):
        field = constant_field(domain, 1.3, beta * np.sqrt(1.3 * 0.7), 0.7)
        residual = group_term_residual(field, (0.0, 0.0), (0.9, 0.0), (-0.4, 0.0), (0.3, -1.1))
        assert residual <= 1e-8


class TestOptimalK:
    """Tests for the numerical optimal k."""

    @pytest.mark.parametrize("q,k", [(-0.5, 48.0), (1.0, 8.0), (5.0, 24.0)])
    def test_matches_regression_values(self, q, k):
        assert optimal_k_numeric(q) == pytest.approx(k, abs=1e-5)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    @pytest.mark.parametrize("q", [-0.9, -0.5, -0.1, 0.0, 0.5, 1.0, 2.0, 3.0, 5.0, 10.0])
    def test_matches_formula_for_every_start(self, q, seed):
        """Test k(Q) from several random start sets, including Q near -1."""
        k = optimal_k_numeric(q, rng=np.random.default_rng(seed))
        assert k == pytest.approx(float(k_of_q(q)), rel=1e-6)

    def test_rejects_non_elliptic_q(self):
        with pytest.raises(ClassificationError):
            optimal_k_numeric(-1.0)


class TestAlgebraReport:
    """Tests for algebra_report."""

    def test_small_run_passes(self):
        params = AlgebraParams(samples_per_regime=2000, q_values=[-0.5, 1.0, 5.0], psd_q_step=0.05)
        report = algebra_report(params, np.random.default_rng(11))
        assert report.passed
        assert report.psd_violations == 0
        assert [row.q for row in report.k_numeric_vs_formula] == [-0.5, 1.0, 5.0]
        assert report.samples_per_regime == 2000

    def test_same_seed_same_report(self):
        params = AlgebraParams(samples_per_regime=500, q_values=[1.0], psd_q_step=0.5)
        first = algebra_report(params, np.random.default_rng(5))
        second = algebra_report(params, np.random.default_rng(5))
        assert first.model_dump_json() == second.model_dump_json()
