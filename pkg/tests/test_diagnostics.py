"""
Tests for the measured hypothesis constants.
"""

import numpy as np
import pytest

from anisotropic_heat_kernel.artifacts import write_grid_csv
from anisotropic_heat_kernel.coefficients import (
    bilaplacian,
    constant_field,
    degenerate_weight,
    rough_perturbation,
    smooth_q_sweep,
    tabulated,
)
from anisotropic_heat_kernel.diagnostics import (
    BumpFamily,
    default_bump_family,
    garding_min_eigenvalue,
    h1_ratio,
    hypothesis_diagnostics,
    measure_bump,
    random_bumps,
)
from anisotropic_heat_kernel.discretization import bump
from anisotropic_heat_kernel.errors import ParameterError
from anisotropic_heat_kernel.models import Domain2D


@pytest.fixture
def domain():
    return Domain2D.square(1.0, 33)


class TestBumpFamily:
    """Tests for bump families and random bumps."""

    def test_default_family_fits(self, domain):
        family = default_bump_family(domain)
        bumps = family.materialize(domain)
        assert bumps
        assert all(u.is_clamped() for _, u in bumps)
        assert len(family.radii) == 5

    def test_oversized_bumps_are_dropped(self, domain):
        family = BumpFamily(radii=[0.95], centres=[(0.0, 0.0)])
        assert family.materialize(domain) == []

    def test_random_bumps_are_clamped(self, domain):
        samples = random_bumps(domain, 6, np.random.default_rng(4))
        assert len(samples) == 6
        assert all(u.is_clamped() and u.norm() > 0.0 for u in samples)

    def test_random_bumps_follow_seed(self, domain):
        first = random_bumps(domain, 3, np.random.default_rng(9))
        second = random_bumps(domain, 3, np.random.default_rng(9))
        for u, v in zip(first, second):
            np.testing.assert_array_equal(u.values, v.values)

    def test_random_bumps_need_a_count(self, domain):
        with pytest.raises(ParameterError):
            random_bumps(domain, 0, np.random.default_rng(0))


class TestHypothesisDiagnostics:
    """Tests for hypothesis_diagnostics."""

    def test_bilaplacian(self, domain):
        result = hypothesis_diagnostics(bilaplacian(domain))
        assert 0.5 <= result.s_estimate <= 0.6
        assert len(result.h1_by_s) == 51
        assert result.h1_constant > 0.0
        assert len(result.eq8_table) == 15
        assert all(c >= 0.0 for _, c in result.h2_table)
        assert result.family_size > 0

    def test_garding_constant_near_one_for_bilaplacian(self, domain):
        """Test that int |Laplacian u|^2 and int |D^2 u|^2 agree for compactly supported u."""
        result = hypothesis_diagnostics(bilaplacian(domain))
        assert 0.5 < result.garding_constant < 1.5

    def test_scaling_exponent_is_one_half_for_bilaplacian(self):
        """Test that dilated bumps see s = 1/2 for the unweighted operator."""
        result = hypothesis_diagnostics(bilaplacian(Domain2D.square(1.0, 129)))
        assert result.s_estimate == pytest.approx(0.5, abs=0.05)

    def test_h2_constants_are_stable_under_refinement(self):
        """Test that the (H2) table drifts by at most 10% from 65^2 to 129^2 nodes."""
        family = BumpFamily(radii=[0.3, 0.45, 0.6], centres=[(0.0, 0.0)])
        coarse, fine = (
            np.array([c for _, c in hypothesis_diagnostics(field, family).h2_table])
            for field in (bilaplacian(Domain2D.square(1.0, n)) for n in (65, 129))
        )
        assert np.max(fine) > 0.0
        np.testing.assert_allclose(coarse, fine, rtol=0.1, atol=0.01 * np.max(fine))

    def test_degenerate_weight(self, domain):
        result = hypothesis_diagnostics(degenerate_weight(domain, delta=0.1))
        assert 0.5 <= result.s_estimate <= 1.0
        assert result.garding_constant > 0.0

    def test_h1_ratio_is_dilation_invariant_at_one_half(self):
        """Test that ||u||_inf / (Q(u)^(1/4) ||u||_2^(1/2)) does not change under dilation."""
        domain = Domain2D.square(1.0, 129)
        field = bilaplacian(domain)
        small = measure_bump(field, bump(domain, (0.0, 0.0), 0.3))
        large = measure_bump(field, bump(domain, (0.0, 0.0), 0.6))
        assert h1_ratio(small, 0.5) == pytest.approx(h1_ratio(large, 0.5), rel=0.02)

    def test_empty_family(self, domain):
        with pytest.raises(ParameterError, match="empty"):
            family = BumpFamily(radii=[2.0], centres=[(0.0, 0.0)])
            hypothesis_diagnostics(bilaplacian(domain), family)


def tabulated_field(domain, directory):
    paths = {}
    for key, value in (("alpha", 1.0), ("beta", 0.5), ("gamma", 2.0)):
        path = directory / f"{key}.csv"
        write_grid_csv(path, domain, np.full(domain.shape, value))
        paths[key] = str(path)
    return tabulated(domain, paths)


class TestGarding:
    """Tests for garding_min_eigenvalue."""

    @pytest.mark.parametrize(
        "build",
        [
            lambda domain, _: constant_field(domain, 1.0, -0.5, 1.0),
            lambda domain, _: bilaplacian(domain),
            lambda domain, _: smooth_q_sweep(domain, modulation=0.2),
            lambda domain, _: degenerate_weight(domain),
            lambda domain, _: rough_perturbation(domain),
            lambda domain, _: rough_perturbation(domain, mode="imaginary"),
            tabulated_field,
        ],
        ids=[
            "constant",
            "bilaplacian",
            "smooth-Q-sweep",
            "degenerate-weight",
            "square-wave",
            "imaginary",
            "tabulated",
        ],
    )
    def test_every_preset_passes(self, domain, tmp_path, build):
        check = garding_min_eigenvalue(build(domain, tmp_path))
        assert check.passed
        assert check.ratio > 0.0
        assert check.nodes == 33

    def test_elliptic_field_passes(self):
        field = constant_field(Domain2D.square(1.0, 65), 1.0, -0.5, 1.0)
        check = garding_min_eigenvalue(field, nodes=17)
        assert check.passed
        assert check.min_eigenvalue > 0.0
        assert check.nodes == 17

    def test_non_elliptic_field_fails(self):
        field = constant_field(Domain2D.square(1.0, 65), 1.0, -1.5, 1.0, require_elliptic=False)
        check = garding_min_eigenvalue(field, nodes=17)
        assert not check.passed
        assert check.ratio < 0.0
