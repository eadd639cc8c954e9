"""
Tests for grid functions, the assembled operator and the discrete quadratic forms.
"""

import numpy as np
import pytest

from anisotropic_heat_kernel.coefficients import bilaplacian, constant_field, smooth_q_sweep
from anisotropic_heat_kernel.discretization import (
    GridFunction,
    assemble_operator,
    bump,
    clamped_mask,
    principal_form,
    principal_form_groups,
    quadratic_form,
    twisted_form,
    unknown_indices,
)
from anisotropic_heat_kernel.errors import (
    ParameterError,
    ResolutionError,
    ScalingError,
    SupportError,
)
from anisotropic_heat_kernel.models import Domain2D


@pytest.fixture
def domain():
    return Domain2D.square(1.0, 33)


@pytest.fixture
def sweep(domain):
    return smooth_q_sweep(domain, q_min=-0.5, q_max=5.0, modulation=0.2)


class TestGridFunction:
    """Tests for GridFunction and bumps."""

    def test_shape_must_match(self, domain):
        with pytest.raises(ParameterError, match="shape"):
            GridFunction.of(domain, np.zeros((4, 4)))

    def test_values_must_be_finite(self, domain):
        values = np.zeros(domain.shape)
        values[3, 3] = np.nan
        with pytest.raises(ParameterError, match="non-finite"):
            GridFunction.of(domain, values)

    def test_delta_has_unit_mass(self, domain):
        delta = GridFunction.delta(domain, (10, 12))
        assert delta.mass() == pytest.approx(1.0)
        assert delta.is_clamped()

    def test_norm(self, domain):
        ones = GridFunction.of(domain, np.ones(domain.shape))
        assert ones.norm() == pytest.approx(np.sqrt(domain.n1 * domain.n2 * domain.cell_area))

    def test_clamped_mask_has_two_layers(self, domain):
        mask = clamped_mask(domain)
        assert mask[1, 16] and mask[16, 31]
        assert not mask[2, 2]
        assert unknown_indices(domain).size == (domain.n1 - 4) * (domain.n2 - 4)

    def test_bump_vanishes_on_clamped_layers(self, domain):
        u = bump(domain, (0.9, 0.0), 0.5, frequency=(2.0, 1.0))
        assert u.is_clamped()
        assert np.abs(u.values[26, 16]) > 0.0

    def test_bump_rejects_radius(self, domain):
        with pytest.raises(ParameterError):
            bump(domain, (0.0, 0.0), 0.0)


class TestAssembleOperator:
    """Tests for assemble_operator."""

    def test_size_and_symmetry(self, sweep, domain):
        operator = assemble_operator(sweep)
        assert operator.size == (domain.n1 - 4) * (domain.n2 - 4)
        assert operator.real_coefficients
        assert operator.symmetry_defect() <= 1e-14

    def test_complex_coefficients_stay_complex(self, domain):
        field = constant_field(domain, 1.0, 1.0 + 0.3j, 1.0)
        operator = assemble_operator(field)
        assert not operator.real_coefficients
        assert np.iscomplexobj(operator.matrix.data)

    def test_coarse_grid_rejected(self):
        with pytest.raises(ResolutionError):
            assemble_operator(bilaplacian(Domain2D.square(1.0, 5)))

    def test_restrict_requires_clamped(self, sweep, domain):
        operator = assemble_operator(sweep)
        with pytest.raises(SupportError):
            operator.restrict(GridFunction.of(domain, np.ones(domain.shape)))

    def test_apply_round_trip(self, sweep, domain):
        operator = assemble_operator(sweep)
        u = bump(domain, (0.1, -0.2), 0.5)
        applied = operator.apply(u)
        np.testing.assert_allclose(
            applied.values.ravel()[operator.unknowns], operator.matrix @ operator.restrict(u)
        )
        assert applied.is_clamped()


class TestQuadraticForm:
    """Tests for quadratic_form, twisted_form and the principal form."""

    def test_matches_operator(self, sweep, domain):
        """Test Q(u) = h1 h2 u^H H u."""
        operator = assemble_operator(sweep)
        u = bump(domain, (0.1, 0.1), 0.6, frequency=(3.0, -1.0))
        vector = operator.restrict(u)
        expected = domain.cell_area * np.vdot(vector, operator.matrix @ vector)
        assert quadratic_form(sweep, u) == pytest.approx(expected, rel=1e-10)

    def test_positive_for_elliptic_field(self, sweep, domain):
        u = bump(domain, (0.0, 0.0), 0.7)
        value = quadratic_form(sweep, u)
        assert value.real > 0.0
        assert abs(value.imag) <= 1e-12 * value.real

    def test_bilaplacian_is_integral_of_laplacian_squared(self):
        """Test Q(u) against the integral of |Laplacian u|^2 for a smooth bump."""
        domain = Domain2D.square(1.0, 129)
        u = bump(domain, (0.0, 0.0), 0.6)
        x1, x2 = domain.mesh()
        rho2 = (x1**2 + x2**2) / 0.36
        inside = rho2 < 1.0
        # Laplacian of (1 - r^2/R^2)^6 in the plane
        s = np.where(inside, 1.0 - rho2, 0.0)
        laplacian = (-24.0 * s**5 + 120.0 * rho2 * s**4) / 0.36
        expected = domain.cell_area * np.sum(laplacian**2)
        assert quadratic_form(bilaplacian(domain), u).real == pytest.approx(expected, rel=2e-2)

    def test_requires_clamped(self, sweep, domain):
        with pytest.raises(SupportError):
            quadratic_form(sweep, GridFunction.of(domain, np.ones(domain.shape)))

    def test_twisted_form_at_zero_lambda(self, sweep, domain):
        u = bump(domain, (0.0, 0.2), 0.5)
        x1, _ = domain.mesh()
        assert twisted_form(sweep, u, x1, 0.0) == pytest.approx(quadratic_form(sweep, u))

    def test_twisted_form_overflow_guard(self, sweep, domain):
        u = bump(domain, (0.0, 0.0), 0.5)
        x1, _ = domain.mesh()
        with pytest.raises(ScalingError):
            twisted_form(sweep, u, x1, 200.0)
        with pytest.raises(ParameterError):
            twisted_form(sweep, u, np.zeros((3, 3)), 1.0)

    def test_principal_groups(self, sweep, domain):
        """Test that the lambda^0 group is Q(u) and the lambda^4 group weights A(grad phi)."""
        u = bump(domain, (0.0, 0.0), 0.6)
        x1, _ = domain.mesh()
        groups = principal_form_groups(sweep, u, x1, 2.0)
        assert groups[0] == pytest.approx(quadratic_form(sweep, u))
        alpha = sweep.coefficients(*domain.mesh())[0]
        expected = 16.0 * domain.cell_area * np.sum(alpha * np.abs(u.values) ** 2)
        assert groups[4] == pytest.approx(expected, rel=1e-10)
        assert principal_form(sweep, u, x1, 2.0) == pytest.approx(sum(groups.values()))

    def test_principal_form_approaches_twisted_form(self):
        """Test that Q_psi - Q_{1, psi} shrinks under refinement for linear phi and real u."""
        differences = []
        for n in (65, 129):
            domain = Domain2D.square(1.0, n)
            field = bilaplacian(domain)
            u = bump(domain, (0.0, 0.0), 0.6)
            x1, x2 = domain.mesh()
            phi = x1 + 0.5 * x2
            gap = twisted_form(field, u, phi, 1.0) - principal_form(field, u, phi, 1.0)
            differences.append(abs(gap))
        assert differences[1] <= 0.5 * differences[0]
