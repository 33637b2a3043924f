"""
Unit tests for analytic-class norms, the reciprocal-magnitude bound and its helpers
"""
import math

import numpy as np
import pytest

from app.core.errors import DivergentSeriesError, GevreyRangeError, ResolutionError, SingularityError
from app.models.schemas import GevreyParams, VorticityFloorParams
from app.services.gevrey import (
    ceil_index,
    exact_factorial,
    gevrey_inner,
    gevrey_norm,
    gevrey_weight,
    inv_mag_bound,
    inv_mag_bound_value,
    inv_mag_field,
    l2_norm,
    truncated_reciprocal_norm,
    wiener_constant,
    wiener_norm,
)
from app.services.spectral import PhysicalField, SpectralField, grid_coordinates, to_physical
from app.services.verifier import beltrami_core, random_analytic_field


@pytest.fixture
def unit_constant():
    f = SpectralField.zeros(2)
    f.coeffs[0, 2, 2, 2] = 1.0
    return f


@pytest.fixture
def random_field():
    return random_analytic_field(3, 0.4, np.random.default_rng(11))


class TestNorms:
    """Test weighted norms"""

    def test_constant_field(self, unit_constant):
        assert l2_norm(unit_constant) == pytest.approx(1.0)
        assert gevrey_norm(unit_constant, GevreyParams(p=3.0, sigma=0.2)) == pytest.approx(math.exp(0.2))

    def test_single_mode_weight(self):
        f = SpectralField.zeros(2)
        f.coeffs[0, 3, 2, 2] = 1.0
        f.coeffs[0, 1, 2, 2] = 1.0
        gp = GevreyParams(p=2.0, sigma=0.1)
        expected = math.sqrt(2.0) * 2.0 * math.exp(0.1 * math.sqrt(2.0))
        assert gevrey_norm(f, gp) == pytest.approx(expected, rel=1e-14)

    def test_inner_product_matches_norm(self, random_field):
        gp = GevreyParams(p=2.6, sigma=0.1, r=0.5)
        assert gevrey_inner(random_field, random_field, gp) == pytest.approx(gevrey_norm(random_field, gp) ** 2, rel=1e-12)

    def test_inner_product_truncation_mismatch(self, random_field):
        with pytest.raises(ResolutionError):
            gevrey_inner(random_field, SpectralField.zeros(2), GevreyParams(p=1.0))

    def test_norm_increases_with_sigma(self, random_field):
        low = gevrey_norm(random_field, GevreyParams(p=2.0, sigma=0.0))
        high = gevrey_norm(random_field, GevreyParams(p=2.0, sigma=0.3))
        assert high > low

    def test_norm_monotone_in_regularity(self, random_field):
        by_p = [gevrey_norm(random_field, GevreyParams(p=p, sigma=0.1)) for p in (0.0, 1.0, 2.0, 2.6, 4.0)]
        by_r = [gevrey_norm(random_field, GevreyParams(p=2.0, sigma=0.1, r=r)) for r in (0.0, 0.5, 1.0, 2.0)]
        assert all(a < b for a, b in zip(by_p, by_p[1:]))
        assert all(a < b for a, b in zip(by_r, by_r[1:]))

    def test_cauchy_schwarz(self):
        rng = np.random.default_rng(12)
        gp = GevreyParams(p=2.6, sigma=0.2, r=0.5)
        for _ in range(100):
            f, g = (random_analytic_field(2, 0.3, rng, div_free=False, zero_mean=False) for _ in range(2))
            assert abs(gevrey_inner(f, g, gp)) <= gevrey_norm(f, gp) * gevrey_norm(g, gp) * (1 + 1e-12)

    def test_tiny_coefficients_do_not_underflow(self):
        f = SpectralField.zeros(1)
        f.coeffs[0, 1, 1, 1] = 1e-200
        assert l2_norm(f) == pytest.approx(1e-200, rel=1e-12)

    def test_weight_overflow(self):
        with pytest.raises(GevreyRangeError) as info:
            gevrey_weight(4, GevreyParams(p=1.0, sigma=200.0))
        assert info.value.k is not None

    def test_wiener_norm_dominates_sup(self, random_field):
        sup = float(np.max(to_physical(random_field, 12).magnitude()))
        assert wiener_norm(random_field) >= sup

    def test_wiener_constant_value(self):
        # sum over |k_i| <= 3 of (1+|k|^2)^{-5/2}
        assert wiener_constant(3, 2.5) ** 2 == pytest.approx(4.05, abs=0.02)

    def test_wiener_embedding(self, random_field):
        gp = GevreyParams(p=2.0)
        assert wiener_norm(random_field) <= wiener_constant(3, 2.0) * gevrey_norm(random_field, gp) * (1 + 1e-12)


class TestCeilingAndFactorial:
    """Test integer helpers"""

    def test_ceil_snaps_near_integers(self):
        assert ceil_index(3.0 + 1e-13) == 3
        assert ceil_index(2.5) == 3
        assert ceil_index(0.0) == 0

    def test_exact_factorial(self):
        assert exact_factorial(4) == 24
        assert exact_factorial(20) == 2432902008176640000

    def test_factorial_range(self):
        with pytest.raises(GevreyRangeError):
            exact_factorial(21)


class TestReciprocalBound:
    """Test the closed-form bound on the norm of 1/|omega|"""

    def test_bound_value(self):
        value = inv_mag_bound_value(2.6, 0.0, 1.0, 1.0, 0.1)
        assert value == pytest.approx(math.exp(0.1) + 6.0 / 0.4 ** 4)

    def test_half_power_raises_order(self):
        low = inv_mag_bound_value(2.6, 0.0, 1.0, 1.0, 0.1)
        high = inv_mag_bound_value(2.6, 0.5, 1.0, 1.0, 0.1)
        assert high == pytest.approx(math.exp(0.1) + 24.0 / 0.4 ** 5)
        assert high > low

    def test_divergent_series(self):
        with pytest.raises(DivergentSeriesError):
            inv_mag_bound_value(2.6, 0.0, 0.4, 1.0, 0.2)

    def test_bound_from_floor_params(self):
        vf = VorticityFloorParams(m_i=1.0, m_f=0.5, C0=1.0, sigma0=0.1)
        assert inv_mag_bound(2.6, 0.0, vf) == pytest.approx(inv_mag_bound_value(2.6, 0.0, 0.5, 1.0, 0.1))

    def test_bound_monotone_in_floor_and_radius(self):
        by_floor = [inv_mag_bound_value(2.6, 0.0, m_f, 1.0, 0.1) for m_f in (0.5, 1.0, 2.0, 4.0)]
        by_radius = [inv_mag_bound_value(2.6, 0.0, 1.0, 1.0, s) for s in (0.0, 0.05, 0.1, 0.2)]
        assert all(a > b for a, b in zip(by_floor, by_floor[1:]))
        assert all(a < b for a, b in zip(by_radius, by_radius[1:]))

    def test_reciprocal_field_scales_inversely(self):
        rng = np.random.default_rng(13)
        omega = to_physical(beltrami_core(3) + random_analytic_field(3, 0.5, rng).scaled(0.1), 9)
        once = inv_mag_field(omega, 0.0).values[0]
        doubled = inv_mag_field(PhysicalField(2.0 * omega.values), 0.0).values[0]
        np.testing.assert_allclose(doubled, 0.5 * once, rtol=1e-15)

    def test_reciprocal_of_tilted_shear(self):
        epsilon = 0.3
        x, y, z = grid_coordinates(9)
        omega = PhysicalField(np.stack([np.cos(z), np.sin(z), epsilon * np.cos(z)]))
        reciprocal = inv_mag_field(omega, 0.0)
        np.testing.assert_allclose(reciprocal.values[0], 1.0 / np.sqrt(1.0 + (epsilon * np.cos(z)) ** 2), rtol=1e-14)
        assert np.all(reciprocal.values[1:] == 0.0)
        assert np.min(reciprocal.values[0]) >= 1.0 / np.sqrt(1.0 + epsilon ** 2) - 1e-15

    def test_reciprocal_field_singularity(self):
        with pytest.raises(SingularityError) as info:
            inv_mag_field(PhysicalField(np.zeros((3, 4, 4, 4))), 0.0)
        assert info.value.value == 0.0

    def test_unit_magnitude_reciprocal(self):
        sigma = 0.15
        norm = truncated_reciprocal_norm(beltrami_core(3), GevreyParams(p=2.6, sigma=sigma, r=0.5))
        assert norm == pytest.approx(math.exp(sigma), rel=1e-10)
        assert norm <= inv_mag_bound_value(2.6, 0.5, 1.0, 1.0, sigma)
