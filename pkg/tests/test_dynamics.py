"""
Unit tests for the Galerkin right-hand sides and the mutual friction
"""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from app.core.errors import ConsistencyError, SingularityError
from app.models.schemas import Densities, GevreyParams
from app.services import dynamics
from app.services.dynamics import (
    FluidState,
    check_friction_orthogonality,
    dissipation_integrand,
    evaluate_friction,
    friction_grid_values,
    friction_orthogonality_residual,
    min_vorticity_magnitude,
    mutual_friction,
    rhs_velocity_form,
    rhs_vorticity_form,
    torque_gevrey_norm,
    torque_term_norms,
)
from app.services.presets import init_preset
from app.services.spectral import curl, sample_field


@pytest.fixture
def densities():
    return Densities.from_rho_s(0.5)


@pytest.fixture
def shear_state():
    return init_preset("beltrami_shear", {}, 3)


@pytest.fixture
def counterflow_state():
    return init_preset("counterflow", {"U": 1.0}, 3)


class TestFluidState:
    """Test the state container"""

    def test_velocities_of_shear(self, shear_state):
        u_s, u_n = shear_state.velocities()
        expected = sample_field(lambda x, y, z: (-np.cos(z), -np.sin(z), 0.0 * x), 3)
        np.testing.assert_allclose(u_s.coeffs, expected.coeffs, atol=1e-14)
        np.testing.assert_allclose(u_n.coeffs, expected.coeffs, atol=1e-14)

    def test_counterflow_is_mean_offset(self, counterflow_state):
        v = counterflow_state.counterflow()
        assert np.allclose(v.mean, [1.0, 0.0, 0.0])
        v.coeffs[:, 3, 3, 3] = 0.0
        assert np.max(np.abs(v.coeffs)) < 1e-15

    def test_from_velocities_round_trip(self, counterflow_state):
        u_s, u_n = counterflow_state.velocities()
        rebuilt = FluidState.from_velocities(u_s, u_n)
        np.testing.assert_allclose(rebuilt.omega_s.coeffs, counterflow_state.omega_s.coeffs, atol=1e-14)
        assert np.allclose(rebuilt.mean_u_n, counterflow_state.mean_u_n)

    def test_non_hermitian_vorticity_rejected(self, shear_state):
        broken = shear_state.omega_s.copy()
        broken.coeffs[0, 4, 3, 3] += 0.5j
        with pytest.raises(ConsistencyError):
            FluidState(broken, shear_state.omega_n.copy(), np.zeros(3), np.zeros(3))

    def test_zero_state_accepted(self):
        rest = init_preset("beltrami_shear", {}, 2)
        rest.omega_s.coeffs[:] = 0.0
        state = FluidState(rest.omega_s, rest.omega_n, np.zeros(3), np.zeros(3))
        assert state.N == 2


class TestFriction:
    """Test the mutual friction kernel"""

    def test_zero_counterflow_gives_zero_friction(self, shear_state):
        friction = mutual_friction(shear_state.omega_s, shear_state.counterflow(), 0.0)
        assert np.max(np.abs(friction.coeffs)) < 1e-15

    def test_counterflow_friction_mean(self, counterflow_state):
        # omega = (cos z, sin z, 0), v = (U, 0, 0): F = (-U sin^2 z, U sin z cos z, 0)
        evaluation = evaluate_friction(counterflow_state.omega_s, counterflow_state.counterflow(), 0.0)
        assert np.allclose(evaluation.mean, [-0.5, 0.0, 0.0], atol=1e-14)
        assert np.allclose(evaluation.integral, (2 * np.pi) ** 3 * np.array([-0.5, 0.0, 0.0]), atol=1e-12)

    def test_constant_fields(self):
        omega = np.zeros((3, 2, 2, 2))
        omega[2] = 1.0
        v = np.zeros((3, 2, 2, 2))
        v[0] = 1.0
        friction = friction_grid_values(omega, v, 0.0)
        assert np.allclose(friction[:, 0, 0, 0], [-1.0, 0.0, 0.0], atol=1e-15)
        assert np.allclose(friction[:, 1, 1, 1], [-1.0, 0.0, 0.0], atol=1e-15)

    def test_floor_breach_raises(self, shear_state):
        with pytest.raises(SingularityError) as info:
            mutual_friction(shear_state.omega_s, shear_state.counterflow(), 2.0)
        assert info.value.location is not None

    def test_friction_is_orthogonal_to_vorticity(self):
        rng = np.random.default_rng(0)
        omega = rng.standard_normal((3, 200)) + 0.1
        v = rng.standard_normal((3, 200))
        friction = friction_grid_values(omega, v, 0.0)
        assert np.max(friction_orthogonality_residual(omega, friction)) < 1e-12

    def test_orthogonality_check_on_random_nodes(self):
        rng = np.random.default_rng(1)
        omega = rng.standard_normal((3, 500))
        v = rng.standard_normal((3, 500))
        v[:, 0] = omega[:, 0]
        v[:, 1] = 0.0
        friction = friction_grid_values(omega, v, 0.0)
        assert check_friction_orthogonality(omega, v, friction) < 1e-13

    def test_non_orthogonal_friction_rejected(self, counterflow_state, monkeypatch):
        monkeypatch.setattr(dynamics, "friction_grid_values", lambda omega, v, floor: omega + v)
        with pytest.raises(ConsistencyError):
            evaluate_friction(counterflow_state.omega_s, counterflow_state.counterflow(), 0.0)

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(min_value=0, max_value=2 ** 32 - 1))
    def test_dissipation_integrand_non_negative(self, seed):
        rng = np.random.default_rng(seed)
        omega = rng.standard_normal((3, 1000))
        v = 10.0 * rng.standard_normal((3, 1000))
        values = dissipation_integrand(omega, v)
        magnitude = np.linalg.norm(omega, axis=0)
        direct = magnitude * np.sum(v ** 2, axis=0) - np.sum(omega * v, axis=0) ** 2 / magnitude
        assert np.all(values >= -1e-12)
        np.testing.assert_allclose(values, direct, rtol=1e-8, atol=1e-8)


class TestRightHandSides:
    """Test both formulations"""

    def test_shear_is_steady(self, shear_state, densities):
        rhs = rhs_vorticity_form(shear_state, densities)
        assert np.max(np.abs(rhs.d_omega_s.coeffs)) < 1e-13
        assert np.max(np.abs(rhs.d_omega_n.coeffs)) < 1e-13
        assert np.max(np.abs(rhs.d_mean_s)) < 1e-15

    def test_mean_equations(self, counterflow_state, densities):
        rhs = rhs_vorticity_form(counterflow_state, densities)
        assert np.allclose(rhs.d_mean_s, [0.25, 0.0, 0.0], atol=1e-14)
        assert np.allclose(rhs.d_mean_n, [-0.25, 0.0, 0.0], atol=1e-14)
        momentum = densities.rho_s * rhs.d_mean_s + densities.rho_n * rhs.d_mean_n
        assert np.max(np.abs(momentum)) < 1e-15

    def test_counterflow_initial_tendency(self, counterflow_state, densities):
        # d omega_s = rho_n U (cos 2z, sin 2z, 0) at t = 0
        rhs = rhs_vorticity_form(counterflow_state, densities)
        expected = sample_field(lambda x, y, z: (0.5 * np.cos(2 * z), 0.5 * np.sin(2 * z), 0.0 * x), 3)
        np.testing.assert_allclose(rhs.d_omega_s.coeffs, expected.coeffs, atol=1e-13)

    def test_vorticity_tendency_is_divergence_free(self, densities):
        state = init_preset("random_analytic", {"epsilon": 0.1, "sigma_draw": 0.5, "U": 0.5}, 3, seed=3)
        rhs = rhs_vorticity_form(state, densities)
        k_dot = np.sum(np.stack(np.meshgrid(*[np.arange(-3, 4)] * 3, indexing="ij")) * rhs.d_omega_s.coeffs, axis=0)
        assert np.max(np.abs(k_dot)) < 1e-12
        assert np.max(np.abs(rhs.d_omega_s.coeffs[:, 3, 3, 3])) == 0.0

    @pytest.mark.parametrize("seed", range(10))
    def test_dual_formulation_consistency(self, densities, seed):
        state = init_preset("random_analytic", {"epsilon": 0.2, "sigma_draw": 0.4, "U": 0.7}, 4, seed=seed)
        du_s, du_n = rhs_velocity_form(state, densities)
        rhs = rhs_vorticity_form(state, densities)

        for du, d_omega, d_mean in ((du_s, rhs.d_omega_s, rhs.d_mean_s), (du_n, rhs.d_omega_n, rhs.d_mean_n)):
            scale = np.max(np.abs(d_omega.coeffs))
            assert np.max(np.abs(curl(du).coeffs - d_omega.coeffs)) <= 1e-8 * scale
            assert np.allclose(du.mean, d_mean, atol=1e-12)

    def test_torque_norm_positive_under_counterflow(self, counterflow_state, densities):
        gp = GevreyParams(p=2.6, sigma=0.1)
        assert torque_gevrey_norm(counterflow_state, densities, gp) > 0.0
        assert torque_gevrey_norm(init_preset("beltrami_shear", {}, 3), densities, gp) < 1e-12

    def test_torque_parts_bound_the_total(self, densities):
        state = init_preset("random_analytic", {"epsilon": 0.1, "sigma_draw": 0.5, "U": 0.5}, 3, seed=1)
        gp = GevreyParams(p=2.6, sigma=0.1)
        parts = torque_term_norms(state, densities, gp)
        assert set(parts) == {"advection", "stretching", "friction"}
        assert torque_gevrey_norm(state, densities, gp) <= sum(parts.values()) * (1 + 1e-12)


class TestVorticityFloor:
    """Test the grid minimum of |omega_s|"""

    @pytest.mark.parametrize("N", [1, 2, 5])
    def test_shear_floor_is_one(self, N):
        value, _ = min_vorticity_magnitude(init_preset("beltrami_shear", {}, N).omega_s)
        assert value == pytest.approx(1.0, abs=1e-13)

    def test_vanishing_field_detected_within_grid_resolution(self):
        omega = sample_field(lambda x, y, z: (np.cos(y), np.cos(z), np.cos(x)), 2)
        value, location = min_vorticity_magnitude(omega, 2)
        M = 10
        assert value <= np.sqrt(3.0) * np.sin(np.pi / M) + 1e-12
        assert len(location) == 3
