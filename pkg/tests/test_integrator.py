"""
Unit tests for the RK4 integrator, ledger constants and run stopping logic
"""
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import brentq

from app.core.errors import PreconditionError
from app.models.schemas import (
    Densities,
    Formulation,
    GevreyParams,
    LedgerConstants,
    RunControls,
    SimConfig,
    StopReason,
    VorticityFloorParams,
)
from app.services.dynamics import FluidState, VorticityRHS
from app.services.harness import prepare_run
from app.services.integrator import (
    MIN_LEDGER_CONSTANT,
    calibrate_ledger_constant,
    compute_ledger_constants,
    default_time_step,
    rk4_step,
    run,
    sigma_at,
    solve_existence_time,
)
from app.services.presets import init_preset
from app.services.spectral import SpectralField


def _inputs(**overrides):
    return prepare_run(SimConfig(**{"N": 2, **overrides}))


def _run(inputs, **control_updates):
    controls = inputs.controls.model_copy(update=control_updates)
    return run(inputs.state0, inputs.densities, inputs.gp, inputs.vf, controls, inputs.ledger)


def _state_distance(a: FluidState, b: FluidState) -> float:
    return max(
        float(np.max(np.abs(a.omega_s.coeffs - b.omega_s.coeffs))),
        float(np.max(np.abs(a.omega_n.coeffs - b.omega_n.coeffs))),
        float(np.max(np.abs(a.mean_u_s - b.mean_u_s))),
        float(np.max(np.abs(a.mean_u_n - b.mean_u_n))),
    )


@pytest.fixture
def densities():
    return Densities.from_rho_s(0.5)


@pytest.fixture
def controls():
    return RunControls(dt=0.01, t_max=1.0)


class TestExistenceTime:
    """Test the ledger-time quadratic"""

    def test_golden_ratio_root(self):
        # a = b = 2, sigma0 = 2: T^2 + T - 1 = 0
        T1, delta = solve_existence_time(1.0, 1.0, 0.0, 2.0)
        golden = (1.0 + math.sqrt(5.0)) / 2.0
        assert T1 == pytest.approx(golden - 1.0, rel=1e-14)
        assert delta == pytest.approx(2.0 * golden, rel=1e-14)

    def test_zero_radius(self):
        assert solve_existence_time(1.0, 1.0, 0.0, 0.0) == (0.0, 2.0)

    def test_small_radius_limit(self):
        T1, delta = solve_existence_time(1.0, 1.0, 0.0, 1e-12)
        assert T1 == pytest.approx(5e-13, rel=1e-9)
        assert delta == pytest.approx(2.0, rel=1e-9)

    def test_larger_constant_shortens_time(self):
        T_small, _ = solve_existence_time(1.0, 3.0, 0.5, 0.2)
        T_large, _ = solve_existence_time(2.0, 3.0, 0.5, 0.2)
        assert T_large < T_small

    def test_doubling_constant_halves_small_radius_time(self):
        T_base, _ = solve_existence_time(1.0, 2.0, 0.5, 1e-8)
        T_double, _ = solve_existence_time(2.0, 2.0, 0.5, 1e-8)
        assert T_double / T_base == pytest.approx(0.5, rel=1e-6)

    @settings(max_examples=200, deadline=None)
    @given(
        C=st.floats(min_value=0.1, max_value=10.0),
        X0=st.floats(min_value=1.0, max_value=100.0),
        Ubar=st.floats(min_value=0.0, max_value=10.0),
        sigma0=st.floats(min_value=0.01, max_value=1.0),
    )
    def test_matches_bracketed_root(self, C, X0, Ubar, sigma0):
        T1, delta = solve_existence_time(C, X0, Ubar, sigma0)
        reference = brentq(
            lambda T: 2.0 * C * X0 * T * T + 2.0 * C * X0 * (1.0 + Ubar) * T - sigma0,
            0.0, sigma0 / (2.0 * C * X0 * (1.0 + Ubar)), xtol=1e-300, rtol=1e-15,
        )
        assert abs(T1 - reference) <= 1e-12 * reference
        assert delta * T1 == pytest.approx(sigma0, rel=1e-14)


class TestLedgerConstants:
    """Test X0, Ubar and the radius schedule"""

    def test_shear_constants(self):
        state = init_preset("counterflow", {"U": 0.3}, 2)
        gp = GevreyParams(p=2.6, sigma=0.1)
        ledger = compute_ledger_constants(state, gp, 1.0)
        weight = 2.0 ** 2.6 * math.exp(0.2 * math.sqrt(2.0))
        assert ledger.X0 == pytest.approx(1.0 + 2.0 * weight, rel=1e-12)
        assert ledger.Ubar == pytest.approx(0.3)
        assert ledger.sigma0 == 0.1
        assert ledger.delta * ledger.T1 == pytest.approx(0.1, rel=1e-14)

    def test_non_positive_constant_rejected(self):
        with pytest.raises(PreconditionError):
            compute_ledger_constants(init_preset("beltrami_shear", {}, 2), GevreyParams(p=2.6), 0.0)

    def test_sigma_schedule(self):
        ledger = LedgerConstants(C_ledger=1.0, X0=1.0, Ubar=0.0, sigma0=0.1, delta=1.0, T1=0.1)
        assert sigma_at(ledger, 0.0) == 0.1
        assert sigma_at(ledger, 0.05) == pytest.approx(0.05)
        assert sigma_at(ledger, 1.0) == 0.0


class TestTimeStepping:
    """Test the RK4 step"""

    def test_default_step_at_rest(self):
        rest = FluidState(SpectralField.zeros(2), SpectralField.zeros(2), np.zeros(3), np.zeros(3))
        assert default_time_step(rest) == 1.0

    def test_default_step_of_shear(self):
        state = init_preset("beltrami_shear", {}, 3)
        assert default_time_step(state) == pytest.approx(0.5 * 2.0 * np.pi / 7.0, rel=1e-12)

    def test_steady_state_is_preserved(self, densities, controls):
        state = init_preset("beltrami_shear", {}, 3)
        stepped = rk4_step(state, 0.01, densities, controls)
        assert stepped.t == pytest.approx(0.01)
        assert _state_distance(state, stepped) < 1e-13

    def test_exact_for_cubic_forcing(self, densities, controls):
        state = init_preset("beltrami_shear", {}, 2)
        zero = SpectralField.zeros(2)

        def forcing(s: FluidState) -> VorticityRHS:
            return VorticityRHS(zero, zero, np.array([1.0, 2.0, 3.0]) * s.t ** 3, np.zeros(3))

        stepped = rk4_step(state, 0.5, densities, controls, rhs=forcing)
        np.testing.assert_allclose(stepped.mean_u_s, 0.015625 * np.array([1.0, 2.0, 3.0]), rtol=1e-14)
        assert np.array_equal(stepped.mean_u_n, np.zeros(3))

    def test_fourth_order_local_error(self, densities, controls):
        state = init_preset("random_analytic", {"epsilon": 0.1, "sigma_draw": 0.5, "U": 0.5}, 3, seed=2)

        def local_error(dt: float) -> float:
            reference = state
            for _ in range(10):
                reference = rk4_step(reference, dt / 10.0, densities, controls)
            return _state_distance(rk4_step(state, dt, densities, controls), reference)

        ratio = local_error(0.1) / local_error(0.05)
        assert 16.0 <= ratio <= 48.0

    def test_formulations_agree(self, densities):
        state = init_preset("random_analytic", {"epsilon": 0.1, "sigma_draw": 0.5, "U": 0.5}, 3, seed=4)
        by_vorticity = state
        by_velocity = state
        for _ in range(3):
            by_vorticity = rk4_step(by_vorticity, 0.02, densities, RunControls(dt=0.02, t_max=1.0))
            by_velocity = rk4_step(
                by_velocity, 0.02, densities,
                RunControls(dt=0.02, t_max=1.0, formulation=Formulation.VELOCITY),
            )
        assert _state_distance(by_vorticity, by_velocity) < 1e-10


class TestRun:
    """Test stopping logic and bookkeeping of run()"""

    def test_stops_at_ledger_time(self):
        inputs = _inputs(dt=0.001, t_max=1.0)
        result = _run(inputs)
        assert result.stop_reason == StopReason.T1
        assert result.final_state.t == pytest.approx(inputs.ledger.T1, abs=1e-12)
        assert result.steps == math.ceil(inputs.ledger.T1 / 0.001)
        assert len(result.records) == result.steps + 1

    def test_step_cap(self):
        result = _run(_inputs(dt=0.01, C_ledger=1e-4, steps=5))
        assert result.stop_reason == StopReason.TMAX
        assert result.steps == 5
        assert result.final_state.t == pytest.approx(0.05)

    def test_horizon_without_ledger_stop(self):
        result = _run(_inputs(dt=0.01, t_max=0.03, stop_on_t1=False))
        assert result.stop_reason == StopReason.TMAX
        assert result.final_state.t == pytest.approx(0.03)

    def test_initial_floor_precondition(self):
        inputs = _inputs(dt=0.01)
        vf = VorticityFloorParams(m_i=1.5, m_f=0.5, C0=1.0, sigma0=inputs.gp.sigma)
        with pytest.raises(PreconditionError):
            run(inputs.state0, inputs.densities, inputs.gp, vf, inputs.controls, inputs.ledger)

    def test_radius_mismatch(self):
        inputs = _inputs(dt=0.01)
        gp = GevreyParams(p=inputs.gp.p, sigma=inputs.gp.sigma / 2.0)
        with pytest.raises(PreconditionError):
            run(inputs.state0, inputs.densities, gp, inputs.vf, inputs.controls, inputs.ledger)

    def test_radius_reaching_zero_warns(self):
        result = _run(_inputs(dt=0.01, t_max=0.05, C_ledger=100.0, stop_on_t1=False))
        assert result.stop_reason == StopReason.TMAX
        assert result.event("SIGMA_ZERO") is not None
        assert len(result.warnings) == 1
        assert result.records[-1].sigma == 0.0

    def test_records_are_deterministic(self):
        first = _run(_inputs(N=3, ic={"name": "counterflow", "params": {"U": 0.5}}, dt=0.01, C_ledger=1e-4, steps=5))
        second = _run(_inputs(N=3, ic={"name": "counterflow", "params": {"U": 0.5}}, dt=0.01, C_ledger=1e-4, steps=5))
        rows = [[list(r.to_row().values()) for r in result.records] for result in (first, second)]
        np.testing.assert_array_equal(np.array(rows[0]), np.array(rows[1]))

    def test_snapshot_hook_period(self):
        inputs = _inputs(dt=0.01, C_ledger=1e-4, steps=6, snapshot_every=2)
        seen = []
        run(
            inputs.state0, inputs.densities, inputs.gp, inputs.vf, inputs.controls, inputs.ledger,
            lambda step, state: seen.append((step, state.t)),
        )
        assert [step for step, _ in seen] == [2, 4, 6]
        assert seen[-1][1] == pytest.approx(0.06)

    def test_summary_fields(self):
        result = _run(_inputs(dt=0.01, C_ledger=1e-4, steps=2))
        summary = result.to_dict()
        assert summary["stop_reason"] == "TMAX"
        assert summary["steps"] == 2
        assert summary["torque_budget"] == pytest.approx(0.25)
        assert summary["momentum_drift"] == 0.0


class TestCalibration:
    """Test the calibration run that estimates the ledger constant"""

    def test_steady_state_hits_minimum(self, densities, controls):
        state = init_preset("beltrami_shear", {}, 2)
        constant = calibrate_ledger_constant(state, densities, GevreyParams(p=2.6, sigma=0.1), controls, steps=3)
        assert constant == pytest.approx(2.0 * MIN_LEDGER_CONSTANT)

    def test_counterflow_constant_is_positive(self, densities):
        state = init_preset("counterflow", {"U": 1.0}, 3)
        controls = RunControls(dt=0.01, t_max=0.05)
        constant = calibrate_ledger_constant(state, densities, GevreyParams(p=2.6, sigma=0.1), controls)
        assert constant >= 2.0 * MIN_LEDGER_CONSTANT
        assert math.isfinite(constant)
