"""
Time integration of the Galerkin HVBK system

Fixed-step classical RK4 on either formulation, the shrinking radius
sigma(t) = max(sigma0 - delta t, 0), and the stopping logic for the ledger
time T1, the horizon t_max, the vorticity floor (T2) and the torque budget.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from app.core.config import get_settings
from app.core.errors import PreconditionError, SingularityError
from app.models.schemas import (
    Densities,
    DiagnosticsRecord,
    Formulation,
    GevreyParams,
    LedgerConstants,
    RunControls,
    RunEvent,
    RunSummary,
    StopReason,
    VorticityFloorParams,
)
from app.services.diagnostics import build_record, gevrey_ledger, momentum_drift
from app.services.dynamics import (
    FluidState,
    VorticityRHS,
    min_vorticity_magnitude,
    rhs_velocity_form,
    rhs_vorticity_form,
    torque_gevrey_norm,
)
from app.services.gevrey import gevrey_inner
from app.services.spectral import SpectralField, curl, friction_grid_size, leray_project, to_physical

logger = logging.getLogger(__name__)

RHSFunction = Callable[[FluidState], VorticityRHS]
SnapshotHook = Callable[[int, FluidState], None]

BISECTION_RESOLUTION = 0.01
MIN_LEDGER_CONSTANT = 1e-12


@dataclass
class RunResult:
    """Final state, diagnostics series and stop reason of a run"""
    final_state: FluidState
    records: List[DiagnosticsRecord]
    stop_reason: StopReason
    ledger: LedgerConstants
    steps: int
    torque_budget: float
    torque_budget_used: float
    events: List[RunEvent] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)
    t2_bracket: Optional[Tuple[float, float]] = None

    def event(self, kind: str) -> Optional[RunEvent]:
        return next((e for e in self.events if e.kind == kind), None)

    def summary(self) -> RunSummary:
        return RunSummary(
            stop_reason=self.stop_reason,
            t_final=self.final_state.t,
            steps=self.steps,
            T1=self.ledger.T1,
            delta=self.ledger.delta,
            X0=self.ledger.X0,
            Ubar=self.ledger.Ubar,
            C_ledger=self.ledger.C_ledger,
            torque_budget=self.torque_budget,
            torque_budget_used=self.torque_budget_used,
            t2_bracket=self.t2_bracket,
            momentum_drift=momentum_drift(self.records),
            events=self.events,
            warnings=self.warnings,
        )

    def to_dict(self) -> Dict[str, Any]:
        return self.summary().model_dump(mode="json")


def solve_existence_time(C_ledger: float, X0: float, Ubar: float, sigma0: float) -> Tuple[float, float]:
    """
    Positive root T1 of 2CX0 T^2 + 2CX0(1+Ubar) T - sigma0 = 0 and delta = sigma0/T1

    Equivalently T1 = sigma0 / (2 C X0 (1 + Ubar + T1)). The root is evaluated
    without cancellation; sigma0 = 0 gives T1 = 0 and the limiting delta.
    """
    a = 2.0 * C_ledger * X0
    b = a * (1.0 + Ubar)
    if sigma0 == 0.0:
        return 0.0, b
    T1 = 2.0 * sigma0 / (b + math.sqrt(b * b + 4.0 * a * sigma0))
    return T1, sigma0 / T1


def compute_ledger_constants(state0: FluidState, gp: GevreyParams, C_ledger: float) -> LedgerConstants:
    """
    X0, Ubar, delta and T1 for an initial state

    Args:
        state0: Initial state
        gp: Norm indices; gp.sigma is sigma0
        C_ledger: The ledger constant C

    Raises:
        PreconditionError: If C_ledger <= 0 or a norm is not finite
    """
    if not C_ledger > 0.0:
        raise PreconditionError(f"C_ledger must be positive, got {C_ledger}")
    X0, _ = gevrey_ledger(state0, gp)
    Ubar = float(np.linalg.norm(state0.mean_u_s) + np.linalg.norm(state0.mean_u_n))
    if not (math.isfinite(X0) and math.isfinite(Ubar)):
        raise PreconditionError(f"Initial ledger values are not finite: X0={X0}, Ubar={Ubar}")

    T1, delta = solve_existence_time(C_ledger, X0, Ubar, gp.sigma)
    logger.debug(f"Ledger constants: X0={X0:.6g} Ubar={Ubar:.6g} T1={T1:.6g} delta={delta:.6g}")
    return LedgerConstants(C_ledger=C_ledger, X0=X0, Ubar=Ubar, sigma0=gp.sigma, delta=delta, T1=T1)


def sigma_at(ledger: LedgerConstants, elapsed: float) -> float:
    return max(ledger.sigma0 - ledger.delta * elapsed, 0.0)


def default_time_step(state: FluidState, oversample: Optional[int] = None) -> float:
    """0.5 * grid spacing / max grid speed, 1.0 for a fluid at rest"""
    M = friction_grid_size(state.N, oversample)
    speed = 0.0
    for u in state.velocities():
        speed = max(speed, float(np.max(to_physical(u, M).magnitude())))
    if speed == 0.0:
        return 1.0
    return 0.5 * (2.0 * np.pi / (2 * state.N + 1)) / speed


def state_derivative(state: FluidState, densities: Densities, formulation: Formulation,
                     floor: float = 0.0, oversample: Optional[int] = None) -> VorticityRHS:
    """Time derivative of the reformulated unknowns from the selected formulation"""
    if formulation == Formulation.VELOCITY:
        du_s, du_n = rhs_velocity_form(state, densities, floor, oversample)
        return VorticityRHS(curl(du_s), curl(du_n), du_s.mean, du_n.mean)
    return rhs_vorticity_form(state, densities, floor, oversample)


def _advance(state: FluidState, h: float, rhs: VorticityRHS) -> FluidState:
    N = state.N
    return FluidState(
        SpectralField(state.omega_s.coeffs + h * rhs.d_omega_s.coeffs, N),
        SpectralField(state.omega_n.coeffs + h * rhs.d_omega_n.coeffs, N),
        state.mean_u_s + h * rhs.d_mean_s,
        state.mean_u_n + h * rhs.d_mean_n,
        state.t + h,
    )


def _reproject(omega: np.ndarray, N: int) -> SpectralField:
    projected = leray_project(SpectralField(omega, N))
    projected.coeffs[:, N, N, N] = 0.0
    return projected


def rk4_step(state: FluidState, dt: float, densities: Densities, controls: RunControls,
             floor: float = 0.0, rhs: Optional[RHSFunction] = None) -> FluidState:
    """
    One classical Runge-Kutta step

    Args:
        state: State at time t
        dt: Step size
        densities: Density fractions
        controls: Formulation and oversampling
        floor: Singularity guard for every stage
        rhs: Optional replacement right-hand side

    Returns:
        State at t + dt, re-projected to zero-mean divergence-free vorticities

    Raises:
        SingularityError: If any stage breaches the floor
    """
    if rhs is None:
        def rhs(s: FluidState) -> VorticityRHS:
            return state_derivative(s, densities, controls.formulation, floor, controls.oversample)

    k1 = rhs(state)
    k2 = rhs(_advance(state, 0.5 * dt, k1))
    k3 = rhs(_advance(state, 0.5 * dt, k2))
    k4 = rhs(_advance(state, dt, k3))

    combined = VorticityRHS(
        SpectralField(k1.d_omega_s.coeffs + 2.0 * k2.d_omega_s.coeffs + 2.0 * k3.d_omega_s.coeffs + k4.d_omega_s.coeffs, state.N),
        SpectralField(k1.d_omega_n.coeffs + 2.0 * k2.d_omega_n.coeffs + 2.0 * k3.d_omega_n.coeffs + k4.d_omega_n.coeffs, state.N),
        k1.d_mean_s + 2.0 * k2.d_mean_s + 2.0 * k3.d_mean_s + k4.d_mean_s,
        k1.d_mean_n + 2.0 * k2.d_mean_n + 2.0 * k3.d_mean_n + k4.d_mean_n,
    )
    stepped = _advance(state, dt / 6.0, combined)
    return FluidState(
        _reproject(stepped.omega_s.coeffs, state.N),
        _reproject(stepped.omega_n.coeffs, state.N),
        stepped.mean_u_s,
        stepped.mean_u_n,
        state.t + dt,
    )


def _crosses_floor(state: FluidState, h: float, densities: Densities, controls: RunControls,
                   guard: float, m_f: float) -> Tuple[bool, Optional[FluidState]]:
    try:
        trial = rk4_step(state, h, densities, controls, guard)
    except SingularityError:
        return True, None
    value, _ = min_vorticity_magnitude(trial.omega_s, controls.oversample)
    return value < m_f, trial


def _bisect_floor_crossing(state: FluidState, h: float, densities: Densities, controls: RunControls,
                           guard: float, m_f: float) -> Tuple[FluidState, Tuple[float, float]]:
    """Halve [0, h] until the crossing is bracketed to dt/100; return the last state above m_f"""
    lo, hi = 0.0, h
    last_safe = state
    resolution = BISECTION_RESOLUTION * controls.dt
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        crossed, trial = _crosses_floor(state, mid, densities, controls, guard, m_f)
        if crossed:
            hi = mid
        else:
            lo = mid
            last_safe = trial
    return last_safe, (state.t + lo, state.t + hi)


def run(state0: FluidState, densities: Densities, gp: GevreyParams, vf: VorticityFloorParams,
        controls: RunControls, ledger: LedgerConstants,
        snapshot_hook: Optional[SnapshotHook] = None) -> RunResult:
    """
    Integrate until T1, t_max, the step cap, the vorticity floor or the torque budget

    Args:
        state0: Initial state
        densities: Density fractions
        gp: Norm indices; gp.sigma must equal vf.sigma0
        vf: Floors m_i, m_f and the radius sigma0
        controls: Integrator controls
        ledger: Constants from compute_ledger_constants
        snapshot_hook: Called with (step, state) every controls.snapshot_every steps

    Returns:
        RunResult with one diagnostics record per accepted step

    Raises:
        PreconditionError: If the initial floor or sigma0 hypotheses fail
    """
    oversample = controls.oversample
    initial_floor, location = min_vorticity_magnitude(state0.omega_s, oversample)
    if initial_floor < vf.m_i * (1.0 - 1e-12):
        raise PreconditionError(
            f"Initial vorticity floor {initial_floor:.6g} at node {location} is below m_i={vf.m_i:.6g}"
        )
    if not vf.sigma0 < vf.m_i / (2.0 * vf.C0):
        raise PreconditionError("sigma0<m_i/(2*C0) required")
    if abs(gp.sigma - vf.sigma0) > 1e-15 * max(1.0, vf.sigma0):
        raise PreconditionError(f"Gevrey radius {gp.sigma} differs from sigma0 {vf.sigma0}")

    guard = vf.m_f * get_settings().FRICTION_FLOOR_FRACTION
    budget = 0.5 * (vf.m_i - vf.m_f)
    t_start = state0.t
    if controls.stop_on_t1 and ledger.T1 <= controls.t_max:
        horizon, horizon_reason = ledger.T1, StopReason.T1
    else:
        horizon, horizon_reason = controls.t_max, StopReason.TMAX

    def params_at(elapsed: float) -> GevreyParams:
        return GevreyParams(p=gp.p, sigma=sigma_at(ledger, elapsed), r=gp.r)

    logger.info(
        f"Run start: N={state0.N} dt={controls.dt:.4g} horizon={horizon:.4g} "
        f"formulation={controls.formulation.value} m_i={vf.m_i:.6g} m_f={vf.m_f:.6g}"
    )

    state = state0.copy()
    used = 0.0
    steps = 0
    events: List[RunEvent] = []
    warnings: List[str] = []
    exhausted = False
    sigma_warned = False
    floor_event = False
    t2_bracket = None
    torque_previous = torque_gevrey_norm(state, densities, params_at(0.0), guard, oversample)
    records = [build_record(state, densities, params_at(0.0), used, 0.0, oversample)]
    stop_reason = horizon_reason

    while True:
        if controls.max_steps is not None and steps >= controls.max_steps:
            stop_reason = StopReason.TMAX
            break
        remaining = horizon - (state.t - t_start)
        if remaining <= 1e-12 * controls.dt:
            stop_reason = horizon_reason
            break
        h = min(controls.dt, remaining)

        crossed, candidate = _crosses_floor(state, h, densities, controls, guard, vf.m_f)
        if crossed and (controls.stop_on_floor or candidate is None):
            candidate, t2_bracket = _bisect_floor_crossing(state, h, densities, controls, guard, vf.m_f)
            events.append(RunEvent(kind="T2", t=t2_bracket[1], detail={"bracket": list(t2_bracket)}))
            logger.info(f"Vorticity floor m_f={vf.m_f:.6g} crossed in [{t2_bracket[0]:.6g}, {t2_bracket[1]:.6g}]")
            stop_reason = StopReason.T2
        elif crossed and not floor_event:
            floor_event = True
            events.append(RunEvent(kind="FLOOR_CROSSED", t=candidate.t))
            logger.warning(f"Vorticity floor crossed at t={candidate.t:.6g}; continuing")

        h = candidate.t - state.t
        if h > 0.0:
            elapsed = candidate.t - t_start
            torque_now = torque_gevrey_norm(candidate, densities, params_at(elapsed), guard, oversample)
            increment = 0.5 * h * (torque_previous + torque_now)
            if not exhausted and used + increment > budget:
                exhausted = True
                fraction = (budget - used) / increment if increment > 0.0 else 0.0
                t_exhausted = state.t + fraction * h
                events.append(RunEvent(kind="TORQUE_BUDGET", t=t_exhausted, detail={"budget": budget}))
                logger.warning(f"Torque budget {budget:.6g} exhausted at t={t_exhausted:.6g}")
            used += increment
            torque_previous = torque_now

            state = candidate
            steps += 1
            params = params_at(elapsed)
            if params.sigma == 0.0 and not sigma_warned:
                sigma_warned = True
                message = f"sigma(t) reached 0 at t={state.t:.6g}; Gevrey diagnostics reduce to Sobolev norms"
                warnings.append(message)
                events.append(RunEvent(kind="SIGMA_ZERO", t=state.t))
                logger.warning(message)
            records.append(build_record(state, densities, params, used, 0.0, oversample))
            logger.debug(f"step {steps}: t={state.t:.6g} min_vort={records[-1].min_vort:.6g}")

            if snapshot_hook is not None and controls.snapshot_every and steps % controls.snapshot_every == 0:
                snapshot_hook(steps, state)

        if stop_reason == StopReason.T2:
            break
        if exhausted and controls.stop_on_torque_budget:
            stop_reason = StopReason.TORQUE_BUDGET
            break

    logger.info(f"Run stop: reason={stop_reason.value} t={state.t:.6g} steps={steps}")
    return RunResult(
        final_state=state,
        records=records,
        stop_reason=stop_reason,
        ledger=ledger,
        steps=steps,
        torque_budget=budget,
        torque_budget_used=used,
        events=events,
        warnings=warnings,
        t2_bracket=t2_bracket,
    )


def ledger_growth_ratio(state: FluidState, densities: Densities, gp: GevreyParams, Ubar: float,
                        elapsed: float, floor: float = 0.0, oversample: Optional[int] = None) -> float:
    """Q / (2 X (1 + Ubar + t) Y) with Q the frozen-radius growth rate of X"""
    derivative = rhs_vorticity_form(state, densities, floor, oversample)
    params = GevreyParams(p=gp.p, sigma=gp.sigma)
    growth = 2.0 * (
        gevrey_inner(state.omega_s, derivative.d_omega_s, params)
        + gevrey_inner(state.omega_n, derivative.d_omega_n, params)
    )
    X, Y = gevrey_ledger(state, params)
    if Y == 0.0:
        return 0.0
    return growth / (2.0 * X * (1.0 + Ubar + elapsed) * Y)


def calibrate_ledger_constant(state0: FluidState, densities: Densities, gp: GevreyParams,
                              controls: RunControls, floor: float = 0.0,
                              steps: Optional[int] = None) -> float:
    """
    Twice the largest observed ledger growth ratio along a short calibration integration

    The calibration run holds sigma at gp.sigma and stops early at the first singularity.
    """
    Ubar = float(np.linalg.norm(state0.mean_u_s) + np.linalg.norm(state0.mean_u_n))
    count = steps or controls.max_steps or max(1, int(math.ceil(controls.t_max / controls.dt)))
    state = state0
    observed = ledger_growth_ratio(state, densities, gp, Ubar, 0.0, floor, controls.oversample)
    for _ in range(count):
        try:
            state = rk4_step(state, controls.dt, densities, controls, floor)
            observed = max(observed, ledger_growth_ratio(
                state, densities, gp, Ubar, state.t - state0.t, floor, controls.oversample
            ))
        except SingularityError as exc:
            logger.warning(f"Calibration run stopped early: {exc}")
            break
    constant = 2.0 * max(observed, MIN_LEDGER_CONSTANT)
    logger.info(f"Calibrated ledger constant C={constant:.6g} from max ratio {observed:.6g}")
    return constant


__all__ = [
    "RunResult",
    "solve_existence_time",
    "compute_ledger_constants",
    "sigma_at",
    "default_time_step",
    "state_derivative",
    "rk4_step",
    "run",
    "ledger_growth_ratio",
    "calibrate_ledger_constant",
]
