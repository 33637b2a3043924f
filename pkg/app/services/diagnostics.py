"""
Conservation and ledger monitors for HVBK runs
"""
import logging
import math
from typing import Callable, Dict, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid

from app.core.errors import FitError, PreconditionError, SingularityError
from app.models.schemas import (
    Densities,
    DiagnosticsRecord,
    GevreyParams,
    MeanVelocityBoundReport,
)
from app.services.dynamics import (
    BOX_VOLUME,
    FluidState,
    dissipation_integrand,
    min_vorticity_magnitude,
)
from app.services.gevrey import gevrey_norm
from app.services.spectral import (
    SpectralField,
    bracket,
    friction_grid_size,
    to_physical,
    wave_norm_squared,
)

logger = logging.getLogger(__name__)

Stepper = Callable[[FluidState, float], FluidState]


class EnergyBalance(NamedTuple):
    """Kinetic energy and friction dissipation rate of a state"""
    energy: float
    dissipation_rate: float
    energy_s: float
    energy_n: float


def _kinetic_energy(u: SpectralField, rho: float) -> float:
    return 0.5 * rho * BOX_VOLUME * float(np.sum(np.abs(u.coeffs) ** 2))


def energy_balance(state: FluidState, densities: Densities, floor: float = 0.0,
                   oversample: Optional[int] = None) -> EnergyBalance:
    """
    Energies 1/2 rho ||u||^2 and the friction dissipation rate

    The rate is rho_s rho_n times the box integral of |omega_s x v|^2/|omega_s|,
    evaluated by the equal-weight grid sum on the friction grid.

    Raises:
        SingularityError: If min |omega_s| <= floor on the grid
    """
    u_s, u_n = state.velocities()
    energy_s = _kinetic_energy(u_s, densities.rho_s)
    energy_n = _kinetic_energy(u_n, densities.rho_n)

    M = friction_grid_size(state.N, oversample)
    omega = to_physical(state.omega_s, M).values
    v = to_physical(u_n - u_s, M).values
    magnitude = np.sqrt(np.sum(omega ** 2, axis=0))
    lowest = float(np.min(magnitude))
    if lowest <= floor:
        location = tuple(int(i) for i in np.unravel_index(int(np.argmin(magnitude)), magnitude.shape))
        raise SingularityError(
            f"Vorticity floor breached in dissipation: |omega_s| = {lowest:.6g} at node {location}",
            location=location,
            value=lowest,
        )
    rate = densities.rho_s * densities.rho_n * BOX_VOLUME * float(np.mean(dissipation_integrand(omega, v)))
    return EnergyBalance(energy_s + energy_n, rate, energy_s, energy_n)


def total_momentum(state: FluidState, densities: Densities) -> np.ndarray:
    return BOX_VOLUME * (densities.rho_s * state.mean_u_s + densities.rho_n * state.mean_u_n)


def gevrey_ledger(state: FluidState, gp: GevreyParams) -> Tuple[float, float]:
    """
    X = 1 + ||omega_s||^2 + ||omega_n||^2 and Y, the same with an extra A^{1/4}

    Args:
        state: Fluid state
        gp: Norm indices with sigma = sigma(t); gp.r is ignored

    Returns:
        (X, Y)
    """
    x_params = GevreyParams(p=gp.p, sigma=gp.sigma)
    y_params = GevreyParams(p=gp.p, sigma=gp.sigma, r=0.5)
    X = 1.0 + gevrey_norm(state.omega_s, x_params) ** 2 + gevrey_norm(state.omega_n, x_params) ** 2
    Y = gevrey_norm(state.omega_s, y_params) ** 2 + gevrey_norm(state.omega_n, y_params) ** 2
    return X, Y


def sigma_fit(f: SpectralField, min_shells: int = 4) -> float:
    """
    Analyticity radius from the decay of shell-maximum coefficient magnitudes

    Shells are floor(|k|) for k != 0. Each populated shell contributes the point
    (<k*>, log max|coeff|) with k* its argmax; the lowest populated shell is left
    out and the negated least-squares slope is returned.

    Raises:
        FitError: If fewer than min_shells shells remain
    """
    magnitude = np.sqrt(np.sum(np.abs(f.coeffs) ** 2, axis=0))
    peak = float(np.max(magnitude))
    if peak == 0.0:
        raise FitError("Cannot fit the decay of a zero field")

    shells = np.floor(np.sqrt(wave_norm_squared(f.N)) + 1e-12).astype(int)
    kb = bracket(f.N)
    threshold = 1e-14 * peak

    points = []
    for shell in range(1, int(shells.max()) + 1):
        mask = shells == shell
        values = magnitude[mask]
        if values.size == 0 or values.max() <= threshold:
            continue
        best = int(np.argmax(values))
        points.append((float(kb[mask][best]), math.log(float(values[best]))))

    points = points[1:]
    if len(points) < min_shells:
        raise FitError(f"Need at least {min_shells} populated shells beyond the lowest, found {len(points)}")

    x, y = np.array(points).T
    slope, _ = np.polyfit(x, y, 1)
    return float(-slope)


def build_record(state: FluidState, densities: Densities, gp: GevreyParams,
                 torque_budget_used: float, floor: float = 0.0,
                 oversample: Optional[int] = None) -> DiagnosticsRecord:
    """Assemble the ledger row of a state at the current radius gp.sigma"""
    balance = energy_balance(state, densities, floor, oversample)
    X, Y = gevrey_ledger(state, gp)
    min_vort, _ = min_vorticity_magnitude(state.omega_s, oversample)
    try:
        fitted = sigma_fit(state.omega_s)
    except FitError:
        fitted = float("nan")

    return DiagnosticsRecord(
        t=state.t,
        energy_s=balance.energy_s,
        energy_n=balance.energy_n,
        dissipation_rate=balance.dissipation_rate,
        momentum=tuple(float(m) for m in total_momentum(state, densities)),
        X=X,
        Y=Y,
        sigma=gp.sigma,
        min_vort=min_vort,
        mean_u_s=tuple(float(m) for m in state.mean_u_s),
        mean_u_n=tuple(float(m) for m in state.mean_u_n),
        torque_budget_used=torque_budget_used,
        sigma_fit=fitted,
    )


def step_energy_residual(state: FluidState, densities: Densities, dt: float, step: Stepper,
                         floor: float = 0.0, oversample: Optional[int] = None) -> float:
    """
    |E(t+dt) - E(t) + int D| over one step, the integral by Simpson's rule

    The midpoint dissipation comes from an auxiliary half step of the same stepper.
    """
    start = energy_balance(state, densities, floor, oversample)
    middle = energy_balance(step(state, 0.5 * dt), densities, floor, oversample)
    end = energy_balance(step(state, dt), densities, floor, oversample)
    dissipated = dt / 6.0 * (start.dissipation_rate + 4.0 * middle.dissipation_rate + end.dissipation_rate)
    return abs(end.energy - start.energy + dissipated)


def momentum_drift(records: Sequence[DiagnosticsRecord]) -> float:
    """max_t |P(t) - P(0)| / (|P(0)| + 1)"""
    if not records:
        return 0.0
    initial = np.array(records[0].momentum)
    drift = max(float(np.linalg.norm(np.array(r.momentum) - initial)) for r in records)
    return drift / (float(np.linalg.norm(initial)) + 1.0)


def ledger_inequality(records: Sequence[DiagnosticsRecord], delta: float) -> np.ndarray:
    """(X(t) + delta * int_0^t Y) / X(0) along the run, trapezoid in time"""
    t = np.array([r.t for r in records])
    X = np.array([r.X for r in records])
    Y = np.array([r.Y for r in records])
    accumulated = cumulative_trapezoid(Y, t, initial=0.0) if len(records) > 1 else np.zeros(1)
    return (X + delta * accumulated) / X[0]


def mean_velocity_bound_check(records: Sequence[DiagnosticsRecord], densities: Densities,
                              T: Optional[float] = None) -> MeanVelocityBoundReport:
    """
    Check |mean_u(t)| <= |mean_u(0)| + C_mean sup||omega_s||_G t

    C_mean follows the Cauchy-Schwarz chain |F(0)| <= ||omega_s|| ||v|| with
    ||v|| <= ||u_s|| + ||u_n|| bounded through the largest recorded energy, and
    sup||omega_s||_G bounded by sup sqrt(X - 1).
    """
    if not records:
        raise PreconditionError("Mean velocity bound needs a completed run")
    horizon = T if T is not None else records[-1].t
    window = [r for r in records if r.t <= horizon + 1e-12]

    peak_energy = max(r.energy for r in window)
    norm_u_s = math.sqrt(2.0 * peak_energy / (BOX_VOLUME * densities.rho_s))
    norm_u_n = math.sqrt(2.0 * peak_energy / (BOX_VOLUME * densities.rho_n))
    C_mean_s = densities.rho_n * (norm_u_s + norm_u_n)
    C_mean_n = densities.rho_s * (norm_u_s + norm_u_n)
    sup_vorticity = max(math.sqrt(max(r.X - 1.0, 0.0)) for r in window)

    t0 = window[0].t
    start_s = float(np.linalg.norm(window[0].mean_u_s))
    start_n = float(np.linalg.norm(window[0].mean_u_n))
    slack_s, slack_n = [], []
    holds = True
    for record in window:
        elapsed = record.t - t0
        bound_s = start_s + C_mean_s * sup_vorticity * elapsed
        bound_n = start_n + C_mean_n * sup_vorticity * elapsed
        slack_s.append(bound_s - float(np.linalg.norm(record.mean_u_s)))
        slack_n.append(bound_n - float(np.linalg.norm(record.mean_u_n)))
        if slack_s[-1] < -1e-12 * (1.0 + bound_s) or slack_n[-1] < -1e-12 * (1.0 + bound_n):
            holds = False

    return MeanVelocityBoundReport(
        holds=holds,
        C_mean_s=C_mean_s,
        C_mean_n=C_mean_n,
        sup_vorticity_norm=sup_vorticity,
        min_slack_s=min(slack_s),
        max_slack_s=max(slack_s),
        min_slack_n=min(slack_n),
        max_slack_n=max(slack_n),
    )


def velocity_norm_check(state: FluidState, gp: GevreyParams) -> Dict[str, Dict[str, float]]:
    """
    ||u||^2_G <= e^{2 sigma}|mean u|^2 + 2 ||omega||^2 at one lower A-power, per fluid

    Raises:
        PreconditionError: If gp.p < 1
    """
    if gp.p < 1.0:
        raise PreconditionError(f"Velocity norm check needs p >= 1, got p={gp.p}")
    lowered = GevreyParams(p=gp.p - 1.0, sigma=gp.sigma, r=gp.r)
    report = {}
    velocities = dict(zip(("superfluid", "normal"), state.velocities()))
    vorticities = {"superfluid": state.omega_s, "normal": state.omega_n}
    for name, u in velocities.items():
        lhs = gevrey_norm(u, gp) ** 2
        rhs = math.exp(2.0 * gp.sigma) * float(np.sum(u.mean ** 2)) + 2.0 * gevrey_norm(vorticities[name], lowered) ** 2
        report[name] = {"lhs": lhs, "rhs": rhs, "slack": rhs - lhs}
    return report


def gevrey_distance(a: FluidState, b: FluidState, gp: GevreyParams) -> float:
    """Gevrey distance of the vorticities plus Euclidean distance of the means"""
    return math.sqrt(
        gevrey_norm(a.omega_s - b.omega_s, gp) ** 2
        + gevrey_norm(a.omega_n - b.omega_n, gp) ** 2
        + float(np.sum((a.mean_u_s - b.mean_u_s) ** 2))
        + float(np.sum((a.mean_u_n - b.mean_u_n) ** 2))
    )


def perturbation_envelope(times: Sequence[float], distances: Sequence[float],
                          epsilon: float) -> Tuple[float, float]:
    """
    Fit d(t) <= K eps e^{Lambda t}

    Lambda is the (non-negative) least-squares growth rate of log(d/eps); K is
    then the smallest prefactor making the envelope hold at every sample.
    """
    t = np.asarray(times, dtype=np.float64)
    d = np.maximum(np.asarray(distances, dtype=np.float64), 1e-300)
    if t.size > 1 and np.ptp(t) > 0.0:
        growth = max(float(np.polyfit(t, np.log(d / epsilon), 1)[0]), 0.0)
    else:
        growth = 0.0
    prefactor = float(np.max(d / (epsilon * np.exp(growth * t))))
    return prefactor, growth


__all__ = [
    "EnergyBalance",
    "energy_balance",
    "total_momentum",
    "gevrey_ledger",
    "sigma_fit",
    "build_record",
    "step_energy_residual",
    "momentum_drift",
    "ledger_inequality",
    "mean_velocity_bound_check",
    "velocity_norm_check",
    "gevrey_distance",
    "perturbation_envelope",
]
