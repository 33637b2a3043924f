"""
Run orchestration: config loading and resolution, run preparation, simulate
"""
import json
import logging
import math
import os
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import ValidationError

from app.core.config import get_settings
from app.core.errors import ConfigError
from app.core.storage import (
    get_output_dir,
    snapshot_fields,
    write_diagnostics_csv,
    write_report,
    write_snapshot,
)
from app.models.schemas import (
    Densities,
    Formulation,
    GevreyParams,
    LedgerConstants,
    RunControls,
    SimConfig,
    VorticityFloorParams,
)
from app.services.diagnostics import gevrey_distance
from app.services.dynamics import FluidState, min_vorticity_magnitude
from app.services.gevrey import gevrey_norm
from app.services.integrator import RunResult, compute_ledger_constants, default_time_step, rk4_step, run
from app.services.presets import init_preset
from app.services.verifier import unit_wiener_perturbation

logger = logging.getLogger(__name__)

DEFAULT_FLOOR_FRACTION = 0.5
DEFAULT_SIGMA_FRACTION = 0.2
PERTURBATION_SIGMA_DRAW = 1.0


@dataclass
class RunInputs:
    """Everything run() needs, derived from a resolved config"""
    config: SimConfig
    state0: FluidState
    densities: Densities
    gp: GevreyParams
    vf: VorticityFloorParams
    controls: RunControls
    ledger: LedgerConstants


def parse_config(payload: Dict[str, Any]) -> SimConfig:
    """
    Validate a config mapping and resolve it against its initial condition

    Raises:
        ConfigError: On schema errors or violated hypotheses (all named)
    """
    try:
        config = SimConfig.model_validate(payload)
    except ValidationError as e:
        violations = [f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors()]
        raise ConfigError(f"Invalid config: {'; '.join(violations)}", violations)
    resolved, _ = resolve_config(config)
    return resolved


def load_config(path: str) -> SimConfig:
    """
    Load a JSON config file, apply defaults and validate every hypothesis

    Args:
        path: Path to a JSON object

    Returns:
        Resolved SimConfig with m_i measured from the initial condition

    Raises:
        ConfigError: On a missing file, parse error or violated hypothesis
    """
    try:
        with open(path, encoding="utf-8") as handle:
            payload = json.load(handle)
    except FileNotFoundError:
        raise ConfigError(f"Config file not found: {path}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"Config parse error in {path}: {e}")

    if not isinstance(payload, dict):
        raise ConfigError(f"Config in {path} must be a JSON object")
    return parse_config(payload)


def resolve_config(config: SimConfig) -> Tuple[SimConfig, FluidState]:
    """
    Build the initial condition, measure m_i and fill in m_f and sigma0

    The measured floor always replaces a configured m_i. Defaults are
    m_f = 0.5 m_i and sigma0 = 0.2 m_f / C0.

    Returns:
        (resolved config, initial state)

    Raises:
        ConfigError: If a hypothesis is violated; the message lists each one
    """
    state0 = init_preset(config.ic.name, config.ic.params, config.N, config.seed)
    measured, location = min_vorticity_magnitude(state0.omega_s, config.oversample)
    if config.m_i is not None and abs(config.m_i - measured) > 1e-12 * max(1.0, measured):
        logger.warning(f"Configured m_i={config.m_i} replaced by measured floor {measured:.16g}")

    m_f = config.m_f if config.m_f is not None else DEFAULT_FLOOR_FRACTION * measured
    sigma0 = config.sigma0 if config.sigma0 is not None else DEFAULT_SIGMA_FRACTION * m_f / config.C0
    strict = config.strict_mode if config.strict_mode is not None else get_settings().STRICT_MODE
    resolved = config.model_copy(update={"m_i": measured, "m_f": m_f, "sigma0": sigma0})

    violations = resolved.hypothesis_violations(strict)
    if violations:
        raise ConfigError(f"Config violates: {'; '.join(violations)}", violations)

    logger.debug(f"Resolved config: m_i={measured:.6g} at {location}, m_f={m_f:.6g}, sigma0={sigma0:.6g}")
    return resolved, state0


def apply_overrides(config: SimConfig, seed: Optional[int] = None, steps: Optional[int] = None,
                    formulation: Optional[str] = None) -> SimConfig:
    """CLI overrides on top of a file config"""
    payload = config.model_dump()
    if seed is not None:
        payload["seed"] = seed
    if steps is not None:
        payload["steps"] = steps
    if formulation is not None:
        payload["formulation"] = Formulation(formulation)
    return parse_config(payload)


def prepare_run(config: SimConfig) -> RunInputs:
    """Resolve the config and derive densities, norms, floors, controls and ledger constants"""
    resolved, state0 = resolve_config(config)
    gp = resolved.gevrey_params()
    dt = resolved.dt or default_time_step(state0, resolved.oversample)
    ledger = compute_ledger_constants(state0, gp, resolved.C_ledger)
    return RunInputs(
        config=resolved,
        state0=state0,
        densities=resolved.densities(),
        gp=gp,
        vf=resolved.floor_params(),
        controls=resolved.run_controls(dt),
        ledger=ledger,
    )


def simulate(config: SimConfig, out_dir: Optional[str] = None) -> RunResult:
    """
    Run one simulation and write its outputs

    Writes config.json (resolved), diagnostics.csv, summary.json, periodic
    snapshot_<step>.hvbk files and final.hvbk into the output directory.
    """
    inputs = prepare_run(config)
    directory = get_output_dir(out_dir or inputs.config.output_dir)
    write_report(os.path.join(directory, "config.json"), inputs.config.model_dump(mode="json"))

    def snapshot_hook(step: int, state: FluidState) -> None:
        write_snapshot(os.path.join(directory, f"snapshot_{step:06d}.hvbk"), snapshot_fields(state))

    result = run(
        inputs.state0, inputs.densities, inputs.gp, inputs.vf,
        inputs.controls, inputs.ledger, snapshot_hook,
    )

    write_diagnostics_csv(os.path.join(directory, "diagnostics.csv"), result.records)
    write_snapshot(os.path.join(directory, "final.hvbk"), snapshot_fields(result.final_state))
    write_report(os.path.join(directory, "summary.json"), result.to_dict())
    return result


def perturbed_state(state: FluidState, epsilon: float, gp: GevreyParams, seed: int = 0) -> FluidState:
    """Copy of state whose superfluid vorticity moves by epsilon in the weighted norm"""
    direction = unit_wiener_perturbation(state.N, PERTURBATION_SIGMA_DRAW, np.random.default_rng(seed))
    direction = direction.scaled(1.0 / gevrey_norm(direction, gp))
    twin = state.copy()
    twin.omega_s = state.omega_s + direction.scaled(epsilon)
    return twin


def perturbation_trajectory(inputs: RunInputs, epsilon: float, steps: Optional[int] = None,
                            seed: int = 0) -> Tuple[List[float], List[float]]:
    """
    Distance between a run and its epsilon-perturbed twin at every step

    Both trajectories use the same fixed step and the floor guard of run().
    """
    floor = inputs.vf.m_f * get_settings().FRICTION_FLOOR_FRACTION
    controls = inputs.controls
    count = steps or controls.max_steps or max(1, int(math.ceil(controls.t_max / controls.dt)))
    base = inputs.state0
    twin = perturbed_state(base, epsilon, inputs.gp, seed)
    times = [0.0]
    distances = [gevrey_distance(base, twin, inputs.gp)]
    for _ in range(count):
        base = rk4_step(base, controls.dt, inputs.densities, controls, floor)
        twin = rk4_step(twin, controls.dt, inputs.densities, controls, floor)
        times.append(base.t - inputs.state0.t)
        distances.append(gevrey_distance(base, twin, inputs.gp))
    return times, distances


__all__ = [
    "RunInputs",
    "parse_config",
    "load_config",
    "resolve_config",
    "apply_overrides",
    "prepare_run",
    "simulate",
    "perturbed_state",
    "perturbation_trajectory",
]
