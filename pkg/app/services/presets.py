"""
Initial-condition presets

Every preset is built around the Beltrami shear u = (-cos z, -sin z, 0) whose
vorticity (cos z, sin z, 0) has unit magnitude everywhere, so the floor of the
returned superfluid vorticity is known in closed form.
"""
import logging
from typing import Callable, Dict, Optional

import numpy as np

from app.core.config import get_settings
from app.core.errors import PresetError
from app.services.dynamics import FluidState, min_vorticity_magnitude
from app.services.verifier import beltrami_core, unit_wiener_perturbation

logger = logging.getLogger(__name__)

PresetBuilder = Callable[[Dict[str, float], int, np.random.Generator], FluidState]

PRESET_DEFAULTS: Dict[str, Dict[str, float]] = {
    "beltrami_shear": {},
    "counterflow": {"U": 1.0},
    "random_analytic": {"epsilon": 0.05, "sigma_draw": 0.3, "U": 0.0},
}


def _beltrami_shear(params: Dict[str, float], N: int, rng: np.random.Generator) -> FluidState:
    core = beltrami_core(N)
    return FluidState(core, core.copy(), np.zeros(3), np.zeros(3))


def _counterflow(params: Dict[str, float], N: int, rng: np.random.Generator) -> FluidState:
    state = _beltrami_shear(params, N, rng)
    state.mean_u_n = state.mean_u_n + np.array([params["U"], 0.0, 0.0])
    return state


def _random_analytic(params: Dict[str, float], N: int, rng: np.random.Generator) -> FluidState:
    """Beltrami core plus independent epsilon-scaled unit-Wiener perturbations per fluid"""
    epsilon = params["epsilon"]
    if not 0.0 <= epsilon < 1.0:
        raise PresetError(f"random_analytic needs epsilon in [0, 1), got {epsilon}")
    sigma_draw = params["sigma_draw"]
    if sigma_draw <= 0.0:
        raise PresetError(f"random_analytic needs sigma_draw > 0, got {sigma_draw}")

    certified = 1.0 - epsilon
    retries = get_settings().PRESET_MAX_RETRIES
    core = beltrami_core(N)
    for attempt in range(retries + 1):
        omega_s = core + unit_wiener_perturbation(N, sigma_draw, rng, unit_modes=True).scaled(epsilon)
        omega_n = core + unit_wiener_perturbation(N, sigma_draw, rng, unit_modes=True).scaled(epsilon)
        measured, _ = min_vorticity_magnitude(omega_s)
        if measured >= certified * (1.0 - 1e-12):
            mean_u_n = np.array([params["U"], 0.0, 0.0])
            return FluidState(omega_s, omega_n, np.zeros(3), mean_u_n)
        logger.warning(f"random_analytic draw {attempt} measured floor {measured:.6g} < {certified:.6g}; redrawing")
    raise PresetError(f"random_analytic could not certify the floor {certified} after {retries} retries")


PRESETS: Dict[str, PresetBuilder] = {
    "beltrami_shear": _beltrami_shear,
    "counterflow": _counterflow,
    "random_analytic": _random_analytic,
}


def init_preset(name: str, params: Optional[Dict[str, float]], N: int, seed: int = 0) -> FluidState:
    """
    Build a preset initial state

    Args:
        name: One of PRESETS
        params: Preset parameters; missing keys take PRESET_DEFAULTS
        N: Truncation radius
        seed: Seed of the random presets

    Returns:
        FluidState at t = 0

    Raises:
        PresetError: On an unknown name, unknown parameter or failed certification
    """
    if name not in PRESETS:
        raise PresetError(f"Unknown preset '{name}'. Available: {sorted(PRESETS)}")
    if N < 1:
        raise PresetError(f"Presets need N >= 1, got {N}")

    merged = dict(PRESET_DEFAULTS[name])
    for key, value in (params or {}).items():
        if key not in merged:
            raise PresetError(f"Preset '{name}' has no parameter '{key}'")
        merged[key] = float(value)

    state = PRESETS[name](merged, N, np.random.default_rng(seed))
    logger.debug(f"Preset {name} built at N={N} with {merged}")
    return state


__all__ = ["PRESETS", "PRESET_DEFAULTS", "init_preset"]
