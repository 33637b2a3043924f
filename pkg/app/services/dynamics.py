"""
Right-hand sides of the Galerkin HVBK system

Two equivalent formulations are assembled: the velocity form (projected
advection plus friction on u_s, u_n) and the vorticity/mean form (convective
and stretching terms on omega_s, omega_n plus ODEs for the mean velocities).
Both share one friction evaluation per call.
"""
import logging
from dataclasses import dataclass
from typing import Dict, NamedTuple, Optional, Tuple

import numpy as np

from app.core.config import get_settings
from app.core.errors import ConsistencyError, SingularityError
from app.models.schemas import Densities, GevreyParams
from app.services.gevrey import gevrey_norm
from app.services.spectral import (
    PhysicalField,
    SpectralField,
    curl,
    friction_grid_size,
    hermitian_residual,
    leray_project,
    partial,
    pointwise_product_projected,
    to_physical,
    to_spectral,
    velocity_from_vorticity,
)

logger = logging.getLogger(__name__)

BOX_VOLUME = (2.0 * np.pi) ** 3
FRICTION_ORTHOGONALITY_TOLERANCE = 1e-12


def _check_hermitian(name: str, field: SpectralField) -> None:
    """Raise unless coeff(-k) = conj(coeff(k)) to HERMITIAN_TOLERANCE relative to max |coeff|"""
    scale = float(np.max(np.abs(field.coeffs)))
    if scale == 0.0 or not np.isfinite(scale):
        return
    residual = hermitian_residual(field) / scale
    if residual > get_settings().HERMITIAN_TOLERANCE:
        raise ConsistencyError(f"{name} is not Hermitian: relative residual {residual:.3e}")


@dataclass
class FluidState:
    """Vorticities and mean velocities of both fluids at time t"""
    omega_s: SpectralField
    omega_n: SpectralField
    mean_u_s: np.ndarray
    mean_u_n: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        if self.omega_s.N != self.omega_n.N:
            raise ConsistencyError(
                f"Fluids use different truncations: N={self.omega_s.N} vs N={self.omega_n.N}"
            )
        for name, field in (("omega_s", self.omega_s), ("omega_n", self.omega_n)):
            _check_hermitian(name, field)
        self.mean_u_s = np.asarray(self.mean_u_s, dtype=np.float64).reshape(3)
        self.mean_u_n = np.asarray(self.mean_u_n, dtype=np.float64).reshape(3)

    @property
    def N(self) -> int:
        return self.omega_s.N

    def velocities(self) -> Tuple[SpectralField, SpectralField]:
        return (
            velocity_from_vorticity(self.omega_s, self.mean_u_s),
            velocity_from_vorticity(self.omega_n, self.mean_u_n),
        )

    def counterflow(self) -> SpectralField:
        """v = u_n - u_s"""
        u_s, u_n = self.velocities()
        return u_n - u_s

    @classmethod
    def from_velocities(cls, u_s: SpectralField, u_n: SpectralField, t: float = 0.0) -> "FluidState":
        return cls(curl(u_s), curl(u_n), u_s.mean, u_n.mean, t)

    def copy(self) -> "FluidState":
        return FluidState(
            self.omega_s.copy(), self.omega_n.copy(),
            self.mean_u_s.copy(), self.mean_u_n.copy(), self.t,
        )


class VorticityRHS(NamedTuple):
    """Time derivatives of the reformulated unknowns"""
    d_omega_s: SpectralField
    d_omega_n: SpectralField
    d_mean_s: np.ndarray
    d_mean_n: np.ndarray


@dataclass
class FrictionEvaluation:
    """Projected friction together with the grid data it was built from"""
    projected: SpectralField
    grid_min_vorticity: float
    location: Tuple[int, int, int]
    M: int

    @property
    def mean(self) -> np.ndarray:
        return self.projected.coeffs[:, self.projected.N, self.projected.N, self.projected.N].real

    @property
    def integral(self) -> np.ndarray:
        """Box integral of the projected friction, (2 pi)^3 F(0)"""
        return BOX_VOLUME * self.mean


def _cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.stack([
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ])


def _grid_minimum(magnitude: np.ndarray) -> Tuple[float, Tuple[int, int, int]]:
    flat = int(np.argmin(magnitude))
    location = tuple(int(i) for i in np.unravel_index(flat, magnitude.shape))
    return float(magnitude[location]), location


def friction_grid_values(omega: np.ndarray, v: np.ndarray, floor: float) -> np.ndarray:
    """
    Nodewise (omega/|omega|) x (omega x v)

    Raises:
        SingularityError: If min |omega| <= floor
    """
    magnitude = np.sqrt(np.sum(omega ** 2, axis=0))
    value, location = _grid_minimum(magnitude)
    if value <= floor:
        raise SingularityError(
            f"Vorticity floor breached in friction: |omega_s| = {value:.6g} <= {floor:.6g} at node {location}",
            location=location,
            value=value,
        )
    return _cross(omega, _cross(omega, v)) / magnitude


def check_friction_orthogonality(omega: np.ndarray, v: np.ndarray, friction: np.ndarray) -> float:
    """
    Largest |F.omega| / (|omega|^2 |v|) over the grid

    |F| <= |omega||v| on every node. Nodes with v = 0 are skipped.

    Raises:
        ConsistencyError: If the residual exceeds FRICTION_ORTHOGONALITY_TOLERANCE
    """
    dot = np.abs(np.sum(omega * friction, axis=0))
    scale = np.sum(omega ** 2, axis=0) * np.sqrt(np.sum(v ** 2, axis=0))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(scale > 0.0, dot / np.where(scale > 0.0, scale, 1.0), 0.0)
    residual = float(np.max(ratio)) if ratio.size else 0.0
    if residual > FRICTION_ORTHOGONALITY_TOLERANCE:
        raise ConsistencyError(f"Friction is not orthogonal to omega_s: residual {residual:.3e}")
    return residual


def evaluate_friction(omega_s: SpectralField, v: SpectralField, floor: float,
                      oversample: Optional[int] = None) -> FrictionEvaluation:
    M = friction_grid_size(omega_s.N, oversample)
    omega_grid = to_physical(omega_s, M).values
    v_grid = to_physical(v, M).values
    values = friction_grid_values(omega_grid, v_grid, floor)
    check_friction_orthogonality(omega_grid, v_grid, values)
    value, location = _grid_minimum(np.sqrt(np.sum(omega_grid ** 2, axis=0)))
    return FrictionEvaluation(to_spectral(PhysicalField(values), omega_s.N), value, location, M)


def mutual_friction(omega_s: SpectralField, v: SpectralField, floor: float,
                    oversample: Optional[int] = None) -> SpectralField:
    """
    Friction (omega_s/|omega_s|) x (omega_s x v) evaluated on the oversampled grid

    Args:
        omega_s: Superfluid vorticity
        v: Counterflow u_n - u_s
        floor: Admissible lower bound of |omega_s| on the grid
        oversample: Grid factor relative to 2N+1

    Returns:
        Friction truncated to N modes

    Raises:
        SingularityError: If the vorticity floor is breached
    """
    return evaluate_friction(omega_s, v, floor, oversample).projected


def _advection(u: SpectralField, q: SpectralField) -> SpectralField:
    """P^N (u . grad) q on the alias-free grid"""
    gradients = [partial(q, axis) for axis in range(3)]
    return pointwise_product_projected(
        [u] + gradients,
        lambda g: g[0][0] * g[1] + g[0][1] * g[2] + g[0][2] * g[3],
        u.N,
    )


def _check_momentum_cancellation(d_s: np.ndarray, d_n: np.ndarray, densities: Densities,
                                 friction_mean: np.ndarray) -> None:
    residual = densities.rho_s * d_s + densities.rho_n * d_n
    scale = float(np.max(np.abs(friction_mean))) + 1e-300
    if np.max(np.abs(residual)) > 1e-13 * scale:
        raise ConsistencyError(f"Friction momentum does not cancel: residual {residual}")


def rhs_velocity_form(state: FluidState, densities: Densities, floor: float = 0.0,
                      oversample: Optional[int] = None,
                      friction: Optional[FrictionEvaluation] = None) -> Tuple[SpectralField, SpectralField]:
    """
    Velocity-form Galerkin right-hand side

    du_s = -P(u_s.grad u_s) - rho_n P F,  du_n = -P(u_n.grad u_n) + rho_s P F

    Returns:
        (du_s, du_n), both divergence-free
    """
    u_s, u_n = state.velocities()
    evaluation = friction if friction is not None else evaluate_friction(
        state.omega_s, u_n - u_s, floor, oversample
    )
    projected_friction = leray_project(evaluation.projected)

    du_s = leray_project(_advection(u_s, u_s).scaled(-1.0) - projected_friction.scaled(densities.rho_n))
    du_n = leray_project(_advection(u_n, u_n).scaled(-1.0) + projected_friction.scaled(densities.rho_s))

    _check_momentum_cancellation(
        -densities.rho_n * evaluation.mean, densities.rho_s * evaluation.mean,
        densities, evaluation.mean,
    )
    return du_s, du_n


def rhs_vorticity_form(state: FluidState, densities: Densities, floor: float = 0.0,
                       oversample: Optional[int] = None,
                       friction: Optional[FrictionEvaluation] = None) -> VorticityRHS:
    """
    Vorticity/mean-form Galerkin right-hand side

    d omega_s = -P(u_s.grad omega_s) + P(omega_s.grad u_s) - rho_n curl P F
    d omega_n = -P(u_n.grad omega_n) + P(omega_n.grad u_n) + rho_s curl P F
    d mean_s = -rho_n F(0),  d mean_n = +rho_s F(0)
    """
    parts = torque_terms(state, densities, floor, oversample, friction)
    evaluation = parts["evaluation"]
    u_n_terms = parts["normal"]

    d_omega_s = leray_project(parts["advection"] + parts["stretching"] + parts["friction"])
    d_omega_n = leray_project(u_n_terms["advection"] + u_n_terms["stretching"] + u_n_terms["friction"])
    _zero_mean(d_omega_s)
    _zero_mean(d_omega_n)

    d_mean_s = -densities.rho_n * evaluation.mean
    d_mean_n = densities.rho_s * evaluation.mean
    _check_momentum_cancellation(d_mean_s, d_mean_n, densities, evaluation.mean)
    return VorticityRHS(d_omega_s, d_omega_n, d_mean_s, d_mean_n)


def _zero_mean(f: SpectralField) -> None:
    f.coeffs[:, f.N, f.N, f.N] = 0.0


def torque_terms(state: FluidState, densities: Densities, floor: float = 0.0,
                 oversample: Optional[int] = None,
                 friction: Optional[FrictionEvaluation] = None) -> Dict:
    """Separate projected terms of both vorticity equations"""
    u_s, u_n = state.velocities()
    evaluation = friction if friction is not None else evaluate_friction(
        state.omega_s, u_n - u_s, floor, oversample
    )
    friction_curl = curl(evaluation.projected)

    return {
        "evaluation": evaluation,
        "advection": _advection(u_s, state.omega_s).scaled(-1.0),
        "stretching": _advection(state.omega_s, u_s),
        "friction": friction_curl.scaled(-densities.rho_n),
        "normal": {
            "advection": _advection(u_n, state.omega_n).scaled(-1.0),
            "stretching": _advection(state.omega_n, u_n),
            "friction": friction_curl.scaled(densities.rho_s),
        },
    }


def min_vorticity_magnitude(omega_s: SpectralField,
                            oversample: Optional[int] = None) -> Tuple[float, Tuple[int, int, int]]:
    """Grid minimum of |omega_s| with its argmin (an upper bound for the true infimum)"""
    M = friction_grid_size(omega_s.N, oversample)
    grid = to_physical(omega_s, M)
    return _grid_minimum(grid.magnitude())


def _torque_params(gp: GevreyParams) -> GevreyParams:
    return GevreyParams(p=max(gp.p - 1.0, 0.0), sigma=gp.sigma, r=gp.r)


def torque_gevrey_norm(state: FluidState, densities: Densities, gp: GevreyParams,
                       floor: float = 0.0, oversample: Optional[int] = None) -> float:
    """||T_s^N|| in G^{(p-1)/2}_sigma with T_s^N the superfluid vorticity RHS"""
    rhs = rhs_vorticity_form(state, densities, floor, oversample)
    return gevrey_norm(rhs.d_omega_s, _torque_params(gp))


def torque_term_norms(state: FluidState, densities: Densities, gp: GevreyParams,
                      floor: float = 0.0, oversample: Optional[int] = None) -> Dict[str, float]:
    """Norms of the advection, stretching and friction parts of T_s^N"""
    parts = torque_terms(state, densities, floor, oversample)
    params = _torque_params(gp)
    return {
        name: gevrey_norm(leray_project(parts[name]), params)
        for name in ("advection", "stretching", "friction")
    }


def friction_orthogonality_residual(omega: np.ndarray, friction: np.ndarray) -> np.ndarray:
    """Nodewise |F.omega| / (|F||omega|), zero where F vanishes"""
    dot = np.abs(np.sum(omega * friction, axis=0))
    scale = np.sqrt(np.sum(omega ** 2, axis=0)) * np.sqrt(np.sum(friction ** 2, axis=0))
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(scale > 0.0, dot / np.where(scale > 0.0, scale, 1.0), 0.0)


def dissipation_integrand(omega: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Nodewise |omega||v|^2 - (omega.v)^2/|omega|, computed as |omega x v|^2/|omega|"""
    magnitude = np.sqrt(np.sum(omega ** 2, axis=0))
    cross = _cross(omega, v)
    return np.sum(cross ** 2, axis=0) / magnitude


__all__ = [
    "BOX_VOLUME",
    "FluidState",
    "VorticityRHS",
    "FrictionEvaluation",
    "FRICTION_ORTHOGONALITY_TOLERANCE",
    "friction_grid_values",
    "check_friction_orthogonality",
    "evaluate_friction",
    "mutual_friction",
    "rhs_velocity_form",
    "rhs_vorticity_form",
    "torque_terms",
    "min_vorticity_magnitude",
    "torque_gevrey_norm",
    "torque_term_norms",
    "friction_orthogonality_residual",
    "dissipation_integrand",
]
