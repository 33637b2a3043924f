"""
Analytic-class norms and Fourier multipliers

Weights are (1+|k|^2)^{(p+r)/2} e^{sigma (1+|k|^2)^{1/2}}, i.e. the symbol of
A^{(p+r)/2} e^{sigma A^{1/2}} with A = I - Laplacian. Norms use the normalized
measure of the box, so a constant unit field has L^2 norm 1.
"""
import logging
import math
from typing import Optional

import numpy as np

from app.core.config import get_settings
from app.core.errors import DivergentSeriesError, GevreyRangeError, ResolutionError, SingularityError
from app.models.schemas import GevreyParams, VorticityFloorParams
from app.services.spectral import (
    PhysicalField,
    SpectralField,
    bracket,
    friction_grid_size,
    to_physical,
    to_spectral,
)

logger = logging.getLogger(__name__)

MAX_EXACT_FACTORIAL = 20


def gevrey_weight(N: int, gp: GevreyParams) -> np.ndarray:
    """
    Multiplier symbol on the (2N+1)^3 cube

    Raises:
        GevreyRangeError: If sigma*<k> exceeds the overflow limit for some k
    """
    kb = bracket(N)
    exponent = gp.sigma * kb
    limit = get_settings().EXP_OVERFLOW_LIMIT
    if np.max(exponent) > limit:
        offending = np.unravel_index(int(np.argmax(exponent)), exponent.shape)
        k = [int(i) - N for i in offending]
        raise GevreyRangeError(
            f"Exponential weight overflows: sigma*<k> = {float(np.max(exponent)):.1f} > {limit} at k={tuple(k)}",
            k=k,
        )
    return kb ** (gp.p + gp.r) * np.exp(exponent)


def _scaled_l2(values: np.ndarray) -> float:
    peak = float(np.max(np.abs(values))) if values.size else 0.0
    if peak == 0.0:
        return 0.0
    return peak * float(np.sqrt(np.sum(np.abs(values / peak) ** 2)))


def apply_multiplier(f: SpectralField, gp: GevreyParams) -> SpectralField:
    return SpectralField(f.coeffs * gevrey_weight(f.N, gp), f.N, f.div_free)


def l2_norm(f: SpectralField) -> float:
    """Normalized L^2 norm by Parseval"""
    return _scaled_l2(f.coeffs)


def gevrey_norm(f: SpectralField, gp: GevreyParams) -> float:
    return _scaled_l2(f.coeffs * gevrey_weight(f.N, gp))


def gevrey_inner(f: SpectralField, g: SpectralField, gp: GevreyParams) -> float:
    """Real part of sum_k w(k)^2 f(k).conj(g(k))"""
    if f.N != g.N:
        raise ResolutionError(f"Truncation mismatch: N={f.N} vs N={g.N}")
    weight = gevrey_weight(f.N, gp)
    return float(np.real(np.sum((f.coeffs * weight) * np.conj(g.coeffs * weight))))


def wiener_norm(f: SpectralField) -> float:
    """Sum over modes of the Euclidean magnitude of the coefficient vector"""
    return float(np.sum(np.sqrt(np.sum(np.abs(f.coeffs) ** 2, axis=0))))


def wiener_constant(N: int, s: float = 2.0) -> float:
    """(sum_k (1+|k|^2)^{-s})^{1/2}: wiener_norm(f) <= C ||A^{s/2} f||"""
    return float(np.sqrt(np.sum(bracket(N) ** (-2.0 * s))))


def ceil_index(x: float) -> int:
    """Ceiling that snaps values within 1e-12 of an integer onto it"""
    nearest = round(x)
    if abs(x - nearest) <= 1e-12:
        return int(nearest)
    return int(math.ceil(x))


def exact_factorial(n: int) -> int:
    if n < 0:
        raise GevreyRangeError(f"Factorial of negative index {n}")
    if n > MAX_EXACT_FACTORIAL:
        raise GevreyRangeError(f"Factorial index {n} exceeds exact range {MAX_EXACT_FACTORIAL}")
    return math.factorial(n)


def inv_mag_bound_value(p: float, r: float, m_f: float, C0: float, sigma0: float) -> float:
    """e^{sigma0} + (ceil p + ceil r)! / (m_f/2 - C0 sigma0)^{ceil p + ceil r + 1}"""
    beta = 2.0 * C0 * sigma0 / m_f
    if beta >= 1.0:
        raise DivergentSeriesError(
            f"Series ratio 2*C0*sigma0/m_f = {beta:.6g} is not below 1"
        )
    n = ceil_index(p) + ceil_index(r)
    return math.exp(sigma0) + exact_factorial(n) / (0.5 * m_f - C0 * sigma0) ** (n + 1)


def inv_mag_bound(p: float, r: float, vf: VorticityFloorParams) -> float:
    """
    Closed-form bound on the Gevrey norm of 1/|omega_s|

    Raises:
        DivergentSeriesError: If 2*C0*sigma0 >= m_f
    """
    return inv_mag_bound_value(p, r, vf.m_f, vf.C0, vf.sigma0)


def inv_mag_field(omega: PhysicalField, floor: float) -> PhysicalField:
    """
    Nodewise 1/|omega| stored in the first component

    Raises:
        SingularityError: If min |omega| <= floor (location and value attached)
    """
    magnitude = omega.magnitude()
    flat = int(np.argmin(magnitude))
    location = tuple(int(i) for i in np.unravel_index(flat, magnitude.shape))
    value = float(magnitude[location])
    if value <= floor:
        raise SingularityError(
            f"Vorticity floor breached: |omega| = {value:.6g} <= {floor:.6g} at node {location}",
            location=location,
            value=value,
        )
    result = np.zeros_like(omega.values)
    result[0] = 1.0 / magnitude
    return PhysicalField(result)


def truncated_reciprocal_norm(omega: SpectralField, gp: GevreyParams, floor: float = 0.0,
                              oversample: Optional[int] = None) -> float:
    """Gevrey norm of the N-truncated interpolant of 1/|omega| (under-estimates the series norm)"""
    M = friction_grid_size(omega.N, oversample)
    reciprocal = inv_mag_field(to_physical(omega, M), floor)
    return gevrey_norm(to_spectral(reciprocal, omega.N), gp)


__all__ = [
    "gevrey_weight",
    "apply_multiplier",
    "l2_norm",
    "gevrey_norm",
    "gevrey_inner",
    "wiener_norm",
    "wiener_constant",
    "ceil_index",
    "exact_factorial",
    "inv_mag_bound_value",
    "inv_mag_bound",
    "inv_mag_field",
    "truncated_reciprocal_norm",
]
