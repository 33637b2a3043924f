"""
Brute-force oracles and randomized checks for the analytic-class estimates

The multilinear estimate is checked against a direct convolution oracle, the
reciprocal-magnitude bound against the truncated reciprocal norm. Both compare
observed ratios with frozen constants kept in a JSON fixture.
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy import signal

from app.core.config import get_settings
from app.core.errors import (
    CostGuardError,
    EstimateViolationError,
    PreconditionError,
    ResolutionError,
    SamplingError,
)
from app.models.schemas import (
    AlgebraReport,
    AppendixReport,
    GevreyParams,
    LemmaReport,
    VorticityFloorParams,
)
from app.services.dynamics import min_vorticity_magnitude
from app.services.gevrey import (
    exact_factorial,
    gevrey_inner,
    gevrey_norm,
    gevrey_weight,
    inv_mag_bound_value,
    truncated_reciprocal_norm,
    wiener_constant,
    wiener_norm,
)
from app.services.spectral import (
    SpectralField,
    bracket,
    friction_grid_size,
    leray_project,
    pointwise_product_projected,
    to_physical,
    wave_norm_squared,
    wave_vectors,
)

logger = logging.getLogger(__name__)

Symbol = Callable[[np.ndarray], np.ndarray]

DERIVATIVE_TOLERANCE = 0.1
MAX_DERIVATIVE_ORDER = 4


@dataclass(frozen=True)
class MultiplierOp:
    """Fourier multiplier T with symbol m(k) and |m(k)| <= growth_bound |k|"""
    symbol: Symbol
    growth_bound: float
    name: str = "custom"

    @classmethod
    def derivative(cls, axis: int = 0) -> "MultiplierOp":
        return cls(lambda k: 1j * k[axis], 1.0, f"d{axis + 1}")

    @classmethod
    def magnitude(cls) -> "MultiplierOp":
        return cls(lambda k: np.sqrt(np.sum(k ** 2, axis=0)) + 0j, 1.0, "abs")

    def values(self, N: int) -> np.ndarray:
        """Symbol on the (2N+1)^3 cube, checked against the growth bound"""
        m = np.asarray(self.symbol(wave_vectors(N)), dtype=np.complex128)
        limit = self.growth_bound * np.sqrt(wave_norm_squared(N))
        if np.any(np.abs(m) > limit * (1.0 + 1e-12) + 1e-300):
            raise PreconditionError(f"Multiplier {self.name} violates |m(k)| <= {self.growth_bound}|k|")
        return m

    def apply(self, f: SpectralField) -> SpectralField:
        return SpectralField(self.values(f.N) * f.coeffs, f.N)


def random_analytic_field(N: int, sigma_draw: float, rng: np.random.Generator,
                          div_free: bool = True, zero_mean: bool = True,
                          unit_modes: bool = False) -> SpectralField:
    """
    Real random field with coefficients decaying like e^{-sigma_draw <k>}

    Args:
        N: Truncation radius
        sigma_draw: Decay rate of the drawn spectrum
        rng: Source of the complex Gaussian draws
        div_free: Leray-project the draw
        zero_mean: Zero the k=0 mode
        unit_modes: Normalize every mode to unit magnitude before the decay factor

    Returns:
        Hermitian SpectralField
    """
    n = 2 * N + 1
    draw = rng.standard_normal((3, n, n, n)) + 1j * rng.standard_normal((3, n, n, n))
    draw = 0.5 * (draw + np.conj(draw[:, ::-1, ::-1, ::-1]))
    field = SpectralField(draw, N)
    if div_free:
        field = leray_project(field)

    coeffs = field.coeffs
    if unit_modes:
        size = np.sqrt(np.sum(np.abs(coeffs) ** 2, axis=0))
        coeffs = coeffs / np.where(size > 0.0, size, 1.0)
    coeffs = coeffs * np.exp(-sigma_draw * bracket(N))
    if zero_mean:
        coeffs[:, N, N, N] = 0.0
    return SpectralField(coeffs, N, div_free=div_free)


def unit_wiener_perturbation(N: int, sigma_draw: float, rng: np.random.Generator,
                             unit_modes: bool = False) -> SpectralField:
    """Zero-mean divergence-free analytic field scaled to unit Wiener norm"""
    field = random_analytic_field(N, sigma_draw, rng, div_free=True, zero_mean=True, unit_modes=unit_modes)
    size = wiener_norm(field)
    if size == 0.0:
        raise SamplingError("Random draw produced a zero field")
    return field.scaled(1.0 / size)


def beltrami_core(N: int) -> SpectralField:
    """omega = (cos z, sin z, 0), the curl of u = (-cos z, -sin z, 0)"""
    core = SpectralField.zeros(N)
    core.coeffs[:, N, N, N + 1] = [0.5, -0.5j, 0.0]
    core.coeffs[:, N, N, N - 1] = [0.5, 0.5j, 0.0]
    core.div_free = True
    return core


def _crop(a: np.ndarray, radius: int) -> np.ndarray:
    center = a.shape[0] // 2
    window = slice(center - radius, center + radius + 1)
    return a[window, window, window]


def convolution_inner_product_oracle(fs: Sequence[SpectralField], g: SpectralField,
                                     op: MultiplierOp, gp: GevreyParams) -> float:
    """
    <prod_i f_i, T g> in the weighted inner product by direct summation

    Products are componentwise; each coefficient of the product is the sum over
    all index tuples h_1 + ... + h_K = k, computed as repeated direct convolution.

    Raises:
        CostGuardError: If the truncation exceeds ORACLE_MAX_N
    """
    if len(fs) < 1:
        raise PreconditionError("Oracle needs at least one factor")
    N = g.N
    limit = get_settings().ORACLE_MAX_N
    if N > limit:
        raise CostGuardError(f"Oracle truncation N={N} exceeds ORACLE_MAX_N={limit}")
    for f in fs:
        if f.N != N:
            raise ResolutionError(f"Factor truncation N={f.N} differs from N={N}")

    K = len(fs)
    product = np.empty_like(g.coeffs)
    for c in range(3):
        acc = fs[0].coeffs[c]
        for j in range(2, K + 1):
            acc = signal.convolve(acc, fs[j - 1].coeffs[c], mode="full", method="direct")
            acc = _crop(acc, min(j * N, (K - j + 1) * N))
        product[c] = _crop(acc, N)

    weight = gevrey_weight(N, gp)
    paired = op.values(N) * g.coeffs * weight ** 2
    return float(np.real(np.sum(product * np.conj(paired))))


def multilinear_rhs(fs: Sequence[SpectralField], g: SpectralField, gp: GevreyParams) -> float:
    """sum_j ||A^{1/4} f_j|| prod_{i != j} ||f_i|| ||A^{1/4} g||"""
    plain = GevreyParams(p=gp.p, sigma=gp.sigma, r=0.0)
    lifted = GevreyParams(p=gp.p, sigma=gp.sigma, r=0.5)
    norms = [gevrey_norm(f, plain) for f in fs]
    lifted_norms = [gevrey_norm(f, lifted) for f in fs]
    total = 0.0
    for j, lifted_norm in enumerate(lifted_norms):
        others = math.prod(norms[i] for i in range(len(fs)) if i != j)
        total += lifted_norm * others
    return total * gevrey_norm(g, lifted)


def lemma_ceiling(K: int, p: float, N: int) -> float:
    """K^{p-1/2} C_W(p, N)^{K-1}"""
    return K ** (p - 0.5) * wiener_constant(N, p) ** (K - 1)


def algebra_ceiling(p: float, N: int) -> float:
    """2^p C_W(p, N)"""
    return 2.0 ** p * wiener_constant(N, p)


def lemma_key(K: int, p: float) -> str:
    return f"K{K}_p{p:g}"


def _frozen_value(frozen: Optional[Dict[str, Dict]], key: str) -> Optional[float]:
    if frozen is None or key not in frozen:
        logger.warning(f"No frozen constant for {key}; reporting ratios without a bound")
        return None
    return float(frozen[key]["value"])


def _quantiles(ratios: np.ndarray) -> Dict[str, float]:
    return {
        name: float(np.quantile(ratios, q))
        for name, q in (("q50", 0.5), ("q90", 0.9), ("q99", 0.99))
    }


def lemma_ratio(fs: Sequence[SpectralField], g: SpectralField, op: MultiplierOp, gp: GevreyParams) -> float:
    """|LHS| / RHS of the multilinear estimate for one draw"""
    lhs = convolution_inner_product_oracle(fs, g, op, gp)
    rhs = multilinear_rhs(fs, g, gp)
    if rhs == 0.0:
        if lhs != 0.0:
            raise EstimateViolationError(f"Estimate right-hand side vanishes while the left is {lhs:.6g}")
        return 0.0
    return abs(lhs) / rhs


def verify_nonlinear_estimate(K: int, trials: int, gp: GevreyParams, seed: int, N: int = 3,
                              sigma_draw: Optional[float] = None,
                              op: Optional[MultiplierOp] = None,
                              frozen: Optional[Dict[str, Dict]] = None) -> LemmaReport:
    """
    Maximum observed ratio of the multilinear estimate over random analytic draws

    Args:
        K: Number of factors
        trials: Number of random draws
        gp: Norm indices, p > 2
        seed: Trial t draws from default_rng([seed, t])
        N: Truncation radius of the draws
        sigma_draw: Spectral decay of the draws, defaults to gp.sigma + 0.5
        op: Multiplier T, defaults to |k|
        frozen: Frozen-constant table; the entry K{K}_p{p} bounds the ratio

    Raises:
        PreconditionError: If p <= 2 or K < 1
    """
    if gp.p <= 2.0:
        raise PreconditionError(f"Multilinear estimate needs p > 2, got p={gp.p}")
    if K < 1 or trials < 1:
        raise PreconditionError(f"K and trials must be positive, got K={K}, trials={trials}")
    op = op or MultiplierOp.magnitude()
    sigma_draw = gp.sigma + 0.5 if sigma_draw is None else sigma_draw

    ratios = np.empty(trials)
    for trial in range(trials):
        rng = np.random.default_rng([seed, trial])
        fs = [random_analytic_field(N, sigma_draw, rng, div_free=False, zero_mean=False) for _ in range(K)]
        g = random_analytic_field(N, sigma_draw, rng, div_free=False, zero_mean=False)
        ratios[trial] = lemma_ratio(fs, g, op, gp)

    bound = _frozen_value(frozen, lemma_key(K, gp.p))
    max_ratio = float(np.max(ratios))
    passed = bound is None or max_ratio <= bound
    logger.info(f"Multilinear estimate K={K} p={gp.p:g}: max ratio {max_ratio:.6g} (bound {bound})")
    return LemmaReport(
        K=K,
        p=gp.p,
        sigma=gp.sigma,
        N=N,
        trials=trials,
        seed=seed,
        max_ratio=max_ratio,
        mean_ratio=float(np.mean(ratios)),
        quantiles=_quantiles(ratios),
        frozen_bound=bound,
        passed=passed,
    )


def verify_algebra_property(trials: int, gp: GevreyParams, seed: int, N: int = 4,
                            sigma_draw: Optional[float] = None,
                            frozen: Optional[Dict[str, Dict]] = None) -> AlgebraReport:
    """Largest ||P^N(fg)|| / (||f|| ||g||) in the weighted norm over random draws"""
    if gp.p <= 1.5:
        raise PreconditionError(f"Algebra property needs p > 3/2, got p={gp.p}")
    sigma_draw = gp.sigma + 0.5 if sigma_draw is None else sigma_draw

    worst = 0.0
    for trial in range(trials):
        rng = np.random.default_rng([seed, trial])
        f = random_analytic_field(N, sigma_draw, rng, div_free=False, zero_mean=False)
        g = random_analytic_field(N, sigma_draw, rng, div_free=False, zero_mean=False)
        product = pointwise_product_projected([f, g], lambda grids: grids[0] * grids[1], N)
        denominator = gevrey_norm(f, gp) * gevrey_norm(g, gp)
        if denominator > 0.0:
            worst = max(worst, gevrey_norm(product, gp) / denominator)

    bound = _frozen_value(frozen, "algebra")
    logger.info(f"Algebra property p={gp.p:g} sigma={gp.sigma:g}: max ratio {worst:.6g} (bound {bound})")
    return AlgebraReport(
        p=gp.p,
        sigma=gp.sigma,
        N=N,
        trials=trials,
        seed=seed,
        max_ratio=worst,
        frozen_bound=bound,
        passed=bound is None or worst <= bound,
    )


def derivative_ratios(omega: SpectralField, floor_value: float, oversample: Optional[int] = None,
                      orders: int = MAX_DERIVATIVE_ORDER) -> Dict[str, float]:
    """
    Largest n-th forward difference of 1/|omega| along grid lines over 2^n n!/m^n

    Differences wrap periodically and are divided by h^n, h the grid spacing.
    """
    M = friction_grid_size(omega.N, oversample)
    reciprocal = 1.0 / to_physical(omega, M).magnitude()
    h = 2.0 * np.pi / M
    ratios = {}
    for n in range(1, orders + 1):
        worst = 0.0
        for axis in range(3):
            difference = reciprocal
            for _ in range(n):
                difference = np.roll(difference, -1, axis=axis) - difference
            worst = max(worst, float(np.max(np.abs(difference))) / h ** n)
        ratios[str(n)] = worst / (2.0 ** n * exact_factorial(n) / floor_value ** n)
    return ratios


def _draw_floor_certified(N: int, epsilon: float, sigma_draw: float, m_f: float,
                          rng: np.random.Generator, oversample: Optional[int]) -> Tuple[SpectralField, float, int]:
    retries = get_settings().PRESET_MAX_RETRIES
    core = beltrami_core(N)
    for attempt in range(retries + 1):
        omega = core + unit_wiener_perturbation(N, sigma_draw, rng).scaled(epsilon)
        measured, _ = min_vorticity_magnitude(omega, oversample)
        if measured >= m_f:
            return omega, measured, attempt
        logger.warning(f"Draw {attempt} has floor {measured:.6g} below m_f={m_f:.6g}; redrawing")
    raise SamplingError(f"No draw met the floor m_f={m_f} after {retries} retries")


def verify_inv_mag_bound(trials: int, vf: VorticityFloorParams, gp: GevreyParams, seed: int,
                         N: int = 4, epsilon: float = 0.1, sigma_draw: float = 1.0,
                         oversample: Optional[int] = None) -> AppendixReport:
    """
    Compare the truncated reciprocal norm with the closed-form bound for r in {0, 1/2}

    Each trial draws omega = (cos z, sin z, 0) + epsilon * (unit-Wiener analytic
    perturbation), so the floor is at least 1 - epsilon. The bound is evaluated
    with the measured floor in place of m_f.

    Raises:
        PreconditionError: If gp.sigma exceeds vf.sigma0
        DivergentSeriesError: If 2*C0*sigma0 >= measured floor
        SamplingError: If the floor cannot be certified
    """
    if gp.sigma > vf.sigma0:
        raise PreconditionError(f"Norm radius {gp.sigma} exceeds sigma0 {vf.sigma0}")

    exponents = (0.0, 0.5)
    min_margin = {f"r={r:g}": math.inf for r in exponents}
    max_norm = {f"r={r:g}": 0.0 for r in exponents}
    derivative_worst = {str(n): 0.0 for n in range(1, MAX_DERIVATIVE_ORDER + 1)}
    redraws = 0
    min_floor = math.inf
    passed = True

    for trial in range(trials):
        rng = np.random.default_rng([seed, trial])
        omega, measured, attempts = _draw_floor_certified(N, epsilon, sigma_draw, vf.m_f, rng, oversample)
        redraws += attempts
        min_floor = min(min_floor, measured)
        for r in exponents:
            key = f"r={r:g}"
            norm = truncated_reciprocal_norm(omega, GevreyParams(p=gp.p, sigma=gp.sigma, r=r), 0.0, oversample)
            bound = inv_mag_bound_value(gp.p, r, measured, vf.C0, vf.sigma0)
            min_margin[key] = min(min_margin[key], bound - norm)
            max_norm[key] = max(max_norm[key], norm)
            passed = passed and norm <= bound
        for order, ratio in derivative_ratios(omega, measured, oversample).items():
            derivative_worst[order] = max(derivative_worst[order], ratio)

    passed = passed and all(ratio <= 1.0 + DERIVATIVE_TOLERANCE for ratio in derivative_worst.values())
    logger.info(f"Reciprocal bound over {trials} trials: margins {min_margin}, derivative ratios {derivative_worst}")
    return AppendixReport(
        trials=trials,
        seed=seed,
        N=N,
        p=gp.p,
        sigma0=vf.sigma0,
        C0=vf.C0,
        epsilon=epsilon,
        m_f=vf.m_f,
        redraws=redraws,
        min_measured_floor=min_floor,
        min_margin=min_margin,
        max_norm=max_norm,
        derivative_ratio=derivative_worst,
        passed=passed,
    )


def quadratic_pipeline_inner(f: SpectralField, h: SpectralField, g: SpectralField,
                             op: MultiplierOp, gp: GevreyParams) -> float:
    """Same quantity as the K=2 oracle through the alias-free pseudospectral product"""
    product = pointwise_product_projected([f, h], lambda grids: grids[0] * grids[1], f.N)
    return gevrey_inner(product, op.apply(g), gp)


__all__ = [
    "MultiplierOp",
    "random_analytic_field",
    "unit_wiener_perturbation",
    "beltrami_core",
    "convolution_inner_product_oracle",
    "multilinear_rhs",
    "lemma_ceiling",
    "algebra_ceiling",
    "lemma_key",
    "lemma_ratio",
    "verify_nonlinear_estimate",
    "verify_algebra_property",
    "derivative_ratios",
    "verify_inv_mag_bound",
    "quadratic_pipeline_inner",
]
