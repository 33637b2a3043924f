"""
Spectral core for HVBK Spectral
Fourier representation of periodic 3-vector fields on [0, 2pi)^3

Coefficients are stored as a dense centered cube of shape (3, 2N+1, 2N+1, 2N+1);
array index i along an axis holds wave number i - N. The normalization is
f(x) = sum_k coeff(k) e^{ik.x}, so coeff(k) is the box average of f e^{-ik.x}.
"""
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import fft as sp_fft

from app.core.config import get_settings
from app.core.errors import ConsistencyError, ResolutionError, SingularityError

logger = logging.getLogger(__name__)

Combine = Callable[[List[np.ndarray]], np.ndarray]


@dataclass
class SpectralField:
    """Truncated Fourier coefficients of a real 3-vector field"""
    coeffs: np.ndarray
    N: int
    div_free: bool = False

    def __post_init__(self):
        n = 2 * self.N + 1
        if self.coeffs.shape != (3, n, n, n):
            raise ResolutionError(
                f"Coefficient cube shape {self.coeffs.shape} does not match N={self.N}"
            )
        self.coeffs = np.asarray(self.coeffs, dtype=np.complex128)

    @classmethod
    def zeros(cls, N: int) -> "SpectralField":
        n = 2 * N + 1
        return cls(np.zeros((3, n, n, n), dtype=np.complex128), N)

    @property
    def mean(self) -> np.ndarray:
        """Real part of the k=0 coefficient"""
        return self.coeffs[:, self.N, self.N, self.N].real.copy()

    def mode(self, k: Sequence[int]) -> np.ndarray:
        return self.coeffs[(slice(None),) + mode_index(self.N, k)]

    def copy(self) -> "SpectralField":
        return SpectralField(self.coeffs.copy(), self.N, self.div_free)

    def __add__(self, other: "SpectralField") -> "SpectralField":
        _require_same_n(self, other)
        return SpectralField(self.coeffs + other.coeffs, self.N, self.div_free and other.div_free)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        _require_same_n(self, other)
        return SpectralField(self.coeffs - other.coeffs, self.N, self.div_free and other.div_free)

    def scaled(self, factor: float) -> "SpectralField":
        return SpectralField(factor * self.coeffs, self.N, self.div_free)


@dataclass
class PhysicalField:
    """Real 3-vector samples on the uniform M^3 lattice"""
    values: np.ndarray
    M: int = field(init=False)

    def __post_init__(self):
        if self.values.ndim != 4 or self.values.shape[0] != 3:
            raise ResolutionError(f"Physical field must have shape (3, M, M, M), got {self.values.shape}")
        M = self.values.shape[1]
        if self.values.shape[1:] != (M, M, M):
            raise ResolutionError(f"Physical field grid must be cubic, got {self.values.shape[1:]}")
        if not np.all(np.isfinite(self.values)):
            raise ConsistencyError("Physical field contains non-finite values")
        self.M = M

    def magnitude(self) -> np.ndarray:
        return np.sqrt(np.sum(self.values ** 2, axis=0))


def _require_same_n(a: SpectralField, b: SpectralField) -> None:
    if a.N != b.N:
        raise ResolutionError(f"Truncation mismatch: N={a.N} vs N={b.N}")


def _workers() -> int:
    return get_settings().HVBK_THREADS


def mode_index(N: int, k: Sequence[int]) -> Tuple[int, int, int]:
    """Array index of wave vector k inside a cube of radius N"""
    if any(abs(int(c)) > N for c in k):
        raise ResolutionError(f"Wave index {tuple(k)} outside truncation N={N}")
    return tuple(int(c) + N for c in k)


@lru_cache(maxsize=32)
def _wave_vectors_cached(N: int) -> np.ndarray:
    axis = np.arange(-N, N + 1, dtype=np.float64)
    vectors = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"))
    vectors.setflags(write=False)
    return vectors


def wave_vectors(N: int) -> np.ndarray:
    """Array of shape (3, n, n, n) holding k at every cube position"""
    return _wave_vectors_cached(N)


def wave_norm_squared(N: int) -> np.ndarray:
    k = wave_vectors(N)
    return np.sum(k ** 2, axis=0)


def bracket(N: int) -> np.ndarray:
    """<k> = (1 + |k|^2)^{1/2}"""
    return np.sqrt(1.0 + wave_norm_squared(N))


def product_grid_size(N: int) -> int:
    """Smallest grid on which quadratic products of N-truncated fields are alias-free"""
    return 3 * N + 1


def friction_grid_size(N: int, oversample: Optional[int] = None) -> int:
    if oversample is None:
        oversample = get_settings().DEFAULT_OVERSAMPLE
    if oversample < 1:
        raise ResolutionError(f"Oversampling factor must be at least 1, got {oversample}")
    return oversample * (2 * N + 1)


def grid_coordinates(M: int) -> np.ndarray:
    """Stacked (3, M, M, M) coordinates x_j = 2 pi j / M"""
    x = 2.0 * np.pi * np.arange(M) / M
    return np.stack(np.meshgrid(x, x, x, indexing="ij"))


def _embedding_index(N: int, M: int):
    idx = np.arange(-N, N + 1) % M
    return (slice(None),) + np.ix_(idx, idx, idx)


def to_physical(f: SpectralField, M: int) -> PhysicalField:
    """
    Synthesize grid values sum_k coeff(k) e^{ik.x_j} on the M^3 lattice

    Args:
        f: Spectral field
        M: Grid points per axis, at least 2N+1

    Returns:
        PhysicalField with the imaginary roundoff discarded

    Raises:
        ResolutionError: If M < 2N+1
    """
    if M < 2 * f.N + 1:
        raise ResolutionError(f"Grid M={M} too small for N={f.N} (need M >= {2 * f.N + 1})")

    padded = np.zeros((3, M, M, M), dtype=np.complex128)
    padded[_embedding_index(f.N, M)] = f.coeffs
    values = sp_fft.ifftn(padded, axes=(1, 2, 3), workers=_workers()) * float(M) ** 3

    scale = float(np.max(np.abs(f.coeffs))) if f.coeffs.size else 0.0
    residue = float(np.max(np.abs(values.imag))) if values.size else 0.0
    if residue > get_settings().HERMITIAN_TOLERANCE * max(scale, 1e-300) * f.coeffs[0].size:
        logger.debug(f"Discarding imaginary residue {residue:.3e} (max |coeff| {scale:.3e})")

    return PhysicalField(np.ascontiguousarray(values.real))


def to_spectral(g: PhysicalField, N: int) -> SpectralField:
    """Fourier coefficients of the trigonometric interpolant of g, truncated to N"""
    if g.M < 2 * N + 1:
        raise ResolutionError(f"Grid M={g.M} too small for N={N} (need M >= {2 * N + 1})")
    transformed = sp_fft.fftn(g.values, axes=(1, 2, 3), workers=_workers()) / float(g.M) ** 3
    return SpectralField(transformed[_embedding_index(N, g.M)].copy(), N)


def sample_field(func: Callable[[np.ndarray, np.ndarray, np.ndarray], Sequence[np.ndarray]],
                 N: int, M: Optional[int] = None) -> SpectralField:
    """Spectral field of a callable (x, y, z) -> (f1, f2, f3) sampled on a grid"""
    M = M or product_grid_size(N)
    x, y, z = grid_coordinates(M)
    components = [np.broadcast_to(np.asarray(c, dtype=np.float64), x.shape) for c in func(x, y, z)]
    return to_spectral(PhysicalField(np.stack(components)), N)


def truncate(f: SpectralField, N_prime: int) -> SpectralField:
    """Zero every coefficient with some |k_i| > N'; the cube keeps radius N"""
    if N_prime > f.N:
        raise ResolutionError(f"Cannot truncate N={f.N} field to larger N'={N_prime}")
    if N_prime < 0:
        raise ResolutionError(f"Truncation radius must be non-negative, got {N_prime}")
    k = wave_vectors(f.N)
    keep = np.all(np.abs(k) <= N_prime, axis=0)
    return SpectralField(f.coeffs * keep, f.N, f.div_free)


def resize(f: SpectralField, N_new: int) -> SpectralField:
    """Re-embed the coefficients into a cube of radius N_new, dropping modes beyond it"""
    out = SpectralField.zeros(N_new)
    common = min(f.N, N_new)
    src = slice(f.N - common, f.N + common + 1)
    dst = slice(N_new - common, N_new + common + 1)
    out.coeffs[:, dst, dst, dst] = f.coeffs[:, src, src, src]
    out.div_free = f.div_free
    return out


def truncation_tail_sup(f: SpectralField, N_prime: int, M: Optional[int] = None) -> float:
    """Sup-norm of (I - P^{N'}) f sampled on the synthesis grid"""
    tail = f - truncate(f, N_prime)
    grid = to_physical(tail, M or 2 * f.N + 1)
    return float(np.max(grid.magnitude()))


def leray_project(f: SpectralField) -> SpectralField:
    """Remove the gradient part: coeff(k) - k (k.coeff(k)) / |k|^2 for k != 0"""
    k = wave_vectors(f.N)
    k2 = wave_norm_squared(f.N).copy()
    k2[f.N, f.N, f.N] = 1.0
    k_dot = np.sum(k * f.coeffs, axis=0)
    return SpectralField(f.coeffs - k * (k_dot / k2), f.N, div_free=True)


def divergence_residual(f: SpectralField) -> float:
    """max_k |k.coeff(k)| relative to max_k |coeff(k)|"""
    scale = float(np.max(np.abs(f.coeffs)))
    if scale == 0.0:
        return 0.0
    k_dot = np.sum(wave_vectors(f.N) * f.coeffs, axis=0)
    return float(np.max(np.abs(k_dot))) / scale


def hermitian_residual(f: SpectralField) -> float:
    """max_k |coeff(-k) - conj(coeff(k))|"""
    mirrored = np.conj(f.coeffs[:, ::-1, ::-1, ::-1])
    return float(np.max(np.abs(f.coeffs - mirrored)))


def _cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.stack([
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ])


def curl(f: SpectralField) -> SpectralField:
    """Spectral curl ik x coeff(k) with the mean mode hard-zeroed"""
    result = 1j * _cross(wave_vectors(f.N), f.coeffs)
    result[:, f.N, f.N, f.N] = 0.0
    return SpectralField(result, f.N, div_free=True)


def partial(f: SpectralField, axis: int) -> SpectralField:
    """d/dx_axis of every component"""
    return SpectralField(1j * wave_vectors(f.N)[axis] * f.coeffs, f.N, f.div_free)


def velocity_from_vorticity(omega: SpectralField, mean_u: Sequence[float]) -> SpectralField:
    """
    Biot-Savart inversion u(k) = (ik/|k|^2) x omega(k), u(0) = mean_u

    Raises:
        ConsistencyError: If omega carries a nonzero mean mode
    """
    N = omega.N
    scale = max(float(np.max(np.abs(omega.coeffs))), 1.0)
    mean_mode = omega.coeffs[:, N, N, N]
    if np.max(np.abs(mean_mode)) > get_settings().DIVERGENCE_TOLERANCE * scale:
        raise ConsistencyError(f"Vorticity has nonzero mean mode {mean_mode}")

    k2 = wave_norm_squared(N).copy()
    k2[N, N, N] = 1.0
    velocity = 1j * _cross(wave_vectors(N), omega.coeffs) / k2
    velocity[:, N, N, N] = np.asarray(mean_u, dtype=np.float64)
    return SpectralField(velocity, N, div_free=True)


def pointwise_product_projected(fs: Sequence[SpectralField], combine: Combine, N: int,
                                M: Optional[int] = None) -> SpectralField:
    """
    Evaluate a nodewise rule on synthesized inputs and project back to N modes

    Args:
        fs: Input fields sharing the truncation N
        combine: Maps the list of (3, M, M, M) grid arrays to one (3, M, M, M) array
        N: Truncation radius of the inputs and of the result
        M: Grid size, defaults to the alias-free 3N+1

    Returns:
        Truncated spectral field of combine(inputs)

    Raises:
        SingularityError: If combine produces a non-finite value
    """
    for f in fs:
        if f.N != N:
            raise ResolutionError(f"Input truncation N={f.N} differs from N={N}")
    M = M or product_grid_size(N)
    grids = [to_physical(f, M).values for f in fs]
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        combined = np.asarray(combine(grids), dtype=np.float64)

    bad = ~np.isfinite(combined)
    if np.any(bad):
        location = tuple(int(i) for i in np.argwhere(bad)[0][1:])
        raise SingularityError(
            f"Nodewise rule produced a non-finite value at grid node {location}",
            location=location,
        )
    return to_spectral(PhysicalField(combined), N)


__all__ = [
    "SpectralField",
    "PhysicalField",
    "mode_index",
    "wave_vectors",
    "wave_norm_squared",
    "bracket",
    "product_grid_size",
    "friction_grid_size",
    "grid_coordinates",
    "to_physical",
    "to_spectral",
    "sample_field",
    "truncate",
    "resize",
    "truncation_tail_sup",
    "leray_project",
    "divergence_residual",
    "hermitian_residual",
    "curl",
    "partial",
    "velocity_from_vorticity",
    "pointwise_product_projected",
]
