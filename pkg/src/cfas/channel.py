"""Spatially correlated Rayleigh fading over a linear aperture.

A realization is a circularly symmetric complex Gaussian process sampled on
a uniform grid ``0, step, 2*step, ...`` covering ``[0, T]``. The covariance
is the Toeplitz matrix of the chosen correlation kernel; realizations are
drawn as ``F @ z`` with ``F`` an eigen-based root of that matrix.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.linalg
import scipy.special
from scipy.fft import irfft, next_fast_len, rfft

from .errors import InvalidParameterError, ModelNotPSDError, ResourceError

# eigenvalues in [-PSD_TOL * max_eig, 0) are roundoff and get clamped to zero
PSD_TOL = 1e-10
# eigenvalues below NULL_TOL * max_eig carry no variance worth sampling
NULL_TOL = 1e-13
RECONSTRUCTION_TOL = 1e-8
DENSE_MAX_POINTS = 4097
DEFAULT_MEMORY_BUDGET = 2 * 1024**3
DEFAULT_POINTS_PER_WAVELENGTH = 200


class CorrelationKind(str, enum.Enum):
    JAKES2D = "jakes2d"
    SINC3D = "sinc3d"
    QUADRATIC = "quadratic"


@dataclass(frozen=True)
class CorrelationModel:
    """Spatial autocorrelation kernel.

    ``JAKES2D`` is ``J0(2*pi*tau/lambda)`` (2D isotropic scattering),
    ``SINC3D`` is ``sin(x)/x`` with ``x = 2*pi*tau/lambda`` (3D isotropic
    scattering) and ``QUADRATIC`` is the truncated expansion ``1 - b*tau**2``
    clamped at -1. The quadratic kernel is only meant for apertures short
    enough that the clamp never engages; for longer grids its Toeplitz
    matrix is generally not a covariance and factorization will refuse it.
    """

    kind: CorrelationKind = CorrelationKind.JAKES2D
    b_override: Optional[float] = None

    def __post_init__(self):
        try:
            kind = CorrelationKind(self.kind)
        except ValueError:
            raise InvalidParameterError(f"unknown correlation model {self.kind!r}") from None
        object.__setattr__(self, "kind", kind)
        if self.b_override is not None:
            if not (math.isfinite(self.b_override) and self.b_override > 0):
                raise InvalidParameterError("b_override must be a positive finite number")
            object.__setattr__(self, "b_override", float(self.b_override))
        if kind is CorrelationKind.QUADRATIC and self.b_override is None:
            raise InvalidParameterError("the quadratic model needs b_override")

    @classmethod
    def jakes(cls) -> "CorrelationModel":
        return cls(CorrelationKind.JAKES2D)

    @classmethod
    def sinc(cls) -> "CorrelationModel":
        return cls(CorrelationKind.SINC3D)

    @classmethod
    def quadratic(cls, b: float) -> "CorrelationModel":
        return cls(CorrelationKind.QUADRATIC, b)


def _check_wavelength(wavelength_m: float) -> None:
    if not (np.isfinite(wavelength_m) and wavelength_m > 0):
        raise InvalidParameterError(f"wavelength must be positive, got {wavelength_m}")


def correlation(model: CorrelationModel, tau, wavelength_m: float):
    """Kernel value at lag ``tau`` (meters). Accepts scalars or arrays."""
    _check_wavelength(wavelength_m)
    tau_arr = np.asarray(tau, dtype=float)
    if np.any(tau_arr < 0):
        raise InvalidParameterError("lags must be non-negative")
    x = 2.0 * np.pi * tau_arr / wavelength_m
    if model.kind is CorrelationKind.JAKES2D:
        out = scipy.special.j0(x)
    elif model.kind is CorrelationKind.SINC3D:
        # np.sinc is sin(pi u)/(pi u) and handles u = 0
        out = np.sinc(x / np.pi)
    else:
        out = np.maximum(1.0 - model.b_override * tau_arr**2, -1.0)
    if np.ndim(out) == 0:
        return float(out)
    return out


def curvature_b(model: CorrelationModel, wavelength_m: float) -> float:
    """Coefficient ``b`` of the small-lag expansion ``rho(tau) = 1 - b*tau**2 + o(tau**2)``."""
    _check_wavelength(wavelength_m)
    if model.kind is CorrelationKind.JAKES2D:
        return math.pi**2 / wavelength_m**2
    if model.kind is CorrelationKind.SINC3D:
        return 2.0 * math.pi**2 / (3.0 * wavelength_m**2)
    return model.b_override


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform sample positions ``0, step, 2*step, ...`` not exceeding ``length_m``."""

    length_m: float
    step_m: float

    def __post_init__(self):
        if not (np.isfinite(self.length_m) and self.length_m > 0):
            raise InvalidParameterError(f"grid length must be positive, got {self.length_m}")
        if not (np.isfinite(self.step_m) and self.step_m > 0):
            raise InvalidParameterError(f"grid step must be positive, got {self.step_m}")
        if self.step_m > self.length_m * (1 + 1e-12):
            raise InvalidParameterError("grid step exceeds the grid length")

    @classmethod
    def for_wavelength(cls, length_m: float, wavelength_m: float,
                       points_per_wavelength: int = DEFAULT_POINTS_PER_WAVELENGTH) -> "SpatialGrid":
        _check_wavelength(wavelength_m)
        if points_per_wavelength < 1:
            raise InvalidParameterError("points_per_wavelength must be >= 1")
        return cls(length_m, wavelength_m / points_per_wavelength)

    @property
    def n_points(self) -> int:
        # the small slack absorbs 0.003 / 5e-05 = 59.999999... style roundoff
        return int(math.floor(self.length_m / self.step_m + 1e-9)) + 1

    @property
    def positions(self) -> np.ndarray:
        return np.arange(self.n_points) * self.step_m

    @property
    def last_position(self) -> float:
        return (self.n_points - 1) * self.step_m


@dataclass(frozen=True, eq=False)
class ComplexField:
    """One realization of a zero-mean complex Gaussian process on ``grid``."""

    grid: SpatialGrid
    samples: np.ndarray
    variance: float

    def __post_init__(self):
        if self.samples.shape != (self.grid.n_points,):
            raise InvalidParameterError(
                f"expected {self.grid.n_points} samples, got shape {self.samples.shape}")
        if not self.variance > 0:
            raise InvalidParameterError("field variance must be positive")


@dataclass(frozen=True, eq=False)
class CovarianceFactor:
    """Real matrix root ``F`` (``n_points x rank``) with ``F @ F.T`` equal to the kernel's Toeplitz matrix.

    Columns are eigenvectors scaled by the square root of their eigenvalues.
    Directions whose eigenvalue is numerically null are omitted, so ``rank``
    is usually far below ``n_points`` for band-limited kernels.
    """

    grid: SpatialGrid
    factor: np.ndarray
    clamped_eigenvalue_count: int
    eigenvalues: np.ndarray
    max_abs_error: float

    @property
    def rank(self) -> int:
        return self.factor.shape[1]

    def covariance(self) -> np.ndarray:
        return self.factor @ self.factor.T


def toeplitz_column(model: CorrelationModel, grid: SpatialGrid, wavelength_m: float) -> np.ndarray:
    return correlation(model, grid.positions, wavelength_m)


def _toeplitz_matmat(col: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Symmetric Toeplitz matrix (first column ``col``) times ``x`` via circulant embedding."""
    n = col.shape[0]
    m = next_fast_len(2 * n - 1, real=True)
    circ = np.zeros(m)
    circ[:n] = col
    circ[m - n + 1:] = col[:0:-1]
    spec = rfft(circ)
    out = irfft(spec[:, None] * rfft(x, n=m, axis=0), n=m, axis=0)
    return out[:n]


def _check_psd(w: np.ndarray) -> tuple[float, int]:
    w_max = float(np.max(np.abs(w)))
    if w_max <= 0:
        raise ModelNotPSDError("correlation matrix is identically zero")
    floor = -PSD_TOL * w_max
    if np.min(w) < floor:
        raise ModelNotPSDError(
            f"eigenvalue {np.min(w):.3e} below tolerance {floor:.3e}; kernel is not a valid covariance on this grid")
    return w_max, int(np.count_nonzero(w < 0))


def _assemble(w: np.ndarray, v: np.ndarray, w_max: float) -> tuple[np.ndarray, np.ndarray]:
    keep = w > NULL_TOL * w_max
    w_kept = w[keep][::-1]
    v_kept = v[:, keep][:, ::-1]
    return v_kept * np.sqrt(w_kept), w_kept


def _dense_factor(col: np.ndarray):
    cov = scipy.linalg.toeplitz(col)
    w, v = scipy.linalg.eigh(cov)
    w_max, clamped = _check_psd(w)
    factor, w_kept = _assemble(w, v, w_max)
    err = float(np.max(np.abs(factor @ factor.T - cov)))
    if err > RECONSTRUCTION_TOL:
        # fall back to every non-negative direction
        pos = w > 0
        factor = v[:, pos][:, ::-1] * np.sqrt(w[pos][::-1])
        w_kept = w[pos][::-1]
        err = float(np.max(np.abs(factor @ factor.T - cov)))
    return factor, w_kept, clamped, err


def _spot_check_error(col: np.ndarray, factor: np.ndarray, n_rows: int = 64) -> float:
    n = col.shape[0]
    rows = np.unique(np.linspace(0, n - 1, min(n, n_rows)).astype(int))
    idx = np.arange(n)
    worst = 0.0
    for r in rows:
        exact = col[np.abs(idx - r)]
        worst = max(worst, float(np.max(np.abs(factor[r] @ factor.T - exact))))
    return worst


def _randomized_factor(col: np.ndarray, initial_rank: int, memory_budget: int):
    """Eigen-root of a numerically low-rank Toeplitz matrix.

    Randomized range finding with two power iterations; the sketch width is
    doubled until its smallest Ritz value is numerically null, which means
    the sketch spans the whole non-null eigenspace.
    """
    n = col.shape[0]
    rng = np.random.default_rng(0)
    k = min(n, initial_rank)
    while True:
        # working arrays: sketch, its FFT image, Q and the product buffers
        if 10 * n * k * 8 > memory_budget:
            raise ResourceError(
                f"factor of a {n}-point grid needs rank > {k}; exceeds memory budget of {memory_budget} bytes")
        y = _toeplitz_matmat(col, rng.standard_normal((n, k)))
        q, _ = np.linalg.qr(y)
        for _ in range(2):
            q, _ = np.linalg.qr(_toeplitz_matmat(col, q))
        b = q.T @ _toeplitz_matmat(col, q)
        w, u = np.linalg.eigh(0.5 * (b + b.T))
        w_max, clamped = _check_psd(w)
        if k == n or np.min(np.abs(w)) <= NULL_TOL * w_max:
            factor, w_kept = _assemble(w, q @ u, w_max)
            err = _spot_check_error(col, factor)
            if err <= RECONSTRUCTION_TOL or k == n:
                return factor, w_kept, clamped, err
        k = min(n, 2 * k)


def build_covariance(model: CorrelationModel, grid: SpatialGrid, wavelength_m: float,
                     memory_budget: int = DEFAULT_MEMORY_BUDGET) -> CovarianceFactor:
    """Factor the Toeplitz covariance ``C[i, j] = rho(|i - j| * step)``.

    Grids up to ``DENSE_MAX_POINTS`` use a full symmetric eigendecomposition;
    larger grids use a randomized low-rank eigendecomposition with FFT
    matrix products. In both cases eigenvalues within ``PSD_TOL`` of zero
    from below are clamped and anything more negative raises
    :class:`ModelNotPSDError`.
    """
    n = grid.n_points
    col = toeplitz_column(model, grid, wavelength_m)
    if n == 1:
        return CovarianceFactor(grid, np.ones((1, 1)), 0, np.ones(1), 0.0)
    if n <= DENSE_MAX_POINTS:
        if 3 * n * n * 8 > memory_budget:
            raise ResourceError(f"dense factorization of {n} points exceeds memory budget")
        factor, w, clamped, err = _dense_factor(col)
    else:
        # the band-limited kernels have about 2*T/lambda significant modes
        modes = int(math.ceil(2.0 * grid.length_m / wavelength_m))
        factor, w, clamped, err = _randomized_factor(col, 2 * modes + 64, memory_budget)
    return CovarianceFactor(grid, factor, clamped, w, err)


def _check_seed(seed: int) -> int:
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)) or seed < 0:
        raise InvalidParameterError(f"seed must be a non-negative integer, got {seed!r}")
    return int(seed)


def realization_rng(seed: int, realization: int) -> np.random.Generator:
    """Independent generator for one realization, keyed by ``(seed, realization)``.

    Keying by realization index keeps results independent of how
    realizations are batched or distributed across workers.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(realization,))))


def standard_complex_block(seed: int, start: int, count: int, n_fields: int, rank: int) -> np.ndarray:
    """Unit-power complex normals, shape ``(count, n_fields, rank)``, for realizations ``start..start+count-1``."""
    seed = _check_seed(seed)
    out = np.empty((count, n_fields, rank), dtype=complex)
    for i in range(count):
        z = realization_rng(seed, start + i).standard_normal((n_fields, 2, rank))
        out[i] = z[:, 0] + 1j * z[:, 1]
    out *= np.sqrt(0.5)
    return out


def sample_block(factor: CovarianceFactor, betas: Sequence[float], seed: int,
                 start: int, count: int) -> np.ndarray:
    """Fields for realizations ``start..start+count-1``; shape ``(count, len(betas), n_points)``.

    Within a realization the fields are drawn in the order of ``betas`` from
    that realization's own stream, so a realization with fewer fields is a
    prefix of one with more (common random numbers across field counts).
    """
    betas = np.asarray(betas, dtype=float)
    if betas.ndim != 1 or betas.size == 0 or np.any(~(betas > 0)):
        raise InvalidParameterError("field powers must be positive")
    if count < 0 or start < 0:
        raise InvalidParameterError("realization range must be non-negative")
    z = standard_complex_block(seed, start, count, betas.size, factor.rank)
    fields = z @ factor.factor.T.astype(complex)
    fields *= np.sqrt(betas)[None, :, None]
    return fields


def sample_field(factor: CovarianceFactor, beta: float, count: int, seed: int) -> list[ComplexField]:
    """``count`` independent CN(0, beta) realizations with the factor's correlation."""
    if not beta > 0:
        raise InvalidParameterError("beta must be positive")
    if count < 1:
        raise InvalidParameterError("count must be >= 1")
    block = sample_block(factor, [beta], seed, 0, count)
    return [ComplexField(factor.grid, block[i, 0], float(beta)) for i in range(count)]


def _stack(fields: Sequence[ComplexField]) -> tuple[np.ndarray, SpatialGrid]:
    if len(fields) == 0:
        raise InvalidParameterError("no fields given")
    grid = fields[0].grid
    if any(f.grid != grid for f in fields):
        raise InvalidParameterError("fields must share one grid")
    samples = np.stack([f.samples / np.sqrt(f.variance) for f in fields])
    return samples, grid


def lag_moment(normalized: np.ndarray, lag_index: int) -> float:
    """Mean of ``Re[x(t) conj(x(t + lag))]`` over rows and admissible positions."""
    n = normalized.shape[-1]
    prod = normalized[..., : n - lag_index] * np.conj(normalized[..., lag_index:])
    return float(np.mean(prod.real))


def empirical_correlation(fields: Sequence[ComplexField], lag_index: int) -> float:
    """Sample correlation at ``lag_index`` grid steps, pooled over realizations and positions."""
    if len(fields) < 2:
        raise InvalidParameterError("need at least two fields")
    samples, grid = _stack(fields)
    if not 0 <= lag_index < grid.n_points:
        raise InvalidParameterError(f"lag index {lag_index} outside grid of {grid.n_points} points")
    return lag_moment(samples, lag_index)
