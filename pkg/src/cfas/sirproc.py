"""The SIR process ``S(t) = |g(t)|**2 / sum_i |h_i(t)|**2`` and its maxima."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .channel import ComplexField, SpatialGrid
from .errors import DegenerateSampleError, InvalidParameterError


@dataclass(frozen=True)
class ScenarioParams:
    """Physical scenario.

    Attributes:
        beta0: mean power of the desired link.
        betaI: mean power of each interferer.
        n_interferers: number of i.i.d. interferers (N >= 1; the model is
            interference limited, so N = 0 is not a valid scenario).
        lambda_m: carrier wavelength in meters.
        length_m: aperture length T in meters.
    """

    beta0: float = 1.0
    betaI: float = 2.0
    n_interferers: int = 1
    lambda_m: float = 0.01
    length_m: float = 0.01

    def __post_init__(self):
        for name in ("beta0", "betaI", "lambda_m"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise InvalidParameterError(f"{name} must be positive, got {value}")
        # T = 0 is admitted for the degenerate-aperture limit of the bound
        if not (np.isfinite(self.length_m) and self.length_m >= 0):
            raise InvalidParameterError(f"length_m must be non-negative, got {self.length_m}")
        if isinstance(self.n_interferers, bool) or int(self.n_interferers) != self.n_interferers \
                or self.n_interferers < 1:
            raise InvalidParameterError(f"n_interferers must be an integer >= 1, got {self.n_interferers}")
        object.__setattr__(self, "n_interferers", int(self.n_interferers))


@dataclass(frozen=True, eq=False)
class SirTrace:
    grid: SpatialGrid
    sir: np.ndarray

    def __post_init__(self):
        if self.sir.shape != (self.grid.n_points,):
            raise InvalidParameterError("SIR samples do not match the grid")


@dataclass(frozen=True)
class SupremumResult:
    value: float
    position_m: float
    refined: bool


def sir_from_arrays(desired: np.ndarray, interferers: np.ndarray) -> np.ndarray:
    """Vectorized SIR: ``desired`` is ``(..., n)``, ``interferers`` is ``(..., N, n)``."""
    power = np.sum(np.abs(interferers) ** 2, axis=-2)
    if np.any(power == 0):
        raise DegenerateSampleError("zero aggregate interference power; resample this realization")
    return np.abs(desired) ** 2 / power


def assemble_sir(desired: ComplexField, interferers: Sequence[ComplexField]) -> SirTrace:
    if len(interferers) < 1:
        raise InvalidParameterError("at least one interferer is required")
    grid = desired.grid
    if any(h.grid != grid for h in interferers):
        raise InvalidParameterError("desired and interfering fields must share one grid")
    stacked = np.stack([h.samples for h in interferers])
    return SirTrace(grid, sir_from_arrays(desired.samples, stacked))


def _parabola_vertex(y0, y1, y2):
    """Vertex (offset in grid steps, value) of the parabola through (-1, y0), (0, y1), (1, y2)."""
    curvature = (y0 + y2) - 2.0 * y1
    with np.errstate(divide="ignore", invalid="ignore"):
        offset = 0.5 * (y0 - y2) / curvature
        value = y1 - 0.25 * (y0 - y2) * offset
    return offset, value, curvature


def refine_peaks(sir: np.ndarray, idx: np.ndarray, domain: str = "reciprocal"):
    """Parabolic refinement of grid maxima, vectorized over rows of ``sir``.

    ``domain="ratio"`` fits the envelope ratio ``sqrt(S)``; ``"reciprocal"``
    fits ``1/S``. Near the tall, narrow peaks produced by interferer fades
    the reciprocal is locally quadratic while ``S`` and ``sqrt(S)`` are not,
    so the reciprocal fit is the default. Returns ``(values, offsets, refined)``.
    """
    if domain not in ("ratio", "reciprocal"):
        raise InvalidParameterError(f"unknown refinement domain {domain!r}")
    sir = np.atleast_2d(sir)
    rows = np.arange(sir.shape[0])
    grid_max = sir[rows, idx]
    values = grid_max.astype(float).copy()
    offsets = np.zeros_like(values)
    refined = np.zeros(values.shape, dtype=bool)
    inner = (idx > 0) & (idx < sir.shape[1] - 1)
    if not np.any(inner):
        return values, offsets, refined
    r, k = rows[inner], idx[inner]
    s0, s1, s2 = sir[r, k - 1], sir[r, k], sir[r, k + 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        if domain == "ratio":
            off, vert, curv = _parabola_vertex(np.sqrt(s0), np.sqrt(s1), np.sqrt(s2))
            ok = (curv < 0) & (vert > 0)
            cand = vert**2
        else:
            off, vert, curv = _parabola_vertex(1.0 / s0, 1.0 / s1, 1.0 / s2)
            ok = (curv > 0) & (vert > 0)
            cand = 1.0 / vert
    ok &= np.isfinite(cand) & (np.abs(off) <= 1.0) & (cand > s1)
    sel = np.flatnonzero(inner)[ok]
    values[sel] = cand[ok]
    offsets[sel] = off[ok]
    refined[sel] = True
    return values, offsets, refined


def supremum(trace: SirTrace, refine: bool = True, domain: str = "reciprocal") -> SupremumResult:
    """Largest SIR over the aperture.

    The grid argmax (ties go to the smallest position) is optionally refined
    by a three-point parabola; the refined vertex is used only when it lies
    within one grid step and beats the grid maximum.
    """
    sir = trace.sir
    if sir.size == 0:
        raise InvalidParameterError("empty trace")
    k = int(np.argmax(sir))
    step = trace.grid.step_m
    if not refine:
        return SupremumResult(float(sir[k]), k * step, False)
    values, offsets, refined = refine_peaks(sir[None, :], np.array([k]), domain)
    pos = (k + offsets[0]) * step
    return SupremumResult(float(values[0]), float(pos), bool(refined[0]))


def supremum_batch(sir: np.ndarray, step_m: float, refine: bool = True,
                   domain: str = "reciprocal", fields: Optional[np.ndarray] = None) -> np.ndarray:
    """Supremum value of every row of a ``(traces, n)`` array.

    When the complex channel samples ``fields`` (``(traces, N + 1, n)``,
    desired first) are supplied, refinement interpolates the channels
    themselves around every local maximum of ``S`` instead of fitting ``S``.
    """
    idx = np.argmax(sir, axis=1)
    grid_max = sir[np.arange(sir.shape[0]), idx]
    if not refine:
        return grid_max
    if fields is not None:
        return np.maximum(grid_max, refine_from_fields(sir, fields))
    return refine_peaks(sir, idx, domain)[0]


def refine_from_fields(sir: np.ndarray, fields: np.ndarray, subdivisions: int = 32) -> np.ndarray:
    """Per-row supremum of ``S`` between grid points, from interpolated channels.

    A deep interferer fade makes ``S`` spike over a fraction of a grid step,
    too narrow for any fit to the sampled ``S``; the channels are smooth on
    that scale, so each one is interpolated by the quadratic through three
    neighboring samples and ``S`` is evaluated on ``2*subdivisions + 1``
    points spanning the two intervals around every local grid maximum. A
    final three-point fit in ``1/S`` polishes the best sub-sample.
    """
    count, n = sir.shape
    if n < 3:
        return sir.max(axis=1)
    left = np.concatenate([np.full((count, 1), -np.inf), sir[:, :-1]], axis=1)
    right = np.concatenate([sir[:, 1:], np.full((count, 1), -np.inf)], axis=1)
    rows, ks = np.nonzero((sir >= left) & (sir >= right))
    centre = np.clip(ks, 1, n - 2)
    u = np.linspace(-1.0, 1.0, 2 * subdivisions + 1)
    # offsets relative to the interpolation centre, clipped to the aperture
    off = (ks - centre)[:, None] + u[None, :]
    inside = (off + centre[:, None] >= 0) & (off + centre[:, None] <= n - 1)
    w_m = 0.5 * off * (off - 1.0)
    w_0 = 1.0 - off * off
    w_p = 0.5 * off * (off + 1.0)
    f_m = fields[rows, :, centre - 1]
    f_0 = fields[rows, :, centre]
    f_p = fields[rows, :, centre + 1]
    interp = (f_m[:, :, None] * w_m[:, None, :] + f_0[:, :, None] * w_0[:, None, :]
              + f_p[:, :, None] * w_p[:, None, :])
    power = np.abs(interp) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        s_sub = power[:, 0] / power[:, 1:].sum(axis=1)
    s_sub = np.where(inside & np.isfinite(s_sub), s_sub, 0.0)
    j = np.argmax(s_sub, axis=1)
    values = s_sub[np.arange(j.size), j]
    polished, _, _ = refine_peaks(s_sub, j, "reciprocal")
    values = np.maximum(values, np.where(np.isfinite(polished), polished, values))
    best = np.full(count, -np.inf)
    np.maximum.at(best, rows, values)
    return best


def port_indices(grid: SpatialGrid, n_ports: int) -> np.ndarray:
    """Grid indices of ``n_ports`` uniformly spaced ports, both aperture ends included."""
    n = grid.n_points
    if isinstance(n_ports, bool) or int(n_ports) != n_ports or n_ports < 1:
        raise InvalidParameterError(f"n_ports must be a positive integer, got {n_ports}")
    if n_ports > n:
        raise InvalidParameterError(f"{n_ports} ports exceed the {n} grid points")
    if n_ports == 1:
        return np.zeros(1, dtype=int)
    pos = np.arange(n_ports) * (grid.length_m / (n_ports - 1))
    return np.clip(np.rint(pos / grid.step_m).astype(int), 0, n - 1)


def dfas_select(trace: SirTrace, n_ports: int) -> float:
    """Best SIR among the ports of a discrete fluid antenna."""
    return float(np.max(trace.sir[port_indices(trace.grid, n_ports)]))
