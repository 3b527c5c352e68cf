"""Monte Carlo estimators of crossing rates, fade durations and CDFs.

Conventions shared by every estimator here:

* a sample equal to the threshold counts as *below* it;
* a crossing lies between adjacent grid points whose states differ, at the
  position found by linear interpolation of ``S``;
* below-threshold length is measured on the piecewise-linear interpolant,
  so it includes partial grid intervals around each crossing;
* excursions already open at ``t = 0`` or still open at the end of the
  trace are *truncated*: their length counts toward the below-threshold
  total but they contribute no downcrossing to the fade-duration
  denominator.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .channel import ComplexField
from .errors import InvalidParameterError, NoEventsError
from .sirproc import SirTrace

Z95 = 1.959963984540054


@dataclass(frozen=True)
class CrossingStats:
    upcrossings: int
    downcrossings: int
    below_length_m: float
    interior_excursion_lengths: tuple = ()
    truncated_boundary_excursions: tuple = ()


@dataclass(frozen=True)
class EstimateWithCI:
    value: float
    ci_low: float
    ci_high: float
    n_events: int

    @property
    def half_width(self) -> float:
        return 0.5 * (self.ci_high - self.ci_low)


def _check_threshold(s_th: float) -> float:
    if not (np.isfinite(s_th) and s_th > 0):
        raise InvalidParameterError(f"threshold must be positive, got {s_th}")
    return float(s_th)


def count_crossings(trace: SirTrace, s_th: float) -> CrossingStats:
    s = _check_threshold(s_th)
    sir = trace.sir
    step = trace.grid.step_m
    end = trace.grid.last_position
    above = sir > s
    k = np.flatnonzero(above[:-1] != above[1:])
    frac = (s - sir[k]) / (sir[k + 1] - sir[k])
    t_cross = (k + frac) * step
    is_up = ~above[k]

    interior, truncated = [], []
    start = 0.0 if not above[0] else None
    from_boundary = True
    for t, up in zip(t_cross, is_up):
        if up:
            length = t - start
            (truncated if from_boundary else interior).append(length)
            start = None
        else:
            start, from_boundary = t, False
    if start is not None:
        truncated.append(end - start)

    total = float(sum(interior) + sum(truncated))
    return CrossingStats(
        upcrossings=int(np.count_nonzero(is_up)),
        downcrossings=int(np.count_nonzero(~is_up)),
        below_length_m=total,
        # a sample touching the threshold from above yields a zero-length excursion;
        # its crossings are counted but it has no length to record
        interior_excursion_lengths=tuple(float(x) for x in interior if x > 0),
        truncated_boundary_excursions=tuple(float(x) for x in truncated if x > 0),
    )


def crossing_arrays(sir: np.ndarray, step_m: float, s_th: float):
    """Per-row ``(upcrossings, downcrossings, below_length)`` for a ``(traces, n)`` array."""
    above = sir > s_th
    a0, a1 = above[:, :-1], above[:, 1:]
    up = ~a0 & a1
    down = a0 & ~a1
    s0, s1 = sir[:, :-1], sir[:, 1:]
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = (s_th - s0) / (s1 - s0)
    # fraction of each interval spent below the threshold
    below = np.where(~a0 & ~a1, 1.0, 0.0)
    below = np.where(up, frac, below)
    below = np.where(down, 1.0 - frac, below)
    return (np.count_nonzero(up, axis=1), np.count_nonzero(down, axis=1),
            step_m * below.sum(axis=1))


@dataclass
class CrossingTally:
    """Running sums of per-trace crossing statistics at several thresholds.

    Tallies over disjoint sets of traces combine with ``+``; counts are
    integers, so the merged counts do not depend on merge order.
    """

    thresholds: np.ndarray
    trace_length_m: float
    n_traces: int = 0
    up: np.ndarray = field(default=None)
    up_sq: np.ndarray = field(default=None)
    down: np.ndarray = field(default=None)
    down_sq: np.ndarray = field(default=None)
    below: np.ndarray = field(default=None)
    below_sq: np.ndarray = field(default=None)
    below_down: np.ndarray = field(default=None)

    def __post_init__(self):
        self.thresholds = np.asarray(self.thresholds, dtype=float)
        m = self.thresholds.size
        for name in ("up", "up_sq", "down", "down_sq"):
            if getattr(self, name) is None:
                setattr(self, name, np.zeros(m, dtype=np.int64))
        for name in ("below", "below_sq", "below_down"):
            if getattr(self, name) is None:
                setattr(self, name, np.zeros(m))

    def add(self, sir: np.ndarray, step_m: float) -> "CrossingTally":
        sir = np.atleast_2d(sir)
        for i, s in enumerate(self.thresholds):
            u, d, b = crossing_arrays(sir, step_m, s)
            u = u.astype(np.int64)
            d = d.astype(np.int64)
            self.up[i] += u.sum()
            self.up_sq[i] += (u * u).sum()
            self.down[i] += d.sum()
            self.down_sq[i] += (d * d).sum()
            self.below[i] += b.sum()
            self.below_sq[i] += (b * b).sum()
            self.below_down[i] += (b * d).sum()
        self.n_traces += sir.shape[0]
        return self

    def __add__(self, other: "CrossingTally") -> "CrossingTally":
        if not np.array_equal(self.thresholds, other.thresholds) or \
                self.trace_length_m != other.trace_length_m:
            raise InvalidParameterError("tallies cover different thresholds or trace lengths")
        return CrossingTally(
            self.thresholds, self.trace_length_m, self.n_traces + other.n_traces,
            self.up + other.up, self.up_sq + other.up_sq,
            self.down + other.down, self.down_sq + other.down_sq,
            self.below + other.below, self.below_sq + other.below_sq,
            self.below_down + other.below_down,
        )

    def lcr(self, i: int) -> EstimateWithCI:
        n, length = self.n_traces, self.trace_length_m
        mean = self.up[i] / n
        value = mean / length
        if n < 2:
            return EstimateWithCI(value, value, value, int(self.up[i]))
        var = max(self.up_sq[i] - n * mean * mean, 0.0) / (n - 1)
        half = Z95 * np.sqrt(var / n) / length
        return EstimateWithCI(value, value - half, value + half, int(self.up[i]))

    def afd(self, i: int) -> EstimateWithCI:
        n = self.n_traces
        d_total = int(self.down[i])
        if d_total == 0:
            raise NoEventsError(f"no downcrossings at threshold {self.thresholds[i]:g}")
        value = self.below[i] / d_total
        if n < 2:
            return EstimateWithCI(value, value, value, d_total)
        # delta method for a ratio of per-trace sums
        resid_sq = self.below_sq[i] - 2 * value * self.below_down[i] + value**2 * self.down_sq[i]
        var = max(resid_sq, 0.0) / (n - 1)
        half = Z95 * np.sqrt(var / n) / (d_total / n)
        return EstimateWithCI(value, value - half, value + half, d_total)

    def below_fraction(self, i: int) -> float:
        return float(self.below[i] / (self.n_traces * self.trace_length_m))


def _tally(traces: Sequence[SirTrace], s_th: float) -> CrossingTally:
    if len(traces) == 0:
        raise InvalidParameterError("no traces given")
    s = _check_threshold(s_th)
    grid = traces[0].grid
    if any(t.grid != grid for t in traces):
        raise InvalidParameterError("traces must share one grid")
    tally = CrossingTally(np.array([s]), grid.last_position)
    tally.add(np.stack([t.sir for t in traces]), grid.step_m)
    return tally


def empirical_lcr(traces: Sequence[SirTrace], s_th: float) -> EstimateWithCI:
    """Upcrossings per meter, with a normal-approximation 95% interval over traces."""
    return _tally(traces, s_th).lcr(0)


def empirical_afd(traces: Sequence[SirTrace], s_th: float) -> EstimateWithCI:
    """Total below-threshold length over total downcrossings (meters)."""
    return _tally(traces, s_th).afd(0)


def wilson_interval(k, n, z: float = Z95):
    """Wilson score interval for ``k`` successes out of ``n``; vectorized."""
    k = np.asarray(k, dtype=float)
    p = k / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * np.sqrt(p * (1 - p) / n + z * z / (4.0 * n * n)) / denom
    low = np.clip(np.minimum(center - half, p), 0.0, 1.0)
    high = np.clip(np.maximum(center + half, p), 0.0, 1.0)
    return low, high


def empirical_cdf(values, thresholds) -> list[EstimateWithCI]:
    """Fraction of ``values`` strictly below each threshold, with Wilson 95% intervals."""
    v = np.sort(np.asarray(values, dtype=float).ravel())
    th = np.asarray(thresholds, dtype=float).ravel()
    if v.size == 0 or th.size == 0:
        raise InvalidParameterError("values and thresholds must be non-empty")
    k = np.searchsorted(v, th, side="left")
    low, high = wilson_interval(k, v.size)
    return [EstimateWithCI(float(k_i / v.size), float(lo), float(hi), int(k_i))
            for k_i, lo, hi in zip(k, low, high)]


def derivative_variance(fields: Sequence[ComplexField], wavelength_m: float,
                        min_fields: int = 1000) -> float:
    """Pooled variance of the central-difference derivative of ``|x(t)|/sqrt(beta)``.

    For a Rayleigh envelope the derivative is Gaussian with variance equal to
    the kernel curvature ``b``, so this estimates ``b`` in 1/m**2.
    """
    if len(fields) < max(min_fields, 1):
        raise InvalidParameterError(f"need at least {min_fields} fields, got {len(fields)}")
    grid = fields[0].grid
    if grid.step_m > wavelength_m / 100:
        raise InvalidParameterError("grid step must be at most lambda/100 for derivative estimation")
    if grid.n_points < 3:
        raise InvalidParameterError("need at least three grid points")
    if any(f.grid != grid for f in fields):
        raise InvalidParameterError("fields must share one grid")
    env = np.stack([np.abs(f.samples) / np.sqrt(f.variance) for f in fields])
    return envelope_derivative_variance(env, grid.step_m)


def envelope_derivative_variance(envelopes: np.ndarray, step_m: float) -> float:
    deriv = (envelopes[:, 2:] - envelopes[:, :-2]) / (2.0 * step_m)
    return float(np.var(deriv, ddof=1))
