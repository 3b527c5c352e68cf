"""Closed-form crossing, fade and outage statistics of the SIR process.

Every expression takes the curvature ``b`` of the correlation kernel
(``rho(tau) = 1 - b*tau**2 + ...``). With the Jakes value ``b = pi**2/lambda**2``
the factor ``sqrt(b)/pi`` equals ``1/lambda`` and the formulas reduce to
their usual wavelength form. ``b`` defaults to the Jakes value for the
scenario's wavelength.

Thresholds ``s_th`` are linear SIR values; scalars and numpy arrays are
both accepted and the result has the shape of ``s_th``.
"""

from __future__ import annotations

import enum
import math
from typing import NamedTuple, Optional

import numpy as np
import scipy.special

from .errors import InvalidParameterError
from .sirproc import ScenarioParams


class Regime(str, enum.Enum):
    SMALL_S = "small_s"
    LARGE_S = "large_s"


class SupRegime(str, enum.Enum):
    SMALL_T = "small_t"
    TAIL = "tail"


class TailAsymptote(NamedTuple):
    value: object
    order: float


def gamma_ratio(n: int) -> float:
    """``Gamma(n + 1/2) / Gamma(n)``, accurate to ~1e-15 for any n >= 1."""
    if n < 1:
        raise InvalidParameterError("n must be >= 1")
    return float(scipy.special.poch(n, 0.5))


def _b(params: ScenarioParams, b: Optional[float]) -> float:
    if b is None:
        return math.pi**2 / params.lambda_m**2
    if not (math.isfinite(b) and b > 0):
        raise InvalidParameterError(f"curvature b must be positive, got {b}")
    return float(b)


def _thresholds(s_th):
    s = np.asarray(s_th, dtype=float)
    if np.any(~(s >= 0)):
        raise InvalidParameterError("thresholds must be non-negative")
    return s


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def _ratio(params: ScenarioParams, s):
    return params.betaI * s / params.beta0


def ccdf_sir(params: ScenarioParams, s_th):
    """``P(S(t) > s) = (beta0 / (s*betaI + beta0))**N``."""
    s = _thresholds(s_th)
    return _out(np.exp(-params.n_interferers * np.log1p(_ratio(params, s))))


def cdf_sir(params: ScenarioParams, s_th):
    """Marginal CDF of the SIR at any position (F-distributed ratio).

    Evaluated as ``-expm1(-N*log1p(betaI*s/beta0))`` to keep full relative
    accuracy at small thresholds.
    """
    s = _thresholds(s_th)
    return _out(-np.expm1(-params.n_interferers * np.log1p(_ratio(params, s))))


def lcr_envelope_ratio(r_th, n: int, b: float):
    """Level crossing rate of ``R(t) = r0(t)/rI(t)`` across ``r_th``.

    Uses that the envelope derivatives are zero-mean Gaussian with variance
    ``b``, independent of the envelopes.
    """
    r = np.asarray(r_th, dtype=float)
    if np.any(~(r >= 0)):
        raise InvalidParameterError("r_th must be non-negative")
    if not b > 0:
        raise InvalidParameterError("b must be positive")
    val = (np.sqrt(b * (1.0 + r * r) / (2.0 * np.pi)) * 2.0 * r * gamma_ratio(n)
           / (r * r + 1.0) ** (n + 0.5))
    return _out(val)


def lcr_closed_form(params: ScenarioParams, s_th, b: Optional[float] = None):
    """LCR of ``S(t)`` in crossings per meter."""
    s = _thresholds(s_th)
    bb = _b(params, b)
    x = _ratio(params, s)
    n = params.n_interferers
    val = (math.sqrt(bb / (2.0 * math.pi)) * 2.0 * np.sqrt(x) * gamma_ratio(n)
           * np.exp(-n * np.log1p(x)))
    return _out(val)


def afd_closed_form(params: ScenarioParams, s_th, b: Optional[float] = None):
    """Average fade duration in meters: ``cdf_sir / lcr``, with the limit 0 at ``s = 0``.

    The ratio is simplified before evaluation, ``((1 + x)**N - 1) / (C sqrt(x))``
    with ``x = betaI*s/beta0``, so it stays finite where the LCR underflows.
    """
    s = _thresholds(s_th)
    x = _ratio(params, s)
    n = params.n_interferers
    scale = math.sqrt(_b(params, b) / (2.0 * math.pi)) * 2.0 * gamma_ratio(n)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = np.expm1(n * np.log1p(x)) / (scale * np.sqrt(x))
    return _out(np.where(s > 0, val, 0.0))


def lcr_special_equal_beta(n: int, lambda_m: float, s_th):
    """LCR for ``beta0 == betaI`` with the Jakes kernel, in its reduced form."""
    s = _thresholds(s_th)
    val = gamma_ratio(n) / (lambda_m * (1.0 + s) ** n) * np.sqrt(2.0 * np.pi * s)
    return _out(val)


def afd_special_equal_beta(n: int, lambda_m: float, s_th):
    """AFD for ``beta0 == betaI`` with the Jakes kernel, in its reduced form."""
    s = _thresholds(s_th)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = lambda_m / gamma_ratio(n) * np.expm1(n * np.log1p(s)) / np.sqrt(2.0 * np.pi * s)
    return _out(np.where(s > 0, val, 0.0))


def lcr_asymptotic(params: ScenarioParams, s_th, regime: Regime, b: Optional[float] = None):
    """Small- or large-threshold approximation of :func:`lcr_closed_form`."""
    s = _thresholds(s_th)
    inv_len = math.sqrt(_b(params, b)) / math.pi
    n = params.n_interferers
    g = gamma_ratio(n)
    regime = Regime(regime)
    if regime is Regime.SMALL_S:
        val = g * inv_len * np.sqrt(2.0 * np.pi * _ratio(params, s))
    else:
        with np.errstate(divide="ignore"):
            val = math.sqrt(2.0 * math.pi) * g * inv_len * (1.0 / _ratio(params, s)) ** (n - 0.5)
    return _out(val)


def afd_asymptotic(params: ScenarioParams, s_th, regime: Regime, b: Optional[float] = None):
    """Small- or large-threshold approximation of :func:`afd_closed_form`."""
    s = _thresholds(s_th)
    length = math.pi / math.sqrt(_b(params, b))
    n = params.n_interferers
    g = gamma_ratio(n)
    x = _ratio(params, s)
    regime = Regime(regime)
    if regime is Regime.SMALL_S:
        # Gamma(N+1)/Gamma(N+1/2) = N / g
        val = length * (n / g) * np.sqrt(x / (2.0 * np.pi))
    else:
        val = length / (math.sqrt(2.0 * math.pi) * g) * x ** (n - 0.5)
    return _out(val)


def cdf_sup_lower_bound(params: ScenarioParams, s_th, b: Optional[float] = None):
    """Lower bound on the CDF of the aperture supremum ``S*``.

    ``1 - P(S(0) > s) - T * LCR(s)``: the supremum can only exceed ``s`` if
    the process starts above it or upcrosses it at least once, and the
    expected number of upcrossings over length T bounds the latter. Returned
    unclamped; it is negative (vacuous) wherever the crossing term is large.
    """
    s = _thresholds(s_th)
    # cdf_sir is 1 - P(S(0) > s) evaluated without cancellation
    val = (np.asarray(cdf_sir(params, s))
           - params.length_m * np.asarray(lcr_closed_form(params, s, b)))
    return _out(val)


def cdf_sup_asymptotic(params: ScenarioParams, s_th, regime: SupRegime,
                       b: Optional[float] = None) -> TailAsymptote:
    """Limits of the supremum CDF bound.

    ``SMALL_T`` is the T -> 0 limit, i.e. the marginal CDF, whose upper
    tail decays with order ``-N``. ``TAIL`` keeps only the leading power of
    ``s`` in the outage term; its complement decays as ``s**(1/2 - N)``.
    """
    s = _thresholds(s_th)
    n = params.n_interferers
    regime = SupRegime(regime)
    if regime is SupRegime.SMALL_T:
        return TailAsymptote(cdf_sir(params, s), float(-n))
    inv_len = math.sqrt(_b(params, b)) / math.pi
    x = _ratio(params, s)
    with np.errstate(divide="ignore"):
        lead = (1.0 / x) ** n
    crossing = params.length_m * gamma_ratio(n) * inv_len * np.sqrt(2.0 * np.pi * x)
    return TailAsymptote(_out(1.0 - lead * (1.0 + crossing)), 0.5 - n)


def loglog_slope(s, y) -> float:
    """Least-squares slope of ``log y`` against ``log s``."""
    s = np.asarray(s, dtype=float)
    y = np.asarray(y, dtype=float)
    return float(np.polyfit(np.log(s), np.log(y), 1)[0])
