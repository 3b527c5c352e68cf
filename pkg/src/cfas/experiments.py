"""Experiment drivers pairing the closed forms with Monte Carlo estimates.

Each ``run_*`` function is a pure function of its :class:`ExperimentConfig`:
realization ``r`` always draws from the substream ``(seed, r)``, blocks of
realizations are reduced in index order, and the block size depends only on
the config, so worker count never changes a result.
"""

from __future__ import annotations

import csv
import dataclasses
import functools
import io
import json
import math
import os
import subprocess
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import __version__
from . import analytics
from .channel import (CorrelationModel, CovarianceFactor, SpatialGrid, build_covariance,
                      correlation, curvature_b, sample_block)
from .errors import InvalidParameterError, NoEventsError
from .estimators import CrossingTally, Z95, wilson_interval
from .sirproc import ScenarioParams, port_indices, sir_from_arrays, supremum_batch

LOW_CONFIDENCE_EVENTS = 30
DEFAULT_THRESHOLDS_DB = "-20:1:30"
BLOCK_ELEMENTS = 2_000_000

THRESHOLD_COLUMNS = ["threshold_db", "threshold_linear", "analytic", "empirical",
                     "ci_low", "ci_high", "n_events"]


def parse_db_range(spec: str) -> tuple:
    """``"lo:step:hi"`` (inclusive) to a tuple of dB values."""
    try:
        lo, step, hi = (float(x) for x in spec.split(":"))
    except ValueError:
        raise InvalidParameterError(f"threshold range must look like lo:step:hi, got {spec!r}") from None
    if not step > 0 or hi < lo:
        raise InvalidParameterError(f"bad threshold range {spec!r}")
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return tuple(round(lo + k * step, 10) for k in range(count))


@dataclass(frozen=True)
class ExperimentConfig:
    """Flat experiment description; field names double as JSON config keys."""

    beta0: float = 1.0
    beta_i: float = 2.0
    n_interferers: int = 1
    wavelength_m: float = 0.01
    length_m: float = 0.01
    model: str = "jakes2d"
    b_override: Optional[float] = None
    thresholds_db: Optional[tuple] = None
    thresholds_linear: Optional[tuple] = None
    n_realizations: int = 2000
    grid_points_per_wavelength: int = 200
    seed: int = 0
    dfas_ports: Optional[int] = None
    refine_supremum: bool = True
    # crossing statistics are stationary, so LCR/AFD runs use their own trace length
    trace_length_wavelengths: float = 50.0
    compare_model: Optional[str] = "sinc3d"
    lags_wavelengths: tuple = (0.0, 0.125, 0.25, 0.5, 1.0)

    def __post_init__(self):
        db, lin = self.thresholds_db, self.thresholds_linear
        if db is not None and lin is not None:
            raise InvalidParameterError("give thresholds_db or thresholds_linear, not both")
        if isinstance(db, str):
            db = parse_db_range(db)
        if db is None and lin is None:
            db = parse_db_range(DEFAULT_THRESHOLDS_DB)
        if db is not None:
            object.__setattr__(self, "thresholds_db", tuple(float(x) for x in db))
        else:
            lin = tuple(float(x) for x in lin)
            if any(not x > 0 for x in lin):
                raise InvalidParameterError("linear thresholds must be positive")
            object.__setattr__(self, "thresholds_linear", lin)
        th = self.thresholds
        if th.size == 0 or np.any(np.diff(th) <= 0):
            raise InvalidParameterError("thresholds must be non-empty and strictly increasing")
        if isinstance(self.n_realizations, bool) or int(self.n_realizations) != self.n_realizations \
                or self.n_realizations < 1:
            raise InvalidParameterError("n_realizations must be a positive integer")
        if int(self.grid_points_per_wavelength) != self.grid_points_per_wavelength \
                or self.grid_points_per_wavelength < 1:
            raise InvalidParameterError("grid_points_per_wavelength must be a positive integer")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or self.seed < 0:
            raise InvalidParameterError("seed must be a non-negative integer")
        if self.dfas_ports is not None and (int(self.dfas_ports) != self.dfas_ports or self.dfas_ports < 1):
            raise InvalidParameterError("dfas_ports must be a positive integer")
        if not self.trace_length_wavelengths > 0:
            raise InvalidParameterError("trace_length_wavelengths must be positive")
        object.__setattr__(self, "lags_wavelengths", tuple(float(x) for x in self.lags_wavelengths))
        if any(x < 0 for x in self.lags_wavelengths):
            raise InvalidParameterError("lags must be non-negative")
        # validation happens in the constructors
        self.scenario
        self.correlation_model

    @property
    def thresholds(self) -> np.ndarray:
        if self.thresholds_db is not None:
            return 10.0 ** (np.asarray(self.thresholds_db) / 10.0)
        return np.asarray(self.thresholds_linear)

    @property
    def thresholds_in_db(self) -> np.ndarray:
        if self.thresholds_db is not None:
            return np.asarray(self.thresholds_db)
        return 10.0 * np.log10(self.thresholds)

    @property
    def scenario(self) -> ScenarioParams:
        return ScenarioParams(self.beta0, self.beta_i, self.n_interferers,
                              self.wavelength_m, self.length_m)

    @property
    def correlation_model(self) -> CorrelationModel:
        return CorrelationModel(self.model, self.b_override)

    @property
    def step_m(self) -> float:
        return self.wavelength_m / self.grid_points_per_wavelength

    @property
    def b(self) -> float:
        return curvature_b(self.correlation_model, self.wavelength_m)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        for key in ("thresholds_db", "thresholds_linear", "lags_wavelengths"):
            if out[key] is not None:
                out[key] = list(out[key])
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise InvalidParameterError(f"unknown config key {unknown[0]!r}")
        kwargs = dict(data)
        for key in ("thresholds_db", "thresholds_linear", "lags_wavelengths"):
            if isinstance(kwargs.get(key), list):
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


def _revision() -> str:
    try:
        out = subprocess.run(["git", "rev-parse", "--short", "HEAD"], cwd=Path(__file__).parent,
                             capture_output=True, text=True, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        if math.isnan(value):
            return "nan"
        return f"{float(value):.9g}"
    return str(value)


@dataclass
class ResultTable:
    columns: list
    rows: list
    metadata: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        return np.array([row[name] for row in self.rows])

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([_fmt(row[c]) for c in self.columns])
        return buf.getvalue()

    def to_json(self) -> str:
        def clean(v):
            if isinstance(v, (np.bool_, bool)):
                return bool(v)
            if isinstance(v, (np.integer,)):
                return int(v)
            if isinstance(v, (float, np.floating)):
                return None if math.isnan(v) else float(v)
            return v
        payload = {
            "columns": list(self.columns),
            "rows": [{c: clean(row[c]) for c in self.columns} for row in self.rows],
            "metadata": self.metadata,
        }
        return json.dumps(payload, indent=2, sort_keys=False) + "\n"

    def write(self, path, fmt: str = "csv") -> None:
        text = self.to_csv() if fmt == "csv" else self.to_json()
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def worker_count() -> int:
    env = os.environ.get("CFAS_THREADS")
    cap = os.cpu_count() or 1
    if env:
        try:
            cap = max(1, min(cap, int(env)))
        except ValueError:
            raise InvalidParameterError(f"CFAS_THREADS must be an integer, got {env!r}") from None
    return cap


def _blocks(n_realizations: int, per_realization_elements: int):
    size = max(1, min(n_realizations, BLOCK_ELEMENTS // max(per_realization_elements, 1)))
    return [(start, min(size, n_realizations - start)) for start in range(0, n_realizations, size)]


def _map_blocks(fn: Callable, blocks: Sequence) -> list:
    """Evaluate ``fn(start, count)`` per block; results come back in block order."""
    workers = min(worker_count(), len(blocks))
    if workers <= 1:
        return [fn(*b) for b in blocks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda b: fn(*b), blocks))


@functools.lru_cache(maxsize=16)
def cached_factor(model: CorrelationModel, grid: SpatialGrid, wavelength_m: float) -> CovarianceFactor:
    return build_covariance(model, grid, wavelength_m)


def _sir_block(cfg: ExperimentConfig, factor: CovarianceFactor, start: int, count: int,
               seed_offset: int = 0) -> np.ndarray:
    betas = [cfg.beta0] + [cfg.beta_i] * cfg.n_interferers
    fields = sample_block(factor, betas, cfg.seed + seed_offset, start, count)
    return sir_from_arrays(fields[:, 0], fields[:, 1:])


def _meta(cfg: ExperimentConfig, experiment: str, started: float, **extra) -> dict:
    meta = {"experiment": experiment, "config": cfg.to_dict(), "revision": _revision()}
    meta.update(extra)
    meta["wall_time_s"] = round(time.perf_counter() - started, 3)
    return meta


def crossing_tally(cfg: ExperimentConfig) -> CrossingTally:
    """Pooled crossing statistics of ``n_realizations`` traces of length ``trace_length_wavelengths``."""
    grid = SpatialGrid.for_wavelength(cfg.trace_length_wavelengths * cfg.wavelength_m,
                                      cfg.wavelength_m, cfg.grid_points_per_wavelength)
    factor = cached_factor(cfg.correlation_model, grid, cfg.wavelength_m)
    n_fields = cfg.n_interferers + 1

    def work(start, count):
        sir = _sir_block(cfg, factor, start, count)
        return CrossingTally(cfg.thresholds, grid.last_position).add(sir, grid.step_m)

    parts = _map_blocks(work, _blocks(cfg.n_realizations, n_fields * grid.n_points))
    return functools.reduce(lambda a, b: a + b, parts)


def _crossing_rows(cfg, tally, kind):
    params = cfg.scenario
    s = cfg.thresholds
    if kind == "lcr":
        analytic = np.asarray(analytics.lcr_closed_form(params, s, cfg.b))
        scale = cfg.wavelength_m
    else:
        analytic = np.asarray(analytics.afd_closed_form(params, s, cfg.b))
        scale = 1.0 / cfg.wavelength_m
    rows = []
    for i, (s_db, s_lin) in enumerate(zip(cfg.thresholds_in_db, s)):
        if kind == "lcr":
            est = tally.lcr(i)
        else:
            try:
                est = tally.afd(i)
            except NoEventsError:
                est = None
        if est is None:
            emp = lo = hi = float("nan")
            events = 0
        else:
            emp, lo, hi, events = est.value, est.ci_low, est.ci_high, est.n_events
        rows.append({
            "threshold_db": float(s_db), "threshold_linear": float(s_lin),
            "analytic": float(analytic[i]), "empirical": emp, "ci_low": lo, "ci_high": hi,
            "n_events": int(events),
            "analytic_normalized": float(analytic[i] * scale), "empirical_normalized": emp * scale,
            "low_confidence": events < LOW_CONFIDENCE_EVENTS,
        })
    return rows


CROSSING_COLUMNS = THRESHOLD_COLUMNS + ["analytic_normalized", "empirical_normalized", "low_confidence"]


def crossing_tables(cfg: ExperimentConfig) -> tuple[ResultTable, ResultTable]:
    """LCR and AFD tables from one shared simulation."""
    started = time.perf_counter()
    tally = crossing_tally(cfg)
    lcr = ResultTable(CROSSING_COLUMNS, _crossing_rows(cfg, tally, "lcr"), _meta(cfg, "lcr", started))
    afd = ResultTable(CROSSING_COLUMNS, _crossing_rows(cfg, tally, "afd"), _meta(cfg, "afd", started))
    return lcr, afd


def run_lcr_experiment(cfg: ExperimentConfig) -> ResultTable:
    started = time.perf_counter()
    tally = crossing_tally(cfg)
    return ResultTable(CROSSING_COLUMNS, _crossing_rows(cfg, tally, "lcr"), _meta(cfg, "lcr", started))


def run_afd_experiment(cfg: ExperimentConfig) -> ResultTable:
    started = time.perf_counter()
    tally = crossing_tally(cfg)
    return ResultTable(CROSSING_COLUMNS, _crossing_rows(cfg, tally, "afd"), _meta(cfg, "afd", started))


def _aperture_grid(cfg: ExperimentConfig) -> SpatialGrid:
    if not cfg.length_m > 0:
        raise InvalidParameterError("aperture length must be positive for simulation")
    step = cfg.step_m
    if step > cfg.length_m:
        # apertures shorter than one grid step are sampled at both ends
        step = cfg.length_m
    return SpatialGrid(cfg.length_m, step)


def supremum_samples(cfg: ExperimentConfig, model: Optional[CorrelationModel] = None,
                     n_ports: Optional[int] = None):
    """Per-realization ``S*`` and, if ``n_ports`` is given, the best port SIR from the same trace."""
    grid = _aperture_grid(cfg)
    factor = cached_factor(model or cfg.correlation_model, grid, cfg.wavelength_m)
    ports = port_indices(grid, n_ports) if n_ports else None

    betas = [cfg.beta0] + [cfg.beta_i] * cfg.n_interferers

    def work(start, count):
        fields = sample_block(factor, betas, cfg.seed, start, count)
        sir = sir_from_arrays(fields[:, 0], fields[:, 1:])
        sup = supremum_batch(sir, grid.step_m, cfg.refine_supremum, fields=fields)
        best = sir[:, ports].max(axis=1) if ports is not None else None
        return sup, best

    parts = _map_blocks(work, _blocks(cfg.n_realizations, (cfg.n_interferers + 1) * grid.n_points))
    sup = np.concatenate([p[0] for p in parts])
    best = np.concatenate([p[1] for p in parts]) if ports is not None else None
    return sup, best


def _cdf_columns(values: np.ndarray, thresholds: np.ndarray):
    n = values.size
    k = np.searchsorted(np.sort(values), thresholds, side="left")
    low, high = wilson_interval(k, n)
    return k / n, low, high, k


def run_sup_cdf_experiment(cfg: ExperimentConfig) -> ResultTable:
    """Empirical CDF of the aperture supremum against the upcrossing lower bound."""
    started = time.perf_counter()
    sup, _ = supremum_samples(cfg)
    s = cfg.thresholds
    params = cfg.scenario
    emp, low, high, k = _cdf_columns(sup, s)
    bound = np.asarray(analytics.cdf_sup_lower_bound(params, s, cfg.b))
    marginal = np.asarray(analytics.cdf_sir(params, s))
    rows = []
    for i in range(s.size):
        events = int(min(k[i], sup.size - k[i]))
        rows.append({
            "threshold_db": float(cfg.thresholds_in_db[i]), "threshold_linear": float(s[i]),
            "analytic": float(bound[i]), "empirical": float(emp[i]),
            "ci_low": float(low[i]), "ci_high": float(high[i]), "n_events": events,
            "cdf_sir": float(marginal[i]), "low_confidence": events < LOW_CONFIDENCE_EVENTS,
        })
    columns = THRESHOLD_COLUMNS + ["cdf_sir", "low_confidence"]
    return ResultTable(columns, rows, _meta(cfg, "cdf-sup", started, n_samples=int(sup.size)))


def run_dfas_comparison(cfg: ExperimentConfig) -> ResultTable:
    """Continuous vs discrete aperture on common realizations, optionally for a second kernel too."""
    started = time.perf_counter()
    n_ports = cfg.dfas_ports or 10
    s = cfg.thresholds
    params = cfg.scenario
    sup, best = supremum_samples(cfg, n_ports=n_ports)
    emp, low, high, k = _cdf_columns(sup, s)
    d_emp, d_low, d_high, _ = _cdf_columns(best, s)
    bound = np.asarray(analytics.cdf_sup_lower_bound(params, s, cfg.b))

    alt = None
    if cfg.compare_model and CorrelationModel(cfg.compare_model) != cfg.correlation_model:
        alt_model = CorrelationModel(cfg.compare_model)
        a_sup, a_best = supremum_samples(cfg, model=alt_model, n_ports=n_ports)
        alt = (_cdf_columns(a_sup, s), _cdf_columns(a_best, s))

    columns = THRESHOLD_COLUMNS + ["dfas_empirical", "dfas_ci_low", "dfas_ci_high"]
    if alt is not None:
        columns += ["alt_empirical", "alt_ci_low", "alt_ci_high",
                    "alt_dfas_empirical", "alt_dfas_ci_low", "alt_dfas_ci_high"]
    columns.append("low_confidence")
    rows = []
    for i in range(s.size):
        events = int(min(k[i], sup.size - k[i]))
        row = {
            "threshold_db": float(cfg.thresholds_in_db[i]), "threshold_linear": float(s[i]),
            "analytic": float(bound[i]), "empirical": float(emp[i]),
            "ci_low": float(low[i]), "ci_high": float(high[i]), "n_events": events,
            "dfas_empirical": float(d_emp[i]), "dfas_ci_low": float(d_low[i]),
            "dfas_ci_high": float(d_high[i]), "low_confidence": events < LOW_CONFIDENCE_EVENTS,
        }
        if alt is not None:
            (ae, al, ah, _), (de, dl, dh, _) = alt
            row.update({"alt_empirical": float(ae[i]), "alt_ci_low": float(al[i]),
                        "alt_ci_high": float(ah[i]), "alt_dfas_empirical": float(de[i]),
                        "alt_dfas_ci_low": float(dl[i]), "alt_dfas_ci_high": float(dh[i])})
        rows.append(row)
    meta = _meta(cfg, "compare-dfas", started, n_ports=n_ports, n_samples=int(sup.size),
                 compare_model=cfg.compare_model if alt is not None else None)
    return ResultTable(columns, rows, meta)


VALIDATION_COLUMNS = ["quantity", "lag_wavelengths", "lag_m", "analytic", "empirical",
                      "ci_low", "ci_high", "n_events"]


def run_channel_validation(cfg: ExperimentConfig) -> ResultTable:
    """Empirical spatial correlation per lag and envelope-derivative variance versus the model."""
    started = time.perf_counter()
    lam = cfg.wavelength_m
    model = cfg.correlation_model
    lags = np.asarray(cfg.lags_wavelengths)
    lag_idx = np.rint(lags * cfg.grid_points_per_wavelength).astype(int)
    length = max(cfg.length_m, (lag_idx.max() + 2) * cfg.step_m)
    grid = SpatialGrid(length, cfg.step_m)
    factor = cached_factor(model, grid, lam)
    if grid.step_m > lam / 100:
        raise InvalidParameterError("channel validation needs at least 100 grid points per wavelength")

    def work(start, count):
        x = sample_block(factor, [1.0], cfg.seed, start, count)[:, 0]
        npts = x.shape[1]
        per_lag = np.stack([np.mean((x[:, : npts - j] * np.conj(x[:, j:])).real, axis=1)
                            for j in lag_idx], axis=1)
        env = np.abs(x)
        deriv = (env[:, 2:] - env[:, :-2]) / (2.0 * grid.step_m)
        return per_lag, deriv.sum(axis=1), (deriv**2).sum(axis=1), deriv.shape[1]

    parts = _map_blocks(work, _blocks(cfg.n_realizations, grid.n_points * 4))
    per_lag = np.concatenate([p[0] for p in parts])
    d_sum = np.concatenate([p[1] for p in parts])
    d_sq = np.concatenate([p[2] for p in parts])
    m = parts[0][3]
    n = per_lag.shape[0]

    rows = []
    for j, (lw, li) in enumerate(zip(lags, lag_idx)):
        tau = li * grid.step_m
        mean = float(per_lag[:, j].mean())
        half = Z95 * float(per_lag[:, j].std(ddof=1)) / math.sqrt(n) if n > 1 else 0.0
        rows.append({"quantity": "correlation", "lag_wavelengths": float(lw), "lag_m": tau,
                     "analytic": float(correlation(model, tau, lam)), "empirical": mean,
                     "ci_low": mean - half, "ci_high": mean + half, "n_events": n})
    total = n * m
    var = float((d_sq.sum() - d_sum.sum() ** 2 / total) / (total - 1))
    # per-realization second moments give a conservative interval for the pooled variance
    per_real = d_sq / m
    half = Z95 * float(per_real.std(ddof=1)) / math.sqrt(n) if n > 1 else 0.0
    rows.append({"quantity": "derivative_variance", "lag_wavelengths": float("nan"),
                 "lag_m": float("nan"), "analytic": cfg.b, "empirical": var,
                 "ci_low": var - half, "ci_high": var + half, "n_events": n})
    return ResultTable(VALIDATION_COLUMNS, rows, _meta(cfg, "validate-channel", started))


EXPERIMENTS = {
    "lcr": run_lcr_experiment,
    "afd": run_afd_experiment,
    "cdf-sup": run_sup_cdf_experiment,
    "compare-dfas": run_dfas_comparison,
    "validate-channel": run_channel_validation,
}
