"""Day-ahead forecasting workflow: recursion, splits, grid search, pruning, benchmark."""
from __future__ import annotations

import hashlib
import itertools
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import dists
from .baselines import (AdamSettings, AnnealSchedule, GpModel, KernelSpec, LubeNet, cwc, gp_fit,
                        lube_train)
from .dataset import (STEP, Dataset, RawSeries, SplitSpec, build_lagged, calendar_features,
                      filter_night_hours, is_day, seasonal_specs, sliding_splits)
from .dists import DistParams, Family
from .errors import DataError, NumericalError
from .explain import shap_values_batch
from .metrics import EvalReport, coverage_label, evaluate, interval_metrics
from .ngboost import NgbConfig, NgbModel, fit

SIGMA_COVERAGES = tuple(dists.sigma_coverage(k) for k in (1.0, 2.0, 3.0))
DAY = np.timedelta64(1, "D")

NGB_GRID = {
    "max_depth": (3, 4, 5),
    "learning_rate": (0.01, 0.05, 0.1),
    "n_stages": (100, 500, 1000),
    "family": ("normal", "laplace"),
    "score": ("log", "crps"),
}
LUBE_GRID = {"width": tuple(range(10, 101, 10)), "eta_pen": tuple(range(10, 91, 10))}
GP_GRID = {"kernel": ("rbf", "rq", "per", "sum", "product")}
GRIDS = {"ngboost": NGB_GRID, "lube": LUBE_GRID, "gp": GP_GRID}
MODEL_KINDS = ("ngboost", "gp", "lube", "persistence")


def model_kind(model) -> str:
    if isinstance(model, NgbModel):
        return "ngboost"
    if isinstance(model, GpModel):
        return "gp"
    if isinstance(model, LubeNet):
        return "lube"
    raise TypeError(f"not a forecasting model: {type(model).__name__}")


# ----------------------------------------------------------------------------
# recursive forecasting


@dataclass(eq=False)
class ForecastSeries:
    """Forecast slots, one row per (origin, lead step); night slots carry zeros."""

    origin: np.ndarray
    timestamps: np.ndarray
    point: np.ndarray  # NaN for interval-only models
    lower: dict  # coverage label -> array
    upper: dict
    daylight: np.ndarray
    realized: np.ndarray  # NaN when unknown
    family: str | None = None
    loc: np.ndarray | None = None
    scale: np.ndarray | None = None  # zero on night slots

    def __len__(self):
        return len(self.timestamps)

    def take(self, mask) -> "ForecastSeries":
        pick = lambda a: None if a is None else a[mask]
        return ForecastSeries(
            self.origin[mask], self.timestamps[mask], self.point[mask],
            {k: v[mask] for k, v in self.lower.items()}, {k: v[mask] for k, v in self.upper.items()},
            self.daylight[mask], self.realized[mask], self.family, pick(self.loc), pick(self.scale),
        )

    def params(self) -> DistParams | None:
        if self.family is None:
            return None
        return DistParams.from_scale(self.family, self.loc, self.scale)

    def rows(self):
        labels = list(self.lower)
        head = ["origin", "timestamp", "point"]
        for lab in labels:
            head += [f"lower_{lab}", f"upper_{lab}"]
        head += ["loc", "scale", "realized"]
        yield head
        for i in range(len(self)):
            row = [np.datetime_as_string(self.origin[i], unit="m"),
                   np.datetime_as_string(self.timestamps[i], unit="m"), _num(self.point[i])]
            for lab in labels:
                row += [_num(self.lower[lab][i]), _num(self.upper[lab][i])]
            row += [_num(None if self.loc is None else self.loc[i]),
                    _num(None if self.scale is None else self.scale[i]), _num(self.realized[i])]
            yield row


def _num(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)) or (np.ndim(v) == 0 and np.isnan(v)):
        return ""
    return repr(float(v))


def _lag_steps(feature_names, step_minutes) -> dict:
    """Lag feature name -> number of steps back, parsed from ``t-<minutes>`` names."""
    out = {}
    for name in feature_names:
        if name.startswith("t-") and name[2:].isdigit():
            minutes = int(name[2:])
            if minutes % step_minutes:
                raise DataError(f"lag {name} is not a multiple of the {step_minutes}-minute step")
            out[name] = minutes // step_minutes
    return out


def _emit(model, X, coverages):
    """(point, loc, scale, bands, lag fill) for one batch of feature rows."""
    kind = model_kind(model)
    if kind == "lube":
        lo, hi = model.bounds(X)
        label = coverage_label(model.mu_conf)
        nan = np.full(len(X), np.nan)
        return nan, None, None, {label: (lo, hi)}, 0.5 * (lo + hi)
    params = model.predict(X)
    bands = {coverage_label(c): dists.interval_for_coverage(params, c) for c in coverages}
    return params.mean, params.loc, params.scale, bands, params.mean


def recursive_forecast(model, series: RawSeries, origins, horizon_minutes: int = 36 * 60,
                       step_minutes: int = 15, nominal_power: float = 1.0,
                       coverages=SIGMA_COVERAGES, with_realized: bool = True) -> ForecastSeries:
    """Multi-step forecasts where each lag input after the origin is an earlier predicted mean.

    Realized power is read only at or before each origin; missing night-time
    history counts as zero output. Weather at each slot is taken from
    ``series`` as the forecast input. Values are in model units (power divided
    by ``nominal_power``).
    """
    if horizon_minutes <= 0 or horizon_minutes % step_minutes:
        raise ValueError(f"horizon {horizon_minutes} min is not a positive multiple of {step_minutes} min")
    origins = np.atleast_1d(np.asarray(origins, dtype="datetime64[m]"))
    step = np.timedelta64(step_minutes, "m")
    H = horizon_minutes // step_minutes
    names = tuple(model.feature_names)
    lags = _lag_steps(names, step_minutes)
    weather_names = [n for n in names if n not in lags and n not in ("month_sin", "month_cos", "hour")]
    for n in weather_names:
        if n not in series.weather:
            raise DataError(f"series lacks forecast column {n!r}")
    nO = len(origins)
    fill = np.zeros((nO, H))
    labels = None
    out_point = np.zeros((nO, H))
    out_loc = np.zeros((nO, H))
    out_scale = np.zeros((nO, H))
    lower, upper = {}, {}
    slots = origins[:, None] + step * np.arange(1, H + 1)[None, :]
    daylight = is_day(slots.ravel()).reshape(nO, H)
    family = None

    for k in range(H):
        day = daylight[:, k]
        if not day.any():
            continue
        t = slots[day, k]
        cols = {}
        for name, j in lags.items():
            back = k - j  # index of the slot supplying this lag, negative: realized history
            if back >= 0:
                cols[name] = fill[day, back]
            else:
                src = t - j * step
                idx = series.index_of(src)
                vals = np.where(idx >= 0, series.power[np.maximum(idx, 0)] / nominal_power, np.nan)
                night = ~is_day(src)
                vals = np.where(np.isnan(vals) & night, 0.0, vals)
                if np.isnan(vals).any():
                    bad = src[np.isnan(vals)][0]
                    raise DataError(f"no realized power at {bad} for an origin before it")
                cols[name] = vals
        w_idx = series.index_of(t)
        if (w_idx < 0).any():
            raise DataError(f"no weather forecast for slot {t[w_idx < 0][0]}")
        cal = calendar_features(t)
        for n in weather_names:
            cols[n] = series.weather[n][w_idx]
        cols.update(cal)
        X = np.column_stack([cols[n] for n in names])
        if np.isnan(X).any():
            raise DataError(f"missing forecast input near {t[np.isnan(X).any(axis=1)][0]}")
        point, loc, scale, bands, lag_fill = _emit(model, X, coverages)
        if not np.all(np.isfinite(lag_fill)):
            raise NumericalError("non-finite forecast during recursion", stage=k)
        fill[day, k] = lag_fill
        out_point[day, k] = point
        if loc is not None:
            family = model.config.family.value if isinstance(model, NgbModel) else "normal"
            out_loc[day, k] = loc
            out_scale[day, k] = scale
        if labels is None:
            labels = list(bands)
            for lab in labels:
                lower[lab] = np.zeros((nO, H))
                upper[lab] = np.zeros((nO, H))
        for lab, (lo, hi) in bands.items():
            lower[lab][day, k] = lo
            upper[lab][day, k] = hi

    if labels is None:  # all-night horizon: still report the coverage columns
        probe = [coverage_label(model.mu_conf)] if model_kind(model) == "lube" else [coverage_label(c) for c in coverages]
        lower = {lab: np.zeros((nO, H)) for lab in probe}
        upper = {lab: np.zeros((nO, H)) for lab in probe}
        if model_kind(model) != "lube":
            family = model.config.family.value if isinstance(model, NgbModel) else "normal"
    realized = np.full(nO * H, np.nan)
    flat_slots = slots.ravel()
    if with_realized:
        idx = series.index_of(flat_slots)
        hit = idx >= 0
        realized[hit] = series.power[idx[hit]] / nominal_power
        realized[~hit & ~daylight.ravel()] = 0.0
    return ForecastSeries(
        origin=np.repeat(origins, H), timestamps=flat_slots, point=out_point.ravel(),
        lower={k: v.ravel() for k, v in lower.items()}, upper={k: v.ravel() for k, v in upper.items()},
        daylight=daylight.ravel(), realized=realized, family=family,
        loc=out_loc.ravel() if family else None, scale=out_scale.ravel() if family else None,
    )


def day_origins(days, origin_hour: float = 12.0) -> np.ndarray:
    """Origin for each target day: ``origin_hour`` on the previous day."""
    days = np.atleast_1d(np.asarray(days, dtype="datetime64[D]"))
    return (days - DAY).astype("datetime64[m]") + np.timedelta64(int(round(origin_hour * 60)), "m")


def _target_rows(fs: ForecastSeries, days) -> ForecastSeries:
    days = np.asarray(days, dtype="datetime64[D]")
    target = fs.origin.astype("datetime64[D]") + DAY
    keep = (fs.timestamps.astype("datetime64[D]") == target) & fs.daylight
    keep &= np.isin(target, days)
    return fs.take(keep)


def day_ahead_forecast(model, series: RawSeries, days, origin_hour: float = 12.0,
                       horizon_hours: float = 36.0, nominal_power: float = 1.0,
                       coverages=SIGMA_COVERAGES) -> ForecastSeries:
    """Daylight slots of each target day, forecast from the previous day's origin."""
    origins = day_origins(days, origin_hour)
    horizon = int(round(horizon_hours * 60))
    reach = origins + np.timedelta64(horizon, "m")
    if (reach < (np.asarray(days, dtype="datetime64[D]") + DAY).astype("datetime64[m]")).any():
        raise ValueError("horizon does not reach the end of the target day")
    fs = recursive_forecast(model, series, origins, horizon, nominal_power=nominal_power, coverages=coverages)
    return _target_rows(fs, days)


def persistence_day_ahead(series: RawSeries, days, origin_hour: float = 12.0, nominal_power: float = 1.0,
                          max_days: int = 7) -> ForecastSeries:
    """Same time of day on the latest day fully observed at the origin."""
    days = np.atleast_1d(np.asarray(days, dtype="datetime64[D]"))
    origins = day_origins(days, origin_hour)
    per_day = np.arange(DAY_SLOTS) * STEP
    slots = (days.astype("datetime64[m]")[:, None] + per_day[None, :]).ravel()
    orig = np.repeat(origins, DAY_SLOTS)
    keep = is_day(slots)
    slots, orig = slots[keep], orig[keep]
    point = np.full(len(slots), np.nan)
    need = np.ceil((slots - orig).astype(int) / (24 * 60)).astype(int)
    for extra in range(max_days - 1, -1, -1):
        idx = series.index_of(slots - (need + extra) * DAY.astype("timedelta64[m]"))
        hit = idx >= 0
        point[hit] = series.power[idx[hit]] / nominal_power
    if np.isnan(point).any():
        raise DataError(f"no persistence value for {slots[np.isnan(point)][0]}")
    idx = series.index_of(slots)
    realized = np.where(idx >= 0, series.power[np.maximum(idx, 0)] / nominal_power, np.nan)
    return ForecastSeries(orig, slots, point, {}, {}, np.ones(len(slots), bool), realized)


DAY_SLOTS = 96


def forecast_report(fs: ForecastSeries, R=None, pit_bins: int = 20) -> EvalReport | None:
    """Metrics over slots with a realized value; None when nothing was observed."""
    have = ~np.isnan(fs.realized)
    if not have.any():
        return None
    fs = fs.take(have)
    intervals = {lab: (fs.lower[lab], fs.upper[lab]) for lab in fs.lower}
    # interval-only models leave daylight points NaN
    point = None if np.isnan(fs.point).any() else fs.point
    params = fs.params()
    rep = evaluate(fs.realized, point=point, params=params, intervals=intervals, R=R, k_sigmas=(),
                   pit_bins=pit_bins)
    return rep


def lube_eval_cwc(fs: ForecastSeries, mu_conf: float, eta_pen: float, R=None) -> float:
    have = ~np.isnan(fs.realized)
    y = fs.realized[have]
    label = coverage_label(mu_conf)
    R = float(np.max(y)) if R is None else R
    picp, pinaw = interval_metrics(fs.lower[label][have], fs.upper[label][have], y, R)
    return cwc(picp, pinaw, mu_conf, eta_pen, training=False)


# ----------------------------------------------------------------------------
# experiment context


@dataclass(eq=False)
class Experiment:
    """Night-filtered series, its lagged dataset and the evaluation splits."""

    series: RawSeries
    data: Dataset
    specs: list
    nominal_power: float
    origin_hour: float = 12.0
    horizon_hours: float = 36.0
    coverages: tuple = SIGMA_COVERAGES

    @classmethod
    def build(cls, series: RawSeries, specs, nominal_power=None, lags=(1, 2, 3), **kw) -> "Experiment":
        day_series = filter_night_hours(series)
        if nominal_power is None:
            nominal_power = float(np.nanmax(series.power))
            if not nominal_power > 0:
                raise DataError("power is never positive; cannot infer nominal power")
        data = build_lagged(day_series, lags, nominal_power)
        return cls(day_series, data, list(specs), float(nominal_power), **kw)

    def split(self, i: int):
        return sliding_splits(self.data, [self.specs[i]])[0]

    def test_days(self, i: int) -> np.ndarray:
        spec = self.specs[i]
        days = np.arange(spec.test_start.astype("datetime64[D]"), spec.test_end.astype("datetime64[D]"))
        have = np.unique(self.series.timestamps.astype("datetime64[D]"))
        return days[np.isin(days, have)]

    def forecast(self, model, i: int) -> ForecastSeries:
        days = self.test_days(i)
        if model == "persistence":
            return persistence_day_ahead(self.series, days, self.origin_hour, self.nominal_power)
        return day_ahead_forecast(model, self.series, days, self.origin_hour, self.horizon_hours,
                                  self.nominal_power, self.coverages)


# ----------------------------------------------------------------------------
# model fitting


@dataclass(frozen=True)
class BaselineSettings:
    """Fixed settings for baselines that the grids leave open."""

    gp_kernel: str = "rq"
    gp_steps: int = 200
    gp_learning_rate: float = 0.01
    gp_max_rows: int = 1000
    lube_width: int = 20
    lube_eta_pen: float = 50.0
    lube_mu_conf: float = 0.95
    lube_max_rows: int = 2000
    lube_anneal: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


FIT_PARAMS = {
    "gp": {"kernel", "steps", "learning_rate", "max_rows"},
    "lube": {"width", "mu_conf", "eta_pen", "max_rows", "anneal"},
}


def fit_model(kind: str, params: dict, train: Dataset, seed: int, base: BaselineSettings = BaselineSettings()):
    """Train one model of ``kind``; ``params`` override the defaults for that kind."""
    extra = set(params) - FIT_PARAMS.get(kind, set(params))
    if extra:
        raise ValueError(f"unknown {kind} parameters: {sorted(extra)}")
    if kind == "ngboost":
        return fit(train.X, train.y, NgbConfig(**params), train.feature_names, train.scaling)
    if kind == "gp":
        spec = KernelSpec(params.get("kernel", base.gp_kernel))
        adam = AdamSettings(steps=params.get("steps", base.gp_steps),
                            learning_rate=params.get("learning_rate", base.gp_learning_rate))
        return gp_fit(train.X, train.y, spec, adam, max_rows=params.get("max_rows", base.gp_max_rows),
                      feature_names=train.feature_names)
    if kind == "lube":
        anneal = {**base.lube_anneal, **params.get("anneal", {}), "seed": seed}
        return lube_train(train.X, train.y, width=params.get("width", base.lube_width),
                          mu_conf=params.get("mu_conf", base.lube_mu_conf),
                          eta_pen=params.get("eta_pen", base.lube_eta_pen),
                          schedule=AnnealSchedule(**anneal),
                          max_rows=params.get("max_rows", base.lube_max_rows),
                          feature_names=train.feature_names)
    raise ValueError(f"unknown model kind {kind!r}")


# ----------------------------------------------------------------------------
# grid search


def canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)


def config_hash(obj) -> str:
    return hashlib.sha256(canonical(obj).encode()).hexdigest()[:16]


def derive_seed(seed: int, *keys) -> int:
    """Independent child seed for a named sub-task, stable under reordering of tasks."""
    digest = hashlib.sha256(canonical(list(keys)).encode()).digest()
    words = [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]
    return int(np.random.SeedSequence([int(seed), *words]).generate_state(1)[0])


def grid_cells(grid: dict) -> list[dict]:
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise ValueError("grid must list at least one value per hyperparameter")
    keys = list(grid)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]


@dataclass
class CellResult:
    kind: str
    params: dict
    seed: int
    objective: float  # mean CRPS, or mean evaluation CWC for LUBE; inf on failure
    train_seconds: float
    reports: list = field(default_factory=list)  # per-split flat metric dicts
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def row(self) -> dict:
        out = {"kind": self.kind, **{f"param_{k}": v for k, v in self.params.items()},
               "seed": self.seed, "objective": self.objective, "train_seconds": self.train_seconds,
               "status": "ok" if self.ok else "failed", "error": self.error or ""}
        if self.reports:
            keys = [k for k in self.reports[0] if k != "n_samples"]
            for k in keys:
                vals = [r.get(k) for r in self.reports]
                if all(isinstance(v, (int, float)) and v is not None for v in vals):
                    out[f"mean_{k}"] = float(np.mean(vals))
        return out


def _objective(kind, fs: ForecastSeries, rep: EvalReport, params, base: BaselineSettings) -> float:
    if kind == "lube":
        return lube_eval_cwc(fs, params.get("mu_conf", base.lube_mu_conf), params.get("eta_pen", base.lube_eta_pen))
    return float(rep.mean_crps)


def run_cell(exp: Experiment, kind: str, params: dict, seed: int,
             base: BaselineSettings = BaselineSettings()) -> CellResult:
    cell_seed = derive_seed(seed, kind, params)
    seconds = 0.0
    reports, objs = [], []
    try:
        for i in range(len(exp.specs)):
            train, _ = exp.split(i)
            t0 = time.perf_counter()
            model = fit_model(kind, params, train, derive_seed(cell_seed, "split", i), base)
            seconds += time.perf_counter() - t0
            fs = exp.forecast(model, i)
            rep = forecast_report(fs)
            if rep is None:
                raise DataError(f"split {i}: no realized values to score")
            objs.append(_objective(kind, fs, rep, params, base))
            row = rep.flat()
            if kind == "lube":
                row["cwc"] = objs[-1]
            reports.append(row)
    except (DataError, NumericalError, ValueError, np.linalg.LinAlgError) as exc:
        return CellResult(kind, dict(params), cell_seed, math.inf, seconds / max(len(reports), 1),
                          reports, f"{type(exc).__name__}: {exc}")
    obj = float(np.mean(objs))
    if not math.isfinite(obj):
        return CellResult(kind, dict(params), cell_seed, math.inf, seconds / len(objs), reports,
                          "non-finite objective")
    return CellResult(kind, dict(params), cell_seed, obj, seconds / len(objs), reports)


def rank(results: list[CellResult]) -> list[CellResult]:
    """Stable sort by objective, then by shorter mean training time.

    Failed cells go last in their original order, so their placement does not
    depend on timing noise.
    """
    return sorted(results, key=lambda r: (r.objective, r.train_seconds if r.ok else 0.0))


def grid_search(exp: Experiment, kind: str, grid: dict | None = None, seed: int = 0,
                base: BaselineSettings = BaselineSettings(), n_jobs: int = 1, order=None) -> list[CellResult]:
    """Train and score every grid cell on every split; returns the ranked leaderboard.

    Each cell draws its seed from the run seed and its own parameters, so
    results do not depend on ``order`` or on how cells are spread over workers.
    """
    if kind not in GRIDS:
        raise ValueError(f"no grid for model kind {kind!r}")
    cells = grid_cells(GRIDS[kind] if grid is None else grid)
    if order is not None:
        cells = [cells[i] for i in order]
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            futures = [pool.submit(run_cell, exp, kind, c, seed, base) for c in cells]
            results = [f.result() for f in futures]
    else:
        results = [run_cell(exp, kind, c, seed, base) for c in cells]
    return rank(results)


# ----------------------------------------------------------------------------
# pruning


@dataclass
class PruneResult:
    kept: tuple
    dropped: tuple
    share: dict  # feature -> combined mean |phi| share
    model: NgbModel
    before: EvalReport
    after: EvalReport

    def table(self) -> list[dict]:
        """Before/after rows with MAE, RMSE, MBE, PICP, PINAW and CRPS."""
        return [{"model": "all features", **self.before.flat()},
                {"model": "pruned features", **self.after.flat()}]


def feature_shares(model: NgbModel, X) -> dict:
    """Share of total mean |phi| per feature, summing the location and scale heads."""
    total = np.zeros(model.n_features)
    for head in ("mu", "scale"):
        _, phi = shap_values_batch(model, X, head)
        total += np.mean(np.abs(phi), axis=0)
    denom = total.sum()
    share = total / denom if denom > 0 else np.zeros_like(total)
    return dict(zip(model.feature_names, share.tolist()))


def direct_report(model, test: Dataset) -> EvalReport:
    """Scores with realized lag inputs (one-step-ahead)."""
    kind = model_kind(model)
    if kind == "lube":
        lo, hi = model.bounds(test.X)
        return evaluate(test.y, intervals={coverage_label(model.mu_conf): (lo, hi)})
    params = model.predict(test.X)
    bands = {coverage_label(c): dists.interval_for_coverage(params, c) for c in SIGMA_COVERAGES}
    return evaluate(test.y, params=params, intervals=bands, k_sigmas=())


def prune_and_retrain(model: NgbModel, train: Dataset, threshold: float = 0.02, test: Dataset | None = None,
                      report=None, explain_rows: int | None = 2000, seed: int = 0) -> PruneResult:
    """Drop features whose combined mean |phi| share is below ``threshold``, then refit.

    ``report`` maps a model to an EvalReport; by default it scores ``test``
    directly. The explained rows are a seeded subsample of ``train``.
    """
    if report is None:
        if test is None:
            raise ValueError("need a test set or a report function")
        report = lambda m: direct_report(m, test.select(m.feature_names))
    X = train.select(model.feature_names).X
    if explain_rows is not None and len(X) > explain_rows:
        rng = np.random.default_rng(derive_seed(seed, "prune-explain"))
        X = X[np.sort(rng.choice(len(X), explain_rows, replace=False))]
    share = feature_shares(model, X)
    kept = tuple(n for n in model.feature_names if share[n] >= threshold)
    dropped = tuple(n for n in model.feature_names if share[n] < threshold)
    if not kept:
        raise ValueError(f"threshold {threshold} would prune every feature")
    before = report(model)
    if dropped:
        reduced = train.select(kept)
        new = fit(reduced.X, reduced.y, model.config, kept, reduced.scaling)
        after = report(new)
    else:
        new, after = model, before
    return PruneResult(kept, dropped, share, new, before, after)


# ----------------------------------------------------------------------------
# benchmark


DEFAULT_TEST_MONTHS = ("2019-01", "2019-04", "2019-07", "2019-10")


@dataclass(eq=False)
class BenchResult:
    seed: int
    months: tuple
    rows: list  # per (model, split) metric dicts
    seeds: dict  # model kind -> per-split seeds

    def means(self) -> dict:
        out = {}
        for kind in dict.fromkeys(r["model"] for r in self.rows):
            rows = [r for r in self.rows if r["model"] == kind]
            agg = {}
            for k in ("mae", "rmse", "mbe", "crps", "cwc"):
                vals = [r.get(k) for r in rows]
                if all(v is not None for v in vals):
                    agg[k] = float(np.mean(vals))
            out[kind] = agg
        return out

    def checks(self) -> dict:
        m = self.means()
        ngb, per, gp = m.get("ngboost", {}), m.get("persistence", {}), m.get("gp", {})
        out = {}
        if "mae" in ngb and "mae" in per:
            out["ngboost_mae_below_persistence"] = bool(ngb["mae"] < per["mae"])
        if "crps" in ngb and "crps" in gp:
            out["ngboost_crps_below_gp"] = bool(ngb["crps"] < gp["crps"])
        return out

    def to_dict(self) -> dict:
        return {"seed": self.seed, "test_months": list(self.months), "seeds": self.seeds,
                "rows": self.rows, "means": self.means(), "checks": self.checks()}


def benchmark(exp: Experiment, seed: int, ngb: NgbConfig = NgbConfig(), base: BaselineSettings = BaselineSettings(),
              kinds=MODEL_KINDS, log=None) -> BenchResult:
    """Train every model kind on every split and score its day-ahead forecasts."""
    rows = []
    seeds = {k: [] for k in kinds}
    months = tuple(str(s.test_start.astype("datetime64[M]")) for s in exp.specs)
    for i in range(len(exp.specs)):
        train, _ = exp.split(i)
        for kind in kinds:
            s = derive_seed(seed, "bench", kind, i)
            seeds[kind].append(s)
            t0 = time.perf_counter()
            if kind == "persistence":
                model = "persistence"
            elif kind == "ngboost":
                model = fit(train.X, train.y, ngb, train.feature_names, train.scaling)
            else:
                model = fit_model(kind, {}, train, s, base)
            seconds = time.perf_counter() - t0
            fs = exp.forecast(model, i)
            rep = forecast_report(fs)
            row = {"model": kind, "split": i, "test_month": months[i], "seed": s,
                   "train_seconds": seconds, **rep.flat()}
            if kind == "lube":
                row["cwc"] = lube_eval_cwc(fs, base.lube_mu_conf, base.lube_eta_pen)
            rows.append(row)
            if log:
                log(f"split {months[i]} {kind}: mae={row['mae']} crps={row['crps']} ({seconds:.1f}s)")
    return BenchResult(seed, months, rows, seeds)


def benchmark_specs(test_months=DEFAULT_TEST_MONTHS, train_months: int = 12) -> list[SplitSpec]:
    return seasonal_specs(test_months, train_months)
