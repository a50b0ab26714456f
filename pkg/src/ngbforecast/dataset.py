"""Raw power/weather series ingestion and model-ready feature matrices."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError

STEP = np.timedelta64(15, "m")
WEATHER_COLUMNS = ("temperature", "humidity", "precipitation", "wind_speed", "radiation")
CSV_COLUMNS = ("timestamp", "power") + WEATHER_COLUMNS
DAY_START_HOUR = 6
DAY_END_HOUR = 22
SCALE_HEADROOM = 0.05


def lag_name(steps: int, step_minutes: int = 15) -> str:
    return f"t-{steps * step_minutes}"


@dataclass(frozen=True, eq=False)
class RawSeries:
    timestamps: np.ndarray  # datetime64[m]
    power: np.ndarray
    weather: dict = field(default_factory=dict)

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype="datetime64[m]")
        power = np.asarray(self.power, dtype=float)
        if len(ts) != len(power):
            raise DataError("timestamps and power differ in length")
        if len(ts) > 1 and not np.all(ts[1:] > ts[:-1]):
            raise DataError("timestamps must be strictly increasing (no duplicates)")
        weather = {}
        for name, col in self.weather.items():
            col = np.asarray(col, dtype=float)
            if len(col) != len(power):
                raise DataError(f"weather column {name!r} has {len(col)} rows, expected {len(power)}")
            weather[name] = col
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "power", power)
        object.__setattr__(self, "weather", weather)

    def __len__(self):
        return len(self.power)

    def take(self, idx) -> "RawSeries":
        return RawSeries(self.timestamps[idx], self.power[idx], {k: v[idx] for k, v in self.weather.items()})

    def between(self, start, end) -> "RawSeries":
        """Rows with start <= timestamp < end."""
        start, end = np.datetime64(start, "m"), np.datetime64(end, "m")
        return self.take((self.timestamps >= start) & (self.timestamps < end))

    def index_of(self, when) -> np.ndarray:
        """Row index of each timestamp in ``when``; -1 where absent."""
        when = np.asarray(when, dtype="datetime64[m]")
        pos = np.searchsorted(self.timestamps, when)
        pos_c = np.minimum(pos, max(len(self) - 1, 0))
        found = (pos < len(self)) & (self.timestamps[pos_c] == when) if len(self) else np.zeros(when.shape, bool)
        return np.where(found, pos_c, -1)


@dataclass(frozen=True, eq=False)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    feature_names: tuple
    nominal_power: float = 1.0
    timestamps: np.ndarray | None = None
    scaled: bool = False
    power_features: tuple = ()  # features expressed in power units (scaled with y)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if X.ndim != 2 or X.shape[0] != len(y) or X.shape[1] != len(self.feature_names):
            raise DataError(f"inconsistent dataset shapes X{X.shape}, y{y.shape}, {len(self.feature_names)} names")
        if np.isnan(X).any() or np.isnan(y).any():
            raise DataError("dataset contains NaN entries")
        if not self.nominal_power > 0:
            raise DataError("nominal_power must be positive")
        if self.scaled and len(y) and (y.min() < 0 or y.max() > 1 + SCALE_HEADROOM):
            raise DataError("scaled targets fall outside [0, 1.05]")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        if self.timestamps is not None:
            object.__setattr__(self, "timestamps", np.asarray(self.timestamps, dtype="datetime64[m]"))

    def __len__(self):
        return len(self.y)

    @property
    def scaling(self) -> dict:
        return {"nominal_power": float(self.nominal_power), "scaled": bool(self.scaled),
                "power_features": list(self.power_features)}

    def rows(self, idx) -> "Dataset":
        ts = None if self.timestamps is None else self.timestamps[idx]
        return Dataset(self.X[idx], self.y[idx], self.feature_names, self.nominal_power, ts,
                       self.scaled, self.power_features)

    def select(self, names) -> "Dataset":
        idx = [self.feature_names.index(n) for n in names]
        return Dataset(self.X[:, idx], self.y, tuple(names), self.nominal_power, self.timestamps,
                       self.scaled, tuple(n for n in self.power_features if n in names))

    def with_features(self, names, columns) -> "Dataset":
        cols = np.column_stack([np.asarray(c, dtype=float) for c in columns])
        return Dataset(np.hstack([self.X, cols]), self.y, self.feature_names + tuple(names),
                       self.nominal_power, self.timestamps, self.scaled, self.power_features)

    def unscale(self, values):
        return np.asarray(values, dtype=float) * self.nominal_power if self.scaled else np.asarray(values)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            head = ["timestamp"] if self.timestamps is not None else []
            w.writerow(head + list(self.feature_names) + ["target"])
            for i in range(len(self)):
                lead = [str(self.timestamps[i])] if self.timestamps is not None else []
                w.writerow(lead + [repr(float(v)) for v in self.X[i]] + [repr(float(self.y[i]))])


def encode_month(month: int) -> tuple[float, float]:
    if not 1 <= int(month) <= 12 or int(month) != month:
        raise ValueError(f"month must be an integer in 1..12, got {month}")
    angle = 2.0 * math.pi * month / 12.0
    return math.sin(angle), math.cos(angle)


def _months(ts: np.ndarray) -> np.ndarray:
    return ts.astype("datetime64[M]").astype(int) % 12 + 1


def fractional_hour(ts: np.ndarray) -> np.ndarray:
    minutes = (ts - ts.astype("datetime64[D]")).astype("timedelta64[m]").astype(int)
    return minutes / 60.0


def is_day(ts, start_hour=DAY_START_HOUR, end_hour=DAY_END_HOUR) -> np.ndarray:
    h = fractional_hour(np.asarray(ts, dtype="datetime64[m]"))
    return (h >= start_hour) & (h < end_hour)


def filter_night_hours(series: RawSeries, start_hour=DAY_START_HOUR, end_hour=DAY_END_HOUR) -> RawSeries:
    """Keep rows whose time of day lies in [start_hour, end_hour)."""
    return series.take(is_day(series.timestamps, start_hour, end_hour))


def calendar_features(ts) -> dict:
    ts = np.asarray(ts, dtype="datetime64[m]")
    angle = 2.0 * np.pi * _months(ts) / 12.0
    return {"month_sin": np.sin(angle), "month_cos": np.cos(angle), "hour": fractional_hour(ts)}


def feature_columns(weather_names, lags, step_minutes=15) -> tuple:
    return tuple(weather_names) + ("month_sin", "month_cos", "hour") + tuple(lag_name(l, step_minutes) for l in lags)


def assemble(ts, weather: dict, lag_values: np.ndarray, lags, step_minutes=15) -> tuple[np.ndarray, tuple]:
    """Feature matrix in canonical column order from its parts.

    ``lag_values`` has one column per lag, in the order of ``lags``.
    """
    names = feature_columns(weather.keys(), lags, step_minutes)
    cal = calendar_features(ts)
    cols = list(weather.values()) + [cal["month_sin"], cal["month_cos"], cal["hour"]]
    lag_values = np.asarray(lag_values, dtype=float).reshape(len(cal["hour"]), len(lags))
    X = np.column_stack(cols + [lag_values[:, j] for j in range(len(lags))])
    return X, names


def build_lagged(series: RawSeries, lags=(1, 2, 3), nominal_power=None, step_minutes=15,
                 weather_names=None) -> Dataset:
    """Dataset with lagged power, calendar and weather features; target is current power.

    A row survives only if every lag timestamp exists in ``series`` (so lags
    never bridge gaps or filtered night hours) and no feature is missing.
    ``nominal_power`` scales the target and lag columns to per-unit values.
    """
    lags = tuple(int(l) for l in lags)
    if not lags or min(lags) < 1:
        raise ValueError("lags must be a non-empty list of positive step counts")
    step = np.timedelta64(step_minutes, "m")
    ts = series.timestamps
    src = np.stack([series.index_of(ts - l * step) for l in lags], axis=1)
    ok = (src >= 0).all(axis=1)
    names = tuple(weather_names) if weather_names is not None else tuple(series.weather)
    weather = {n: series.weather[n] for n in names}
    lag_vals = np.where(src >= 0, series.power[np.maximum(src, 0)], np.nan)
    X, fnames = assemble(ts, weather, lag_vals, lags, step_minutes)
    y = series.power
    ok &= ~np.isnan(X).any(axis=1) & ~np.isnan(y)
    if not ok.any():
        raise DataError("no rows left after lag construction")
    X, y, ts = X[ok], y[ok], ts[ok]
    power_feats = tuple(lag_name(l, step_minutes) for l in lags)
    scaled = nominal_power is not None
    if scaled:
        if not nominal_power > 0:
            raise DataError("nominal_power must be positive")
        y = y / nominal_power
        for n in power_feats:
            X[:, fnames.index(n)] /= nominal_power
    else:
        nominal_power = float(max(np.max(np.abs(series.power)), 1e-12))
    return Dataset(X, y, fnames, float(nominal_power), ts, scaled, power_feats)


def pearson_matrix(data: Dataset):
    """Pearson correlations among features and the target.

    Returns ``(matrix, names, constant)``; constant columns get correlation 0
    with everything else and are flagged in ``constant``. Sums run over
    sorted values so the result does not depend on row order.
    """
    if len(data) < 2:
        raise DataError("need at least two rows for correlations")
    cols = np.column_stack([data.X, data.y])
    names = data.feature_names + ("target",)
    n = len(cols)
    centered = cols - np.array([np.sort(c).sum() / n for c in cols.T])
    ss = np.array([np.sort(c * c).sum() for c in centered.T])
    constant = ss == 0
    k = cols.shape[1]
    R = np.eye(k)
    for a in range(k):
        for b in range(a + 1, k):
            if constant[a] or constant[b]:
                r = 0.0
            else:
                r = np.sort(centered[:, a] * centered[:, b]).sum() / math.sqrt(ss[a] * ss[b])
                r = min(1.0, max(-1.0, r))
            R[a, b] = R[b, a] = r
    return R, names, constant


@dataclass(frozen=True)
class SplitSpec:
    """Half-open train and test timestamp ranges."""

    train_start: np.datetime64
    train_end: np.datetime64
    test_start: np.datetime64
    test_end: np.datetime64

    def __post_init__(self):
        for name in ("train_start", "train_end", "test_start", "test_end"):
            object.__setattr__(self, name, np.datetime64(getattr(self, name), "m"))
        if not self.train_start < self.train_end <= self.test_start < self.test_end:
            raise DataError("split ranges must be ordered: train before test, no overlap")

    def to_dict(self) -> dict:
        return {k: str(getattr(self, k)) for k in ("train_start", "train_end", "test_start", "test_end")}


def seasonal_specs(test_months, train_months=12) -> list[SplitSpec]:
    """One split per test month (``"YYYY-MM"``) trained on the preceding ``train_months`` months."""
    specs = []
    for m in test_months:
        start = np.datetime64(m, "M")
        specs.append(SplitSpec(start - train_months, start, start, start + 1))
    return specs


def sliding_splits(data: Dataset, specs) -> list[tuple[Dataset, Dataset]]:
    if data.timestamps is None:
        raise DataError("dataset has no timestamps to split on")
    out = []
    ts = data.timestamps
    for spec in specs:
        tr = (ts >= spec.train_start) & (ts < spec.train_end)
        te = (ts >= spec.test_start) & (ts < spec.test_end)
        if not tr.any() or not te.any():
            raise DataError(f"empty train or test set for split {spec.to_dict()}")
        out.append((data.rows(tr), data.rows(te)))
    return out


def read_csv(path) -> RawSeries:
    """Load the fixed ``timestamp,power,<weather>`` schema; extra columns are kept as weather."""
    with open(path, newline="") as fh:
        reader = csv.reader(line for line in fh if not line.startswith("#"))
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        missing = [c for c in CSV_COLUMNS if c not in header]
        if missing:
            raise DataError(f"{path}: missing columns {missing}")
        rows = list(reader)
    ts_i = header.index("timestamp")
    try:
        ts = np.array([r[ts_i].strip() for r in rows], dtype="datetime64[m]")
        data = {
            name: np.array([float(r[i]) if r[i].strip() else np.nan for r in rows])
            for i, name in enumerate(header) if name != "timestamp"
        }
    except (ValueError, IndexError) as exc:
        raise DataError(f"{path}: malformed row ({exc})") from None
    power = data.pop("power")
    ordered = {n: data.pop(n) for n in WEATHER_COLUMNS}
    ordered.update(data)
    return RawSeries(ts, power, ordered)


def write_csv(series: RawSeries, path) -> None:
    names = list(series.weather)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", "power"] + names)
        for i in range(len(series)):
            stamp = np.datetime_as_string(series.timestamps[i], unit="m")
            w.writerow([stamp, repr(float(series.power[i]))] + [repr(float(series.weather[n][i])) for n in names])


def load_dataset(path, lags=(1, 2, 3), nominal_power=None, filter_night=True) -> Dataset:
    series = read_csv(Path(path))
    if filter_night:
        series = filter_night_hours(series)
    return build_lagged(series, lags, nominal_power)
