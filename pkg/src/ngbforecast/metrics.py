"""Point, interval and distributional forecast scores."""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import dists
from .dists import DistParams

SIGMA_LEVELS = (1.0, 2.0, 3.0)


def point_metrics(pred, actual):
    """(MAE, RMSE, MBE) with error = prediction - actual."""
    pred = np.asarray(pred, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if pred.shape != actual.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {actual.shape}")
    if pred.size == 0:
        raise ValueError("need at least one sample")
    err = pred - actual
    return float(np.mean(np.abs(err))), float(np.sqrt(np.mean(err * err))), float(np.mean(err))


def interval_metrics(lower, upper, actual, R):
    """(PICP, PINAW); an observation on either bound counts as covered."""
    lower, upper, actual = (np.asarray(a, dtype=float) for a in (lower, upper, actual))
    if not R > 0:
        raise ValueError("normalizing range R must be positive")
    if np.any(upper < lower):
        raise ValueError("upper bound below lower bound")
    covered = (actual >= lower) & (actual <= upper)
    return float(np.mean(covered)), float(np.mean(upper - lower) / R)


def crps_mean(params: DistParams, actual) -> float:
    return float(np.mean(dists.crps(params, np.asarray(actual, dtype=float))))


def pit_values(params: DistParams, actual) -> np.ndarray:
    return np.clip(dists.cdf(params, np.asarray(actual, dtype=float)), 0.0, 1.0)


@dataclass(frozen=True)
class PitHistogram:
    edges: np.ndarray
    density: np.ndarray  # bin fractions, summing to 1

    def max_deviation(self) -> float:
        return float(np.max(np.abs(self.density - 1.0 / len(self.density))))

    def rows(self):
        return [(float(self.edges[i]), float(self.edges[i + 1]), float(self.density[i]))
                for i in range(len(self.density))]


def pit_histogram(params: DistParams, actual, bins: int = 20) -> PitHistogram:
    if bins < 2:
        raise ValueError("need at least two bins")
    pit = pit_values(params, actual)
    counts, edges = np.histogram(pit, bins=bins, range=(0.0, 1.0))
    return PitHistogram(edges, counts / max(len(pit), 1))


@dataclass
class EvalReport:
    n_samples: int
    mae: float | None = None
    rmse: float | None = None
    mbe: float | None = None
    picp: dict = field(default_factory=dict)  # coverage label -> PICP
    pinaw: dict = field(default_factory=dict)
    mean_crps: float | None = None
    pit_edges: list | None = None
    pit_density: list | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, **extra) -> str:
        return json.dumps({**extra, **self.to_dict()}, indent=2, sort_keys=True)

    def flat(self) -> dict:
        row = {"n_samples": self.n_samples, "mae": self.mae, "rmse": self.rmse, "mbe": self.mbe,
               "crps": self.mean_crps}
        for k, v in self.picp.items():
            row[f"picp_{k}"] = v
        for k, v in self.pinaw.items():
            row[f"pinaw_{k}"] = v
        return row


def coverage_label(coverage: float) -> str:
    return f"{100.0 * coverage:.2f}"


def evaluate(actual, *, point=None, params: DistParams | None = None, intervals=None,
             R=None, k_sigmas=SIGMA_LEVELS, pit_bins: int = 20) -> EvalReport:
    """Assemble every metric the inputs allow.

    ``intervals`` maps a coverage label to ``(lower, upper)`` arrays; when a
    predictive distribution is given, its k-sigma intervals are added. Models
    that only emit intervals simply omit ``point`` and ``params``.
    """
    actual = np.asarray(actual, dtype=float)
    R = float(np.max(actual)) if R is None else float(R)
    rep = EvalReport(n_samples=len(actual))
    if point is None and params is not None:
        point = params.loc
    if point is not None:
        rep.mae, rep.rmse, rep.mbe = point_metrics(np.broadcast_to(point, actual.shape), actual)
    bands = dict(intervals or {})
    if params is not None:
        for k in k_sigmas:
            lo, hi = dists.interval(params, k)
            bands[coverage_label(dists.sigma_coverage(k))] = (lo, hi)
        rep.mean_crps = crps_mean(params, actual)
        hist = pit_histogram(params, actual, pit_bins)
        rep.pit_edges = hist.edges.tolist()
        rep.pit_density = hist.density.tolist()
    if R > 0:
        for label, (lo, hi) in bands.items():
            lo = np.broadcast_to(lo, actual.shape)
            hi = np.broadcast_to(hi, actual.shape)
            rep.picp[label], rep.pinaw[label] = interval_metrics(lo, hi, actual, R)
    return rep


def write_pit_csv(hist: PitHistogram, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_left", "bin_right", "density"])
        for row in hist.rows():
            w.writerow([repr(v) for v in row])


def write_reports_csv(rows: list[dict], path) -> None:
    keys = []
    for r in rows:
        keys += [k for k in r if k not in keys]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if r.get(k) is None else r.get(k)) for k in keys})
