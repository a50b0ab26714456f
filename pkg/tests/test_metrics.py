import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from ngbforecast import dists
from ngbforecast.dists import DistParams
from ngbforecast.metrics import (EvalReport, coverage_label, crps_mean, evaluate, interval_metrics,
                                 pit_histogram, pit_values, point_metrics, write_pit_csv, write_reports_csv)

finite = st.floats(-1e3, 1e3, allow_nan=False)


def test_point_metrics_examples():
    assert point_metrics([1.0, 2.0], [1.0, 2.0]) == (0.0, 0.0, 0.0)
    mae, rmse, mbe = point_metrics([1.0, 3.0], [0.0, 0.0])
    assert mae == 2.0 and rmse == pytest.approx(math.sqrt(5), abs=1e-15) and mbe == 2.0
    assert rmse == pytest.approx(2.2360680, abs=1e-7)


def test_bias_shift():
    actual = np.array([0.5, 0.25, 2.0, 8.0])
    assert point_metrics(actual + 0.25, actual)[2] == 0.25


def test_point_metrics_errors():
    with pytest.raises(ValueError):
        point_metrics([1.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        point_metrics([], [])


@given(st.integers(1, 40).flatmap(lambda n: st.tuples(hnp.arrays(float, n, elements=finite),
                                                       hnp.arrays(float, n, elements=finite))))
def test_rmse_at_least_mae(pair):
    mae, rmse, _ = point_metrics(*pair)
    assert rmse >= mae - 1e-9 * max(1.0, mae)


def test_interval_examples():
    y = np.array([0.1, 0.5, 0.9])
    assert interval_metrics(y, y, y, 1.0) == (1.0, 0.0)
    assert interval_metrics(np.zeros(3), np.full(3, 2.0), y * 2, 2.0) == (1.0, 1.0)
    # observations on a bound count as covered
    picp, _ = interval_metrics(np.array([0.0, 1.0]), np.array([1.0, 2.0]), np.array([1.0, 2.0]), 2.0)
    assert picp == 1.0


def test_interval_errors():
    with pytest.raises(ValueError):
        interval_metrics([0.0], [1.0], [0.5], 0.0)
    with pytest.raises(ValueError):
        interval_metrics([1.0], [0.0], [0.5], 1.0)


@given(st.integers(1, 30).flatmap(lambda n: st.tuples(
    hnp.arrays(float, n, elements=st.floats(-10, 10)), hnp.arrays(float, n, elements=st.floats(0, 5)),
    hnp.arrays(float, n, elements=st.floats(-12, 12)))), st.floats(0.1, 10), st.floats(-5, 5))
@settings(max_examples=60)
def test_interval_affine_invariance(args, a, b):
    lo, width, y = args
    hi = lo + width
    # dyadic values keep the affine map exact, so coverage cannot flip on rounding
    lo, hi, y = (np.round(v * 8) / 8 for v in (lo, hi, y))
    a, b = 2.0 ** round(math.log2(a)), round(b * 8) / 8
    p1, w1 = interval_metrics(lo, hi, y, 3.0)
    p2, w2 = interval_metrics(a * lo + b, a * hi + b, a * y + b, a * 3.0)
    assert p1 == p2
    assert w2 == pytest.approx(w1, rel=1e-12, abs=1e-15)


def test_widening_never_hurts_coverage():
    rng = np.random.default_rng(0)
    y = rng.normal(size=200)
    lo, hi = y - rng.uniform(-1, 1, 200) - 0.5, y + rng.uniform(-1, 1, 200) + 0.5
    hi = np.maximum(hi, lo)
    p1, w1 = interval_metrics(lo, hi, y, 1.0)
    p2, w2 = interval_metrics(lo - 0.1, hi + 0.1, y, 1.0)
    assert p2 >= p1 and w2 > w1


def test_crps_mean_values():
    p = DistParams.from_scale("normal", np.zeros(3), np.ones(3))
    assert crps_mean(p, np.zeros(3)) == pytest.approx(0.2336950, abs=1e-6)
    tight = DistParams.from_scale("normal", np.array([1.0, 2.0]), np.full(2, 1e-10))
    assert crps_mean(tight, [1.0, 2.0]) < 1e-9


def test_pit_well_specified():
    rng = np.random.default_rng(0)
    loc = rng.normal(size=10_000)
    scale = rng.uniform(0.5, 2, 10_000)
    p = DistParams.from_scale("normal", loc, scale)
    y = dists.sample(p, rng)
    h = pit_histogram(p, y, bins=10)
    assert h.max_deviation() < 0.02
    assert h.density.sum() == pytest.approx(1.0)


def test_pit_shapes():
    rng = np.random.default_rng(1)
    y = rng.normal(size=5000)
    wide = pit_histogram(DistParams.from_scale("normal", np.zeros(5000), np.full(5000, 10.0)), y, 10)
    assert wide.density[4] + wide.density[5] > 0.5  # hump
    tight = pit_histogram(DistParams.from_scale("normal", np.zeros(5000), np.full(5000, 0.01)), y, 10)
    assert tight.density[0] + tight.density[-1] > 0.9  # U shape


@given(hnp.arrays(float, 20, elements=st.floats(-1e6, 1e6)))
def test_pit_in_unit_interval(y):
    for fam in ("normal", "laplace"):
        v = pit_values(DistParams.from_scale(fam, np.zeros(20), np.full(20, 0.3)), y)
        assert np.all((v >= 0) & (v <= 1))


def test_evaluate_full_report():
    rng = np.random.default_rng(2)
    y = rng.uniform(0, 1, 500)
    p = DistParams.from_scale("normal", y + rng.normal(0, 0.05, 500), np.full(500, 0.05))
    rep = evaluate(y, params=p)
    assert set(rep.picp) == {"68.27", "95.45", "99.73"}
    assert rep.picp["68.27"] <= rep.picp["95.45"] <= rep.picp["99.73"]
    assert rep.mae is not None and rep.mean_crps is not None and len(rep.pit_density) == 20
    d = json.loads(rep.to_json(run="x"))
    assert d["run"] == "x" and d["n_samples"] == 500


def test_evaluate_interval_only():
    y = np.array([0.0, 1.0, 2.0])
    rep = evaluate(y, intervals={"95.00": (y - 1, y + 1)})
    assert rep.mae is None and rep.mean_crps is None
    assert rep.picp == {"95.00": 1.0} and rep.pinaw["95.00"] == 1.0


def test_coverage_label():
    assert coverage_label(dists.sigma_coverage(2)) == "95.45"
    assert coverage_label(0.95) == "95.00"


def test_writers(tmp_path):
    rng = np.random.default_rng(3)
    p = DistParams.from_scale("normal", np.zeros(100), np.ones(100))
    h = pit_histogram(p, rng.normal(size=100), 5)
    write_pit_csv(h, tmp_path / "pit.csv")
    lines = (tmp_path / "pit.csv").read_text().splitlines()
    assert lines[0] == "bin_left,bin_right,density" and len(lines) == 6
    write_reports_csv([EvalReport(3, mae=1.0).flat(), {"n_samples": 4, "extra": 2}], tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0].endswith(",extra") and len(lines) == 3
