import json
import shutil
from pathlib import Path

import numpy as np
import pytest
import yaml

from ngbforecast.baselines import load_model
from ngbforecast.cli import main
from ngbforecast.dataset import write_csv
from ngbforecast.synthetic import SyntheticSpec, generate_synthetic

TIMING_FILES = {"timings.csv", "bench_timings.csv"}


def _config(tmp_path, **extra):
    cfg = {
        "seed": 5,
        "out_dir": str(tmp_path / "run"),
        "synthetic": {"days": 66, "start": "2019-01-01"},
        "ngboost": {"n_stages": 20, "learning_rate": 0.1},
        "splits": {"test_months": ["2019-03"], "train_months": 2},
        "baselines": {"gp_steps": 5, "gp_max_rows": 200, "lube_anneal": {"max_iters": 300}},
        "grid": {"ngboost": {"max_depth": [2, 3], "n_stages": [10]}},
        "explain": {"rows": 4, "interactions": True},
        "prune": {"threshold": 0.02, "explain_rows": 200},
    }
    cfg.update(extra)
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump(cfg))
    return path, Path(cfg["out_dir"])


def _snapshot(root):
    return {p.name: p.read_bytes() for p in sorted(root.iterdir()) if p.name not in TIMING_FILES}


COMMANDS = ["generate", "train", "forecast", "evaluate", "explain", "grid", "prune", "bench"]


def _run_all(cfg):
    for cmd in COMMANDS:
        assert main([cmd, "--config", str(cfg)]) == 0, cmd


def test_rerun_is_byte_identical(tmp_path):
    cfg, out = _config(tmp_path)
    _run_all(cfg)
    first = _snapshot(out)
    assert {"series.csv", "model.json", "forecasts.csv", "report.json", "report.csv", "report_pit.csv",
            "shap_mu.csv", "shap_scale.csv", "interactions_mu.csv", "leaderboard.csv", "prune_table.csv",
            "pruned_model.json", "bench.csv", "bench.json", "config.json"} <= set(first)
    shutil.rmtree(out)
    _run_all(cfg)
    assert _snapshot(out) == first


def test_every_file_carries_hash_and_seed(tmp_path):
    cfg, out = _config(tmp_path)
    for cmd in ("generate", "train", "forecast", "explain", "grid"):
        assert main([cmd, "--config", str(cfg)]) == 0
    digest = json.loads((out / "config.json").read_text())["config_hash"]
    for p in out.iterdir():
        text = p.read_text()
        if p.suffix == ".csv":
            assert text.startswith(f"# config_hash={digest} seed=5\n"), p.name
        else:
            d = json.loads(text)
            assert d["config_hash"] == digest and d["seed"] == 5, p.name


def test_forecast_rows_match_test_slots(tmp_path):
    cfg, out = _config(tmp_path)
    assert main(["train", "--config", str(cfg)]) == 0
    assert main(["forecast", "--config", str(cfg), "--coverage", "68,95"]) == 0
    lines = [l for l in (out / "forecasts.csv").read_text().splitlines() if not l.startswith("#")]
    days = 66 - 59  # March 1st to 7th
    assert len(lines) - 1 == 64 * days
    assert "lower_68.00" in lines[0] and "upper_95.00" in lines[0]


def test_missing_realized_omits_metrics(tmp_path):
    train_cfg, trained = _config(tmp_path)
    assert main(["train", "--config", str(train_cfg)]) == 0
    # tomorrow's weather forecast is known, its power is not
    s = generate_synthetic(SyntheticSpec(days=60, start="2019-01-01", seed=2))
    s.power[s.timestamps >= np.datetime64("2019-03-01T00:00")] = np.nan
    write_csv(s, tmp_path / "series.csv")
    cfg, out = _config(tmp_path, data=str(tmp_path / "series.csv"), nominal_power=3.2, synthetic={},
                       out_dir=str(tmp_path / "fc"))
    model = str(trained / "model.json")
    assert main(["forecast", "--config", str(cfg), "--model", model]) == 0
    lines = [l for l in (out / "forecasts.csv").read_text().splitlines() if not l.startswith("#")]
    assert len(lines) - 1 == 64
    assert lines[1].endswith(",")  # empty realized column
    assert not (out / "report.json").exists()
    assert main(["evaluate", "--config", str(cfg), "--model", model]) == 2


def test_model_round_trip_through_cli(tmp_path):
    cfg, out = _config(tmp_path)
    assert main(["train", "--config", str(cfg)]) == 0
    m = load_model(out / "model.json")
    X = np.random.default_rng(0).uniform(0, 1, size=(20, m.n_features))
    again = load_model(out / "model.json")
    np.testing.assert_allclose(again.theta(X), m.theta(X), atol=1e-12, rtol=0)


@pytest.mark.parametrize("kind", ["gp", "lube", "persistence"])
def test_baseline_kinds(tmp_path, kind):
    cfg, out = _config(tmp_path, model=kind)
    if kind != "persistence":
        assert main(["train", "--config", str(cfg)]) == 0
    else:
        assert main(["train", "--config", str(cfg)]) == 1
    assert main(["evaluate", "--config", str(cfg)]) == 0
    rep = json.loads((out / "report.json").read_text())["report"]
    assert rep["n_samples"] > 0
    assert (out / "cwc.json").exists() == (kind == "lube")


def test_exit_codes(tmp_path):
    cfg, out = _config(tmp_path)
    assert main(["train", "--config", str(tmp_path / "nope.yaml")]) == 1
    assert main(["train"]) == 1  # no seed anywhere
    assert main(["frobnicate"]) == 1
    assert main(["train", "--config", str(cfg), "--bogus"]) == 1
    assert main(["train", "--config", str(cfg), "--coverage", "abc"]) == 1
    assert main(["train", "--config", str(cfg), "--split", "4"]) == 1
    assert main(["forecast", "--config", str(cfg)]) == 2  # no model trained yet
    bad, _ = _config(tmp_path, data=str(tmp_path / "missing.csv"), synthetic={})
    assert main(["train", "--config", str(bad)]) == 2
    (tmp_path / "junk.yaml").write_text("seed: 1\nunknown_key: 3\n")
    assert main(["train", "--config", str(tmp_path / "junk.yaml")]) == 1


def test_unwritable_out_dir(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    cfg, _ = _config(tmp_path, out_dir=str(blocker / "sub"))
    assert main(["generate", "--config", str(cfg)]) == 1


def test_seed_flag_overrides(tmp_path):
    cfg, out = _config(tmp_path)
    assert main(["generate", "--config", str(cfg), "--seed", "9"]) == 0
    assert json.loads((out / "config.json").read_text())["seed"] == 9
