"""Command-line entry point: ``ngbforecast <command> [--config FILE] [--seed N] ...``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import explain as shap
from .baselines import load_model, save_model
from .config import RunConfig, resolve
from .dataset import RawSeries, read_csv, write_csv
from .errors import DataError, NumericalError
from .metrics import EvalReport, PitHistogram, write_reports_csv
from .ngboost import NgbConfig, NgbModel, fit
from .pipeline import (BaselineSettings, Experiment, benchmark, benchmark_specs, derive_seed, fit_model,
                       forecast_report, grid_search, lube_eval_cwc, prune_and_retrain)
from .synthetic import SyntheticSpec, generate_synthetic

COMMANDS = ("generate", "train", "forecast", "evaluate", "explain", "grid", "prune", "bench")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ngbforecast", description="Probabilistic day-ahead PV power forecasting.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        c = sub.add_parser(name)
        c.add_argument("--config", help="YAML or JSON run configuration")
        c.add_argument("--seed", type=int, help="run seed (required unless set in the config)")
        c.add_argument("--out-dir", help="output directory")
        c.add_argument("--model", help="model file to load")
        c.add_argument("--coverage", help="comma-separated coverage levels in percent, e.g. 68,95,99")
        c.add_argument("--kind", choices=("ngboost", "gp", "lube", "persistence"), help="model kind")
        c.add_argument("--split", type=int, default=0, help="index of the evaluation split")
        c.add_argument("--origin-hour", type=float, help="forecast origin hour on the previous day")
    return p


# ----------------------------------------------------------------------------
# output helpers


class Writer:
    """Single writer for one run directory; every file carries the config hash and seed."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.meta = cfg.meta()
        self.root = Path(cfg.out_dir)
        try:
            self.root.mkdir(parents=True, exist_ok=True)
            probe = self.root / ".write_probe"
            probe.write_text("")
            probe.unlink()
        except OSError as exc:
            raise OSError(f"output directory {self.root} is not writable: {exc}") from None
        self.json("config.json", {"config": cfg.to_dict()})

    def path(self, name) -> Path:
        return self.root / name

    def _stamp(self) -> str:
        return f"# config_hash={self.meta['config_hash']} seed={self.meta['seed']}\n"

    def csv(self, name, rows) -> Path:
        path = self.path(name)
        with open(path, "w", newline="") as fh:
            fh.write(self._stamp())
            w = csv.writer(fh)
            for r in rows:
                w.writerow(r)
        return path

    def stamp_existing(self, name) -> Path:
        path = self.path(name)
        body = path.read_text()
        path.write_text(self._stamp() + body)
        return path

    def json(self, name, payload: dict) -> Path:
        path = self.path(name)
        path.write_text(json.dumps({**self.meta, **payload}, indent=2, sort_keys=True, default=_jsonable) + "\n")
        return path


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return str(obj)


def _write_report(w: Writer, rep: EvalReport | None, stem: str) -> None:
    if rep is None:
        return
    w.json(f"{stem}.json", {"report": rep.to_dict()})
    write_reports_csv([rep.flat()], w.path(f"{stem}.csv"))
    w.stamp_existing(f"{stem}.csv")
    if rep.pit_density is not None:
        hist = PitHistogram(np.asarray(rep.pit_edges), np.asarray(rep.pit_density))
        w.csv(f"{stem}_pit.csv", [["bin_left", "bin_right", "density"]] +
              [[repr(a), repr(b), repr(d)] for a, b, d in hist.rows()])


# ----------------------------------------------------------------------------
# data and models


def load_series(cfg: RunConfig) -> tuple[RawSeries, float | None]:
    if cfg.data:
        path = Path(cfg.data)
        if not path.exists():
            raise DataError(f"data file {path} not found")
        return read_csv(path), cfg.nominal_power
    spec = synthetic_spec(cfg)
    return generate_synthetic(spec), spec.nominal_power


def synthetic_spec(cfg: RunConfig) -> SyntheticSpec:
    params = dict(cfg.synthetic)
    params.setdefault("seed", derive_seed(cfg.seed, "synthetic") % (2**31))
    return SyntheticSpec(**params)


def experiment(cfg: RunConfig) -> Experiment:
    series, nominal = load_series(cfg)
    specs = benchmark_specs(cfg.splits.get("test_months"), cfg.splits.get("train_months", 12))
    return Experiment.build(series, specs, nominal, origin_hour=float(cfg.forecast.get("origin_hour", 12.0)),
                            horizon_hours=float(cfg.forecast.get("horizon_hours", 36.0)),
                            coverages=cfg.coverages)


def baseline_settings(cfg: RunConfig) -> BaselineSettings:
    return BaselineSettings(**cfg.baselines)


def _split_index(exp: Experiment, i: int) -> int:
    if not 0 <= i < len(exp.specs):
        raise UsageError(f"--split {i} out of range (have {len(exp.specs)} splits)")
    return i


def _model_path(args, cfg: RunConfig) -> Path:
    path = Path(args.model) if args.model else Path(cfg.out_dir) / "model.json"
    if not path.exists():
        raise DataError(f"model file {path} not found")
    return path


def _forecaster(args, cfg: RunConfig):
    if cfg.model == "persistence" and not args.model:
        return "persistence"
    return load_model(_model_path(args, cfg))


# ----------------------------------------------------------------------------
# commands


def cmd_generate(cfg: RunConfig, args) -> None:
    w = Writer(cfg)
    if cfg.data:
        raise UsageError("generate needs a `synthetic` block, not a data path")
    spec = synthetic_spec(cfg)
    series = generate_synthetic(spec)
    write_csv(series, w.path("series.csv"))
    w.stamp_existing("series.csv")
    w.json("synthetic.json", {"spec": spec.to_dict(), "rows": len(series)})


def cmd_train(cfg: RunConfig, args) -> None:
    if cfg.model == "persistence":
        raise UsageError("persistence has nothing to train")
    exp = experiment(cfg)
    i = _split_index(exp, args.split)
    w = Writer(cfg)
    train, _ = exp.split(i)
    if cfg.model == "ngboost":
        model = fit(train.X, train.y, NgbConfig(**cfg.ngboost), train.feature_names, train.scaling)
    else:
        model = fit_model(cfg.model, {}, train, derive_seed(cfg.seed, "train", cfg.model, i), baseline_settings(cfg))
    save_model(model, w.path("model.json"), w.meta)
    w.json("train.json", {"model": cfg.model, "split": exp.specs[i].to_dict(), "train_rows": len(train)})


def _forecast(cfg, args):
    exp = experiment(cfg)
    i = _split_index(exp, args.split)
    model = _forecaster(args, cfg)
    fs = exp.forecast(model, i)
    return exp, i, model, fs


def cmd_forecast(cfg: RunConfig, args) -> None:
    exp, i, model, fs = _forecast(cfg, args)
    w = Writer(cfg)
    w.csv("forecasts.csv", fs.rows())
    _write_report(w, forecast_report(fs), "report")


def cmd_evaluate(cfg: RunConfig, args) -> None:
    exp, i, model, fs = _forecast(cfg, args)
    rep = forecast_report(fs)
    if rep is None:
        raise DataError("no realized values in the test range; nothing to evaluate")
    w = Writer(cfg)
    _write_report(w, rep, "report")
    if not isinstance(model, str) and hasattr(model, "mu_conf"):
        w.json("cwc.json", {"cwc": lube_eval_cwc(fs, model.mu_conf, model.eta_pen)})


def cmd_explain(cfg: RunConfig, args) -> None:
    model = load_model(_model_path(args, cfg))
    if not isinstance(model, NgbModel):
        raise UsageError("explanations are available for ngboost models only")
    exp = experiment(cfg)
    i = _split_index(exp, args.split)
    _, test = exp.split(i)
    test = test.select(model.feature_names)
    n = min(int(cfg.explain.get("rows", 200)), len(test))
    X = test.X[:n]
    ids = [np.datetime_as_string(t, unit="m") for t in test.timestamps[:n]]
    w = Writer(cfg)
    ranking = {}
    for head in ("mu", "scale"):
        base, phi = shap.shap_values_batch(model, X, head)
        name = f"shap_{head}.csv"
        shap.write_explanations_csv(w.path(name), X, phi, head, model.feature_names, ids)
        w.stamp_existing(name)
        imp = shap.global_importance(phi, model.feature_names)
        ranking[head] = [[f, float(v)] for f, v in imp.ranked()]
        first = shap.Explanation(float(base[0]), phi[0], head, X[0], tuple(model.feature_names))
        w.json(f"force_{head}.json", {"sample_id": ids[0], "base_value": first.base_value,
                                      "output": first.output, "contributions": shap.force_record(first)})
        if cfg.explain.get("interactions"):
            _, Phi = shap.shap_interactions_batch(model, X, head)
            name = f"interactions_{head}.csv"
            shap.write_interactions_csv(w.path(name), Phi, head, model.feature_names, ids)
            w.stamp_existing(name)
    w.json("importance.json", {"importance": ranking, "rows": n})


def cmd_grid(cfg: RunConfig, args) -> None:
    if cfg.model == "persistence":
        raise UsageError("persistence has no hyperparameters to search")
    exp = experiment(cfg)
    chosen = (cfg.grid or {}).get(cfg.model)
    grid = None if chosen is None else {k: tuple(v) for k, v in chosen.items()}
    results = grid_search(exp, cfg.model, grid, cfg.seed, baseline_settings(cfg), n_jobs=cfg.n_jobs)
    w = Writer(cfg)
    rows = [r.row() for r in results]
    timing_keys = ("train_seconds",)
    board = [{k: v for k, v in r.items() if k not in timing_keys} for r in rows]
    keys = []
    for r in board:
        keys += [k for k in r if k not in keys]
    w.csv("leaderboard.csv", [["rank"] + keys] + [[n + 1] + [_cell(r.get(k)) for k in keys]
                                                  for n, r in enumerate(board)])
    w.csv("timings.csv", [["rank", "train_seconds"]] + [[n + 1, repr(r["train_seconds"])]
                                                         for n, r in enumerate(rows)])
    w.json("grid.json", {"model": cfg.model, "cells": len(results),
                         "failed": sum(not r.ok for r in results),
                         "best": board[0] if board else None})


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def cmd_prune(cfg: RunConfig, args) -> None:
    exp = experiment(cfg)
    i = _split_index(exp, args.split)
    train, test = exp.split(i)
    if args.model:
        model = load_model(_model_path(args, cfg))
        if not isinstance(model, NgbModel):
            raise UsageError("pruning needs an ngboost model")
    else:
        model = fit(train.X, train.y, NgbConfig(**cfg.ngboost), train.feature_names, train.scaling)
    threshold = float(cfg.prune.get("threshold", 0.02))
    res = prune_and_retrain(model, train, threshold, report=lambda m: forecast_report(exp.forecast(m, i)),
                            explain_rows=cfg.prune.get("explain_rows", 2000), seed=cfg.seed)
    w = Writer(cfg)
    table = res.table()
    keys = list(table[0])
    w.csv("prune_table.csv", [keys] + [[_cell(r.get(k)) for k in keys] for r in table])
    w.json("prune.json", {"threshold": threshold, "kept": list(res.kept), "dropped": list(res.dropped),
                          "share": res.share})
    save_model(res.model, w.path("pruned_model.json"), w.meta)


def cmd_bench(cfg: RunConfig, args) -> None:
    exp = experiment(cfg)
    res = benchmark(exp, cfg.seed, NgbConfig(**cfg.ngboost), baseline_settings(cfg),
                    log=lambda msg: print(msg, file=sys.stderr))
    w = Writer(cfg)
    payload = res.to_dict()
    rows = [{k: v for k, v in r.items() if k != "train_seconds"} for r in payload.pop("rows")]
    keys = []
    for r in rows:
        keys += [k for k in r if k not in keys]
    w.csv("bench.csv", [keys] + [[_cell(r.get(k)) for k in keys] for r in rows])
    w.csv("bench_timings.csv", [["model", "split", "train_seconds"]] +
          [[r["model"], r["split"], repr(r["train_seconds"])] for r in res.rows])
    w.json("bench.json", payload)
    for name, ok in payload["checks"].items():
        print(f"{name}: {'pass' if ok else 'FAIL'}")


HANDLERS = {
    "generate": cmd_generate, "train": cmd_train, "forecast": cmd_forecast, "evaluate": cmd_evaluate,
    "explain": cmd_explain, "grid": cmd_grid, "prune": cmd_prune, "bench": cmd_bench,
}


def _coverage(text):
    if text is None:
        return None
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"bad --coverage value {text!r}") from None


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # usage errors exit 1, --help exits 0
        return exc.code if isinstance(exc.code, int) else 1
    try:
        cfg = resolve(args.config, seed=args.seed, out_dir=args.out_dir, coverage=_coverage(args.coverage),
                      model=args.kind)
        if args.origin_hour is not None:
            cfg.forecast = {**cfg.forecast, "origin_hour": args.origin_hour}
        HANDLERS[args.command](cfg, args)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except (UsageError, ValueError, TypeError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
