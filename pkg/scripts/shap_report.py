"""Global SHAP importance and the prune-and-retrain comparison for one split.

Fits NGBoost on the training part of a seasonal split, ranks features by mean
|phi| for the location and scale heads, then drops features below the share
threshold and retrains.

    python scripts/shap_report.py --month 2019-07 --noise 3
"""
import argparse

import numpy as np

from ngbforecast import explain
from ngbforecast.ngboost import NgbConfig, fit
from ngbforecast.pipeline import Experiment, benchmark_specs, prune_and_retrain
from ngbforecast.synthetic import SyntheticSpec, generate_synthetic


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--month", default="2019-07")
    ap.add_argument("--noise", type=int, default=0, help="pure-noise weather columns to inject")
    ap.add_argument("--threshold", type=float, default=0.02)
    ap.add_argument("--rows", type=int, default=1000, help="test rows to explain")
    args = ap.parse_args()

    spec = SyntheticSpec(days=600, extra_noise_features=args.noise, seed=args.seed)
    exp = Experiment.build(generate_synthetic(spec), benchmark_specs([args.month]), spec.nominal_power)
    train, test = exp.split(0)
    model = fit(train.X, train.y, NgbConfig(), train.feature_names, train.scaling)

    X = test.X[: args.rows]
    for head in ("mu", "scale"):
        _, phi = explain.shap_values_batch(model, X, head)
        print(f"\nmean |phi|, {head} head")
        for name, v in explain.global_importance(phi, model.feature_names).ranked():
            print(f"  {name:14s} {v:.5f}")

    res = prune_and_retrain(model, train, args.threshold, test=test, seed=args.seed)
    print(f"\ndropped at {args.threshold:.0%}: {', '.join(res.dropped) or 'none'}")
    for row in res.table():
        vals = " ".join(f"{k}={row[k]:.5f}" for k in ("mae", "rmse", "mbe", "crps") if row.get(k) is not None)
        print(f"  {row['model']:16s} {vals}")
    shares = np.array([res.share[n] for n in model.feature_names])
    print(f"combined shares sum to {shares.sum():.6f}")


if __name__ == "__main__":
    main()
