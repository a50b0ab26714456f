"""Seasonal day-ahead benchmark on the synthetic PV park.

Trains NGBoost, GP, LUBE and persistence on each of four seasonal splits and
prints the per-split and mean metrics, then the two direction checks.

    python scripts/run_benchmark.py --seed 0 --out bench.json
"""
import argparse
import json
import sys

from ngbforecast.ngboost import NgbConfig
from ngbforecast.pipeline import BaselineSettings, Experiment, benchmark, benchmark_specs, derive_seed
from ngbforecast.synthetic import SyntheticSpec, generate_synthetic


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--days", type=int, default=700)
    ap.add_argument("--stages", type=int, default=500)
    ap.add_argument("--kinds", default="ngboost,gp,lube,persistence")
    ap.add_argument("--out", help="write the full result as JSON")
    args = ap.parse_args()

    spec = SyntheticSpec(days=args.days, seed=derive_seed(args.seed, "synthetic") % 2**31)
    exp = Experiment.build(generate_synthetic(spec), benchmark_specs(), spec.nominal_power)
    res = benchmark(exp, args.seed, NgbConfig(n_stages=args.stages), BaselineSettings(),
                    kinds=tuple(args.kinds.split(",")), log=lambda m: print(m, file=sys.stderr))

    print(f"{'model':12s} {'mae':>8s} {'rmse':>8s} {'mbe':>8s} {'crps':>8s} {'cwc':>10s}")
    for kind, agg in res.means().items():
        cells = [f"{agg[k]:8.4f}" if k in agg else f"{'-':>8s}" for k in ("mae", "rmse", "mbe", "crps")]
        cwc = f"{agg['cwc']:10.3g}" if "cwc" in agg else f"{'-':>10s}"
        print(f"{kind:12s} {' '.join(cells)} {cwc}")
    for name, ok in res.checks().items():
        print(f"{name}: {'pass' if ok else 'FAIL'}")
    if args.out:
        with open(args.out, "w") as fh:
            json.dump({"synthetic": spec.to_dict(), **res.to_dict()}, fh, indent=1)


if __name__ == "__main__":
    main()
