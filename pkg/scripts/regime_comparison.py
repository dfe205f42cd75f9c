"""Accuracy against target sparsity for the three regimes on the digit CNN.

    python scripts/regime_comparison.py --targets 0.5,0.9,0.98 --criterion magnitude

Prints seed-mean test accuracy and epochs per (target, regime) and writes
ratio_curve.csv/.svg under <output>/reports.
"""

import argparse
import os
import time

from prunelab.desk import TREND_REGIMES, desk_config, format_table, regime_grid, seed_means
from prunelab.experiment import load_records, run_sweep, write_results_csv
from prunelab.report import report


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--targets", default="0.5,0.9,0.98")
    ap.add_argument("--criterion", default="magnitude", choices=("magnitude", "taylor", "obd"))
    ap.add_argument("--regimes", default=",".join(TREND_REGIMES))
    ap.add_argument("--seeds", default="0,1,2,3,4")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--output-dir", default=os.environ.get("PRUNELAB_OUTPUT", "runs/regimes"))
    args = ap.parse_args()

    base = desk_config(criterion=args.criterion, seeds=tuple(int(s) for s in args.seeds.split(",")),
                       output_dir=args.output_dir)
    configs = regime_grid(base, [float(t) for t in args.targets.split(",")], args.regimes.split(","))
    t0 = time.perf_counter()
    records = run_sweep(configs, workers=args.workers,
                        progress=lambda rid, status: print(f"{status:8s} {rid}", flush=True))
    print(format_table(seed_means(records)))
    print(f"wall time {time.perf_counter() - t0:.0f} s")
    all_records = load_records(os.path.join(args.output_dir, "records"))
    write_results_csv(all_records, os.path.join(args.output_dir, "results.csv"))
    for path in report(records, "ratio_curve", os.path.join(args.output_dir, "reports")):
        print(path)


if __name__ == "__main__":
    main()
