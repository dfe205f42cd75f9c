"""Fixed retraining-budget comparison of the regimes on the digit CNN.

    python scripts/budget_compare.py --targets 0.5,0.95 --budgets 10,20,40

Each cell distributes the epoch budget across the plan's steps; patience can
still end a phase early. Writes budget_table.json and budget_curve.csv/.svg.
"""

import argparse
import json
import os
import time
from dataclasses import asdict

from prunelab.desk import TREND_REGIMES, desk_config, desk_regime
from prunelab.experiment import fixed_budget_compare, load_records
from prunelab.report import report


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--targets", default="0.5,0.95")
    ap.add_argument("--budgets", default="10,20,40")
    ap.add_argument("--regimes", default=",".join(TREND_REGIMES))
    ap.add_argument("--seeds", default="0,1,2,3,4")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--output-dir", default=os.environ.get("PRUNELAB_OUTPUT", "runs/budget"))
    args = ap.parse_args()

    base = desk_config(seeds=tuple(int(s) for s in args.seeds.split(",")), output_dir=args.output_dir)
    budgets = [int(b) for b in args.budgets.split(",")]
    t0 = time.perf_counter()
    table = []
    for p in (float(t) for t in args.targets.split(",")):
        regimes = [desk_regime(k, p) for k in args.regimes.split(",")]
        table += fixed_budget_compare(base, regimes, budgets, workers=args.workers)
    print(f"{'p':>5s} {'regime':22s} {'budget':>6s} {'feasible':>8s} {'test acc':>8s} {'epochs':>7s}")
    for c in table:
        print(f"{c.target:5g} {c.regime:22s} {c.budget:6d} {str(c.feasible):>8s} {c.mean_test:8.4f} "
              f"{c.mean_epochs:7.1f}")
    print(f"wall time {time.perf_counter() - t0:.0f} s")
    os.makedirs(args.output_dir, exist_ok=True)
    with open(os.path.join(args.output_dir, "budget_table.json"), "w") as f:
        json.dump([asdict(c) for c in table], f, indent=1)
    records = load_records(os.path.join(args.output_dir, "records"))
    for path in report(records, "budget_curve", os.path.join(args.output_dir, "reports")):
        print(path)


if __name__ == "__main__":
    main()
