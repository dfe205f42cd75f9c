"""Patience sweep for the iterative geometric regime on the digit CNN.

    python scripts/patience_ablation.py --patience 1,5,20 --target 0.9

Varies the patience of the iterative phases and prints seed-mean accuracy
and epochs for each value.
"""

import argparse
import os
from dataclasses import replace

from prunelab.desk import desk_config, desk_regime
from prunelab.experiment import run_sweep
from prunelab.schedules import RetrainPolicy


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--patience", default="1,5,20")
    ap.add_argument("--target", type=float, default=0.9)
    ap.add_argument("--regime", default="iterative_geometric")
    ap.add_argument("--max-epochs", type=int, default=40)
    ap.add_argument("--seeds", default="0,1,2")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--output-dir", default=os.environ.get("PRUNELAB_OUTPUT", "runs/patience"))
    args = ap.parse_args()

    base = desk_config(seeds=tuple(int(s) for s in args.seeds.split(",")), output_dir=args.output_dir)
    values = [int(v) for v in args.patience.split(",")]
    configs = [replace(base, regime=desk_regime(args.regime, args.target,
                                                policy=RetrainPolicy.with_patience(v, max_epochs=args.max_epochs)))
               for v in values]
    records = run_sweep(configs, workers=args.workers)
    per = len(base.seeds)
    print(f"{'patience':>8s} {'test acc':>8s} {'epochs':>7s}")
    for i, v in enumerate(values):
        recs = [r for r in records[i * per:(i + 1) * per] if r.status == "ok"]
        acc = sum(r.final_test_metric for r in recs) / len(recs)
        ep = sum(r.total_budget for r in recs) / len(recs)
        print(f"{v:8d} {acc:8.4f} {ep:7.1f}")


if __name__ == "__main__":
    main()
