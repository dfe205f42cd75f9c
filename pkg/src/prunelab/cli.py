"""Command-line entry point: ``prunelab <subcommand> [options]``.

Settings resolve in order: built-in defaults, then the config file
(``--config``, YAML or JSON), then ``--set key.path=value`` overrides. The
output root comes from ``--output-dir``, else ``$PRUNELAB_OUTPUT``, else the
config's ``output_dir``.

Besides experiment fields, a config file may carry two extra sections:
``sweep`` (dotted key -> list of values) and ``compare`` (``budgets`` plus a
list of ``regimes``).
"""

import argparse
import json
import os
import sys
from dataclasses import asdict
from pathlib import Path
from typing import List, Optional, Tuple

import yaml

from .errors import PrunelabError
from .experiment import (ExperimentConfig, expand_grid, fixed_budget_compare, load_records, output_root,
                         run_sweep, set_path, train_base, write_results_csv)
from .report import REPORT_KINDS, report
from .schedules import RegimeConfig, describe

OUTPUT_ENV = "PRUNELAB_OUTPUT"
EXTRA_SECTIONS = ("sweep", "compare")


def load_config_file(path: Optional[str]) -> dict:
    if not path:
        return {}
    text = Path(path).read_text()
    data = json.loads(text) if path.endswith(".json") else yaml.safe_load(text)
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise PrunelabError(f"config file {path} must hold a mapping at top level")
    return data


def apply_overrides(data: dict, pairs: List[str]) -> dict:
    """Apply ``key.path=value`` overrides; values are parsed as YAML scalars/lists."""
    for pair in pairs or []:
        if "=" not in pair:
            raise PrunelabError(f"override {pair!r} must look like key=value")
        key, raw = pair.split("=", 1)
        set_path(data, key.strip(), yaml.safe_load(raw))
    return data


def resolve(args) -> Tuple[ExperimentConfig, dict]:
    data = apply_overrides(load_config_file(args.config), args.set)
    extras = {k: data.pop(k) for k in EXTRA_SECTIONS if k in data}
    out = args.output_dir or os.environ.get(OUTPUT_ENV)
    if out:
        data["output_dir"] = out
    if getattr(args, "seed", None) is not None:
        data["seeds"] = [args.seed]
    return ExperimentConfig.from_dict(data), extras


def _progress(run_id: str, status: str) -> None:
    print(f"{status:10s} {run_id}", flush=True)


def _finish(cfg: ExperimentConfig) -> None:
    root = output_root(cfg)
    path = write_results_csv(load_records(root / "records"), root / "results.csv")
    print(f"results: {path}")


def cmd_train_base(args) -> int:
    cfg, _ = resolve(args)
    for seed in cfg.seeds:
        _, meta = train_base(cfg, seed, force=args.force)
        print(f"seed {seed}: val={meta['val_metric']:.4f} test={meta['test_metric']:.4f} ({meta['key']})")
    return 0


def cmd_run(args) -> int:
    cfg, _ = resolve(args)
    records = run_sweep([cfg], workers=args.workers, retry_failed=args.retry_failed, progress=_progress)
    for r in records:
        print(f"{r.run_id}: status={r.status} test={r.final_test_metric} epochs={r.total_budget}")
    _finish(cfg)
    return 0 if all(r.status == "ok" for r in records) else 1


def cmd_sweep(args) -> int:
    cfg, extras = resolve(args)
    grid = dict(extras.get("sweep") or {})
    for pair in args.grid or []:
        key, raw = pair.split("=", 1)
        grid[key] = yaml.safe_load(f"[{raw}]")
    if not grid:
        raise PrunelabError("sweep needs a grid (config 'sweep' section or --grid key=v1,v2)")
    configs = expand_grid(cfg, grid)
    records = run_sweep(configs, workers=args.workers, retry_failed=args.retry_failed, progress=_progress)
    failed = sum(r.status == "failed" for r in records)
    print(f"{len(records)} records, {failed} failed")
    _finish(cfg)
    return 0


def cmd_budget(args) -> int:
    cfg, extras = resolve(args)
    compare = extras.get("compare") or {}
    budgets = [int(b) for b in (args.budgets.split(",") if args.budgets else compare.get("budgets", []))]
    if args.regimes:
        regimes = [RegimeConfig(kind=k, target=cfg.regime.target, steps=cfg.regime.steps,
                                policy=cfg.regime.policy, oneshot_policy=cfg.regime.oneshot_policy)
                   for k in args.regimes.split(",")]
    else:
        regimes = [RegimeConfig.from_dict({**cfg.regime.to_dict(), **r}) for r in compare.get("regimes", [])]
    if not budgets or not regimes:
        raise PrunelabError("budget needs budgets and regimes (flags or config 'compare' section)")
    table = fixed_budget_compare(cfg, regimes, budgets, workers=args.workers, progress=_progress)
    print(f"{'regime':22s} {'p':>5s} {'budget':>6s} {'feasible':>8s} {'mean':>7s} {'std':>7s} {'epochs':>7s}")
    for c in table:
        print(f"{c.regime:22s} {c.target:5g} {c.budget:6d} {str(c.feasible):>8s} {c.mean_test:7.4f} "
              f"{c.std_test:7.4f} {c.mean_epochs:7.1f}")
    root = output_root(cfg)
    (root / "budget_table.json").write_text(json.dumps([asdict(c) for c in table], indent=1) + "\n")
    _finish(cfg)
    return 0


def cmd_report(args) -> int:
    records_dir = Path(args.records) if args.records else output_root(resolve(args)[0]) / "records"
    records = load_records(records_dir)
    kinds = REPORT_KINDS if args.kind == "all" else [args.kind]
    out = Path(args.out or records_dir.parent / "reports")
    for kind in kinds:
        for path in report(records, kind, out):
            print(path)
    return 0


def cmd_plan(args) -> int:
    cfg, _ = resolve(args)
    reg = cfg.regime
    if args.regime:
        reg = RegimeConfig.from_dict({**reg.to_dict(), "kind": args.regime})
    print(describe(reg.build(args.weights)))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="prunelab", description="Pruning regime experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("--config", help="YAML or JSON config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (repeatable)")
        p.add_argument("--output-dir", help=f"output root (default: ${OUTPUT_ENV} or config output_dir)")
        if seed:
            p.add_argument("--seed", type=int, help="run a single seed instead of the configured list")
        return p

    p = common(sub.add_parser("train-base", help="train and cache base networks"))
    p.add_argument("--force", action="store_true", help="retrain even if a cached checkpoint exists")
    p.set_defaults(func=cmd_train_base)

    for name, func, helptext in (("run", cmd_run, "run one configuration for each seed"),
                                 ("sweep", cmd_sweep, "run a grid of configurations")):
        p = common(sub.add_parser(name, help=helptext))
        p.add_argument("--workers", type=int, default=1, help="parallel worker processes")
        p.add_argument("--retry-failed", action="store_true", help="rerun cells recorded as failed")
        if name == "sweep":
            p.add_argument("--grid", action="append", metavar="KEY=V1,V2", help="grid axis (repeatable)")
        p.set_defaults(func=func)

    p = common(sub.add_parser("budget", help="fixed-budget comparison of regimes"))
    p.add_argument("--budgets", help="comma-separated epoch budgets")
    p.add_argument("--regimes", help="comma-separated regime kinds")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_budget)

    p = common(sub.add_parser("report", help="aggregate records into CSV + SVG"), seed=False)
    p.add_argument("--records", help="directory of record JSON files (default: <output>/records)")
    p.add_argument("--kind", default="all", choices=REPORT_KINDS + ("all",))
    p.add_argument("--out", help="output directory (default: <output>/reports)")
    p.set_defaults(func=cmd_report)

    p = common(sub.add_parser("plan", help="print a pruning plan"), seed=False)
    p.add_argument("--regime", choices=("one_shot", "iterative_constant", "iterative_geometric", "hybrid"))
    p.add_argument("--weights", type=int, default=100_000, help="number of prunable weights W")
    p.set_defaults(func=cmd_plan)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (PrunelabError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
