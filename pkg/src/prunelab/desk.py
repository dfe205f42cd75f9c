"""Desk-scale protocol shared by the trend experiments and their checks.

Base networks train for 15 epochs; every fine-tuning phase runs at a tenth
of that rate. Early stopping watches validation loss, because accuracy on a
320-sample validation split moves in 1/320 steps and ties never count as
degradation, so an accuracy-watching stopper rarely fires. Records still
report accuracy.
"""

from dataclasses import replace
from typing import Dict, List, Sequence

from .experiment import ExperimentConfig, ExperimentRecord, run_sweep
from .schedules import RegimeConfig, RetrainPolicy

ONE_SHOT_POLICY = RetrainPolicy.with_patience(20, max_epochs=40)
ITERATIVE_POLICY = RetrainPolicy.with_patience(5, max_epochs=15)
STEPS = 5
TREND_REGIMES = ("one_shot", "iterative_constant", "iterative_geometric")


def desk_config(**overrides) -> ExperimentConfig:
    """CNN on the 4,000-sample digit corpus, loss-driven patience, 5 seeds."""
    cfg = ExperimentConfig(model="cnn", dataset="digits", metric="loss")
    return replace(cfg, **overrides)


def desk_regime(kind: str, target: float, **overrides) -> RegimeConfig:
    reg = RegimeConfig(kind=kind, target=target, steps=STEPS, policy=ITERATIVE_POLICY,
                       oneshot_policy=ONE_SHOT_POLICY)
    return replace(reg, **overrides)


def regime_grid(base: ExperimentConfig, targets: Sequence[float],
                kinds: Sequence[str] = TREND_REGIMES) -> List[ExperimentConfig]:
    return [replace(base, regime=desk_regime(k, p)) for p in targets for k in kinds]


def seed_means(records: Sequence[ExperimentRecord]) -> Dict[tuple, Dict[str, float]]:
    """``(regime, target) -> {test, val, epochs, n}`` over successful records."""
    groups: Dict[tuple, List[ExperimentRecord]] = {}
    for r in records:
        if r.status == "ok":
            groups.setdefault((r.config["regime"]["kind"], r.config["regime"]["target"]), []).append(r)
    out = {}
    for key, recs in sorted(groups.items()):
        n = len(recs)
        out[key] = {"test": sum(r.final_test_metric for r in recs) / n,
                    "val": sum(r.final_val_metric for r in recs) / n,
                    "epochs": sum(r.total_budget for r in recs) / n, "n": n}
    return out


def run_trend(base: ExperimentConfig, targets: Sequence[float], kinds: Sequence[str] = TREND_REGIMES,
              workers: int = 1, progress=None) -> Dict[tuple, Dict[str, float]]:
    return seed_means(run_sweep(regime_grid(base, targets, kinds), workers=workers, progress=progress))


def format_table(means: Dict[tuple, Dict[str, float]]) -> str:
    lines = [f"{'target':>6s}  {'regime':22s} {'test acc':>8s} {'val acc':>8s} {'epochs':>7s} {'n':>2s}"]
    for (kind, target), m in sorted(means.items(), key=lambda kv: (kv[0][1], kv[0][0])):
        lines.append(f"{target:6g}  {kind:22s} {m['test']:8.4f} {m['val']:8.4f} {m['epochs']:7.1f} {m['n']:2d}")
    return "\n".join(lines)
