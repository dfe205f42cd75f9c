"""Pruning plans for the four regimes.

A plan is a list of steps, each with the cumulative number of prunable weights
removed after that step and the retraining policy that follows it. Every plan
ends exactly at ``round(p * W)``.

Rounding rules:
  * the one-shot count rounds half up;
  * constant plans use cumulative ``floor(k * round(p*W) / steps)`` so
    increments differ by at most one;
  * geometric phases round the real remaining count ``R * (1 - r)**n`` to the
    nearest integer and clamp the last step to the target. Steps whose rounded
    count would not change are dropped, so every increment is at least one.
"""

import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import List, Optional

from .errors import ConfigurationError, InputError

REGIMES = ("one_shot", "iterative_constant", "iterative_geometric", "hybrid")

# Desk-scale patience defaults (full-scale runs use roughly 10x these).
ONE_SHOT_PATIENCE = 20
ITERATIVE_PATIENCE = 5


def round_half_up(x: float) -> int:
    # The epsilon absorbs binary representation error, e.g. 0.05 * 10.
    return int(math.floor(x + 0.5 + 1e-9))


@dataclass(frozen=True)
class RetrainPolicy:
    """``fixed``: exactly ``epochs`` epochs. ``patience``: early stopping with
    ``patience``/``min_delta``, bounded by ``max_epochs``."""

    kind: str = "patience"
    epochs: int = 0
    patience: int = ITERATIVE_PATIENCE
    min_delta: float = 0.0
    max_epochs: int = 100

    def __post_init__(self):
        if self.kind == "fixed":
            if self.epochs < 0:
                raise ConfigurationError(f"fixed policy needs epochs >= 0, got {self.epochs}")
        elif self.kind == "patience":
            if self.patience < 1 or self.min_delta < 0 or self.max_epochs < 1:
                raise ConfigurationError(f"invalid patience policy {self}")
        else:
            raise ConfigurationError(f"unknown retrain policy kind {self.kind!r}")

    @classmethod
    def fixed(cls, epochs: int) -> "RetrainPolicy":
        return cls("fixed", epochs=epochs)

    @classmethod
    def with_patience(cls, patience: int, min_delta: float = 0.0, max_epochs: int = 100) -> "RetrainPolicy":
        return cls("patience", patience=patience, min_delta=min_delta, max_epochs=max_epochs)

    def describe(self) -> str:
        if self.kind == "fixed":
            return f"fixed({self.epochs})"
        extra = f", min_delta={self.min_delta:g}" if self.min_delta else ""
        return f"patience({self.patience}{extra})"


@dataclass(frozen=True)
class PlanStep:
    cumulative: int
    policy: RetrainPolicy
    phase: str = "iterative"
    # Index n of the geometric trajectory point this step realizes (0 otherwise).
    trajectory_index: int = 0


@dataclass(frozen=True)
class PruningPlan:
    regime: str
    total: int
    target: float
    steps: List[PlanStep]
    ratio: Optional[float] = None

    @property
    def increments(self) -> List[int]:
        prev, out = 0, []
        for s in self.steps:
            out.append(s.cumulative - prev)
            prev = s.cumulative
        return out

    @property
    def final_count(self) -> int:
        return self.steps[-1].cumulative

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "PruningPlan":
        steps = [PlanStep(s["cumulative"], RetrainPolicy(**s["policy"]), s["phase"], s["trajectory_index"])
                 for s in d["steps"]]
        return cls(d["regime"], d["total"], d["target"], steps, d.get("ratio"))


def _check_p(p: float) -> None:
    if not 0 < p < 1:
        raise InputError(f"target pruning fraction must lie in (0, 1), got {p}")


def _check_w(w: int) -> None:
    if w < 1:
        raise InputError(f"need at least one prunable weight, got W={w}")


def plan_one_shot(w: int, p: float, policy: RetrainPolicy) -> PruningPlan:
    _check_w(w)
    _check_p(p)
    count = round_half_up(p * w)
    if count < 1:
        raise InputError(f"p={p} prunes no weights of W={w}")
    return PruningPlan("one_shot", w, p, [PlanStep(count, policy, "one_shot")])


def plan_constant(w: int, p: float, steps: int, policy: RetrainPolicy) -> PruningPlan:
    _check_w(w)
    _check_p(p)
    if steps < 1:
        raise InputError(f"steps must be >= 1, got {steps}")
    target = round_half_up(p * w)
    if steps > target:
        raise InputError(f"{steps} steps for {target} weights would leave empty steps")
    cum = [k * target // steps for k in range(1, steps + 1)]
    phase = "one_shot" if steps == 1 else "iterative"
    return PruningPlan("iterative_constant", w, p, [PlanStep(c, policy, phase) for c in cum])


def _geometric_tail(w: int, start: int, target: int, p: float, r: float, policy: RetrainPolicy) -> List[PlanStep]:
    """Geometric steps pruning fraction ``r`` of the remaining weights from ``start`` to ``target``."""
    if start >= target:
        return []
    remaining0 = w - start
    # Real-valued number of steps to bring the remaining fraction to 1 - p.
    ratio = (1.0 - p) * w / remaining0
    n_steps = max(1, math.ceil(math.log(ratio) / math.log(1.0 - r) - 1e-9)) if r < 1 else 1
    steps, prev = [], start
    for n in range(1, n_steps + 1):
        cum = target if n == n_steps else min(target, w - round_half_up(remaining0 * (1.0 - r) ** n))
        if cum > prev:
            steps.append(PlanStep(cum, policy, "iterative", n))
            prev = cum
        if prev == target:
            break
    return steps


def plan_geometric(w: int, p: float, r: float, policy: RetrainPolicy) -> PruningPlan:
    """Prune fraction ``r`` of the remaining weights per step until ``p`` is reached.

    ``r >= p`` degenerates to a single step identical to one-shot.
    """
    _check_w(w)
    _check_p(p)
    if not 0 < r < 1:
        raise InputError(f"per-step ratio must lie in (0, 1), got {r}")
    target = round_half_up(p * w)
    if target < 1:
        raise InputError(f"p={p} prunes no weights of W={w}")
    steps = [PlanStep(target, policy, "one_shot")] if r >= p else _geometric_tail(w, 0, target, p, r, policy)
    if len(steps) == 1:
        steps = [PlanStep(target, policy, "one_shot")]
    return PruningPlan("iterative_geometric", w, p, steps, r)


def steps_ratio(p: float, steps: int) -> float:
    """Per-step ratio r with ``(1 - r)**steps == 1 - p``."""
    _check_p(p)
    if steps < 1:
        raise InputError(f"steps must be >= 1, got {steps}")
    return 1.0 - (1.0 - p) ** (1.0 / steps)


def default_hybrid_ratio(p: float) -> float:
    return 0.1 if p < 0.8 else 0.02


def plan_hybrid(w: int, p: float, p_k: Optional[float] = None, r: Optional[float] = None,
                policy_oneshot: Optional[RetrainPolicy] = None,
                policy_iter: Optional[RetrainPolicy] = None) -> PruningPlan:
    """Large first step to ``p_k``, then geometric steps of ratio ``r`` to ``p``.

    Defaults: ``p_k = 0.7 p``; ``r = 0.1`` below p=0.8 and ``0.02`` above;
    iterative patience is the one-shot patience / 20, rounded up.
    """
    _check_w(w)
    _check_p(p)
    p_k = 0.7 * p if p_k is None else p_k
    r = default_hybrid_ratio(p) if r is None else r
    if not 0 < p_k < p:
        raise InputError(f"hybrid one-shot fraction must satisfy 0 < p_k < p, got p_k={p_k}, p={p}")
    if not 0 < r < 1:
        raise InputError(f"per-step ratio must lie in (0, 1), got {r}")
    policy_oneshot = policy_oneshot or RetrainPolicy.with_patience(ONE_SHOT_PATIENCE)
    if policy_iter is None:
        if policy_oneshot.kind == "patience":
            policy_iter = replace(policy_oneshot, patience=max(1, math.ceil(policy_oneshot.patience / 20)))
        else:
            policy_iter = RetrainPolicy.fixed(max(1, math.ceil(policy_oneshot.epochs / 20)))
    target = round_half_up(p * w)
    first = round_half_up(p_k * w)
    if first < 1 or first >= target:
        raise InputError(f"p_k={p_k} gives {first} weights, need 1 <= count < {target} at W={w}")
    steps = [PlanStep(first, policy_oneshot, "one_shot")]
    steps += _geometric_tail(w, first, target, p, r, policy_iter)
    return PruningPlan("hybrid", w, p, steps, r)


@dataclass(frozen=True)
class RegimeConfig:
    kind: str = "one_shot"
    target: float = 0.5
    steps: int = 4
    # Per-step ratio of remaining weights. None: geometric derives it from
    # ``steps`` so the plan lands on the target in that many steps; hybrid
    # uses its own default.
    ratio: Optional[float] = None
    oneshot_fraction: Optional[float] = None
    # Policy after iterative steps; None -> patience 5, or one-shot patience / 20 for hybrid.
    policy: Optional[RetrainPolicy] = None
    oneshot_policy: RetrainPolicy = field(default_factory=lambda: RetrainPolicy.with_patience(ONE_SHOT_PATIENCE))

    def __post_init__(self):
        if self.kind not in REGIMES:
            raise ConfigurationError(f"unknown regime {self.kind!r}; expected one of {REGIMES}")
        if not 0 < self.target < 1:
            raise ConfigurationError(f"target must lie in (0, 1), got {self.target}")
        if self.kind in ("iterative_constant", "iterative_geometric") and self.steps < 1:
            raise ConfigurationError(f"{self.kind} regime needs steps >= 1")
        if self.kind == "iterative_geometric" and self.ratio is not None and not 0 < self.ratio <= self.target:
            raise ConfigurationError(f"geometric ratio must lie in (0, target], got {self.ratio}")
        if self.kind == "hybrid" and self.oneshot_fraction is not None and not self.oneshot_fraction < self.target:
            raise ConfigurationError("hybrid one-shot fraction must be below the target")

    def build(self, w: int) -> PruningPlan:
        policy = self.policy or RetrainPolicy.with_patience(ITERATIVE_PATIENCE)
        if self.kind == "one_shot":
            return plan_one_shot(w, self.target, self.oneshot_policy)
        if self.kind == "iterative_constant":
            return plan_constant(w, self.target, self.steps, policy)
        if self.kind == "iterative_geometric":
            return plan_geometric(w, self.target, self.ratio or steps_ratio(self.target, self.steps), policy)
        return plan_hybrid(w, self.target, self.oneshot_fraction, self.ratio, self.oneshot_policy, self.policy)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RegimeConfig":
        d = dict(d)
        for key in ("policy", "oneshot_policy"):
            if isinstance(d.get(key), dict):
                d[key] = RetrainPolicy(**d[key])
        return cls(**d)


def describe(plan: PruningPlan) -> str:
    """Aligned text table of per-step counts, cumulative sparsity and policy."""
    header = ("step", "phase", "pruned", "cumulative", "sparsity", "policy")
    rows = []
    for i, (s, inc) in enumerate(zip(plan.steps, plan.increments), start=1):
        rows.append((str(i), s.phase, str(inc), str(s.cumulative), f"{s.cumulative / plan.total:.4f}",
                     s.policy.describe()))
    widths = [max(len(h), *(len(r[c]) for r in rows)) for c, h in enumerate(header)]
    title = f"{plan.regime}: W={plan.total}, target p={plan.target:g}"
    if plan.ratio is not None:
        title += f", r={plan.ratio:g}"
    lines = [title, "  ".join(h.rjust(wd) for h, wd in zip(header, widths))]
    lines.append("  ".join("-" * wd for wd in widths))
    lines += ["  ".join(v.rjust(wd) for v, wd in zip(r, widths)) for r in rows]
    return "\n".join(lines)
