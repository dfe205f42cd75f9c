"""Train -> prune -> retrain pipeline, sweeps, and fixed-budget comparisons.

Every run writes one JSON record named after its run id. Records hold
everything except timing deterministically, so two runs with the same
configuration and seed serialize identically once ``wall_time_s`` is dropped.
"""

import copy
import csv
import hashlib
import itertools
import json
import math
import os
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .criteria import compute_scores
from .data import Dataset, SplitSpec, load_dataset, split
from .engine import Mask, StructuredRatioSpec, apply_mask, check_structured, overall_ratio, select_structured, \
    select_unstructured, sparsity
from .errors import ConfigurationError, InputError, PrunelabError
from .models import build_model
from .nn import Network, SGDConfig, load_checkpoint, save_checkpoint
from .retrain import BudgetMeter, evaluate, finetune, finetune_lr
from .rng import EVAL, make_rng
from .schedules import PruningPlan, RegimeConfig, RetrainPolicy

RESULT_COLUMNS = ("run_id", "model", "dataset", "criterion", "regime", "target_sparsity", "achieved_sparsity",
                  "step", "epochs_used", "total_budget", "val_metric", "test_metric", "seed")


@dataclass(frozen=True)
class BaseTraining:
    epochs: int = 15
    sgd: SGDConfig = field(default_factory=lambda: SGDConfig(learning_rate=0.01, batch_size=64))


@dataclass(frozen=True)
class ExperimentConfig:
    model: str = "cnn"
    dataset: str = "digits"
    criterion: str = "magnitude"
    granularity: str = "weight"
    # Final per-group channel fractions for structured runs.
    structured_ratios: Dict[str, float] = field(default_factory=dict)
    regime: RegimeConfig = field(default_factory=RegimeConfig)
    base: BaseTraining = field(default_factory=BaseTraining)
    # Fine-tuning SGD; learning_rate None means a tenth of the base rate.
    finetune_learning_rate: Optional[float] = None
    # Validation metric watched by early stopping and checkpoint selection.
    metric: str = "accuracy"
    seeds: Tuple[int, ...] = (0, 1, 2, 3, 4)
    budget: Optional[int] = None
    # "cap": hard stop at the budget. "distribute": also split it across steps.
    budget_mode: str = "cap"
    eval_batches: int = 4
    eval_batch_size: int = 128
    data_seed: int = 0
    split: SplitSpec = field(default_factory=SplitSpec)
    output_dir: str = "runs"
    cache_dir: str = ".cache"

    def __post_init__(self):
        if not self.seeds:
            raise ConfigurationError("seeds must be non-empty")
        if self.criterion not in ("magnitude", "taylor", "obd"):
            raise ConfigurationError(f"unknown criterion {self.criterion!r}")
        if self.granularity not in ("weight", "channel"):
            raise ConfigurationError(f"unknown granularity {self.granularity!r}")
        if self.granularity == "channel" and not self.structured_ratios:
            raise ConfigurationError("channel granularity needs structured_ratios")
        if self.model not in ("mlp", "cnn"):
            raise ConfigurationError(f"unknown model {self.model!r}")
        if self.metric not in ("accuracy", "loss"):
            raise ConfigurationError(f"unknown metric {self.metric!r}")
        if self.budget is not None and self.budget < 1:
            raise ConfigurationError(f"budget must be positive, got {self.budget}")
        if self.budget_mode not in ("cap", "distribute"):
            raise ConfigurationError(f"unknown budget_mode {self.budget_mode!r}")
        if self.eval_batches < 1 or self.eval_batch_size < 1:
            raise ConfigurationError("eval_batches and eval_batch_size must be >= 1")

    @property
    def finetune_sgd(self) -> SGDConfig:
        lr = self.finetune_learning_rate or finetune_lr(self.base.sgd.learning_rate)
        return replace(self.base.sgd, learning_rate=lr)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["seeds"] = list(self.seeds)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = copy.deepcopy(d)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        if "regime" in d:
            d["regime"] = RegimeConfig.from_dict(d["regime"])
        if "base" in d:
            base = dict(d["base"])
            if isinstance(base.get("sgd"), dict):
                base["sgd"] = SGDConfig(**base["sgd"])
            d["base"] = BaseTraining(**base)
        if "split" in d:
            d["split"] = SplitSpec(**d["split"])
        if "seeds" in d:
            d["seeds"] = tuple(int(s) for s in d["seeds"])
        try:
            return cls(**d)
        except TypeError as e:
            raise ConfigurationError(str(e)) from None

    def identity(self) -> dict:
        """The fields that determine a run's results (seeds and paths excluded)."""
        d = self.to_dict()
        for k in ("seeds", "output_dir", "cache_dir"):
            d.pop(k)
        return d

    def run_id(self, seed: int) -> str:
        digest = hashlib.sha256(json.dumps(self.identity(), sort_keys=True).encode()).hexdigest()[:10]
        return f"{self.regime.kind}-p{self.regime.target:g}-{self.criterion}-s{seed}-{digest}"


@dataclass
class StepRecord:
    step: int
    phase: str
    target_sparsity: float
    achieved_sparsity: float
    pruned: int
    epochs_used: int
    # Top-1 accuracy after the step's fine-tuning, whatever metric drove stopping.
    val_metric: float
    test_metric: float
    val_loss: float
    budget_truncated: bool
    history: List[dict]


@dataclass
class ExperimentRecord:
    run_id: str
    seed: int
    config: dict
    status: str = "ok"
    plan: Optional[dict] = None
    base: Optional[dict] = None
    steps: List[StepRecord] = field(default_factory=list)
    total_budget: int = 0
    final_val_metric: float = math.nan
    final_test_metric: float = math.nan
    budget_truncated: bool = False
    error: Optional[str] = None
    wall_time_s: float = 0.0

    def to_json(self, include_timing: bool = True) -> str:
        d = asdict(self)
        if not include_timing:
            d.pop("wall_time_s")
        return json.dumps(_jsonable(d), sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentRecord":
        d = dict(d)
        d["steps"] = [StepRecord(**s) for s in d.get("steps", [])]
        return cls(**d)

    def rows(self) -> List[dict]:
        cfg = self.config
        out = []
        for s in self.steps:
            out.append({
                "run_id": self.run_id, "model": cfg["model"], "dataset": cfg["dataset"],
                "criterion": cfg["criterion"], "regime": cfg["regime"]["kind"],
                "target_sparsity": s.target_sparsity, "achieved_sparsity": s.achieved_sparsity,
                "step": s.step, "epochs_used": s.epochs_used, "total_budget": self.total_budget,
                "val_metric": s.val_metric, "test_metric": s.test_metric, "seed": self.seed,
            })
        return out


def _jsonable(obj):
    # NaN is not valid JSON; records store it as null.
    if isinstance(obj, float):
        return None if math.isnan(obj) else obj
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def output_root(cfg: ExperimentConfig) -> Path:
    return Path(cfg.output_dir)


def _atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    tmp.write_bytes(data)
    os.replace(tmp, path)


# data and base model

def load_splits(cfg: ExperimentConfig) -> Tuple[Dataset, Dataset, Dataset]:
    ds = load_dataset(cfg.dataset, cache_dir=cfg.cache_dir, seed=cfg.data_seed)
    return split(ds, cfg.split)


def _base_key(cfg: ExperimentConfig, seed: int) -> str:
    ident = {"model": cfg.model, "dataset": cfg.dataset, "data_seed": cfg.data_seed, "split": asdict(cfg.split),
             "base": asdict(cfg.base), "metric": cfg.metric, "seed": seed}
    digest = hashlib.sha256(json.dumps(ident, sort_keys=True).encode()).hexdigest()[:10]
    return f"{cfg.model}-{cfg.dataset.replace(':', '_').replace('/', '_')}-s{seed}-{digest}"


def train_base(cfg: ExperimentConfig, seed: int, splits=None, force: bool = False) -> Tuple[Network, dict]:
    """Train (or load the cached) base network for ``(model, dataset, seed)``.

    Returns the network and a summary with its validation/test metrics.
    """
    train, val, test = splits or load_splits(cfg)
    root = output_root(cfg) / "base"
    key = _base_key(cfg, seed)
    ckpt, meta_path = root / f"{key}.prlb", root / f"{key}.json"
    if ckpt.exists() and meta_path.exists() and not force:
        return load_checkpoint(ckpt.read_bytes()), json.loads(meta_path.read_text())
    net = build_model(cfg.model, train.inputs.shape[1:], train.num_classes, seed)
    res = finetune(net, train, val, cfg.base.sgd, RetrainPolicy.fixed(cfg.base.epochs), seed=seed,
                   metric=cfg.metric, epoch_offset=0)
    payload = save_checkpoint(net)
    meta = {"key": key, "epochs": res.epochs_used, "best_epoch": res.best_epoch,
            "val_metric": evaluate(net, val), "test_metric": evaluate(net, test),
            "checkpoint_sha256": hashlib.sha256(payload).hexdigest()}
    _atomic_write(ckpt, payload)
    _atomic_write(meta_path, (json.dumps(meta, sort_keys=True, indent=1) + "\n").encode())
    return net, meta


# plans

def distribute_budget(plan: PruningPlan, budget: int) -> Optional[PruningPlan]:
    """Cap each step's retraining so the plan's total fits ``budget``.

    Uniform share per step, remainder to the last step. Hybrid plans give
    half the budget to the one-shot phase and split the rest over the
    geometric tail. Returns None when some step would get no epoch at all.
    """
    n = len(plan.steps)
    if plan.regime == "hybrid" and n > 1:
        tail = (budget // 2) // (n - 1)
        caps = [budget - tail * (n - 1)] + [tail] * (n - 1)
    else:
        each = budget // n
        caps = [each] * (n - 1) + [budget - each * (n - 1)]
    if min(caps) < 1:
        return None
    steps = []
    for s, cap in zip(plan.steps, caps):
        pol = s.policy
        pol = RetrainPolicy.fixed(min(pol.epochs, cap)) if pol.kind == "fixed" else replace(pol, max_epochs=cap)
        steps.append(replace(s, policy=pol))
    return replace(plan, steps=steps)


def _eval_batches(train: Dataset, cfg: ExperimentConfig, seed: int, step: int):
    order = make_rng(seed, EVAL, step).permutation(len(train))
    n = min(len(train), cfg.eval_batches * cfg.eval_batch_size)
    idx = order[:n]
    return [(train.inputs[idx[i:i + cfg.eval_batch_size]], train.labels[idx[i:i + cfg.eval_batch_size]])
            for i in range(0, n, cfg.eval_batch_size)]


def build_plan(cfg: ExperimentConfig, net: Network) -> PruningPlan:
    plan = cfg.regime.build(net.prunable_count())
    if cfg.budget is not None and cfg.budget_mode == "distribute":
        capped = distribute_budget(plan, cfg.budget)
        if capped is None:
            raise InfeasibleBudget(f"budget {cfg.budget} gives less than one epoch to some of {len(plan.steps)} steps")
        plan = capped
    return plan


class InfeasibleBudget(PrunelabError):
    pass


# single run

def run_experiment(cfg: ExperimentConfig, seed: Optional[int] = None, splits=None,
                   write: bool = True) -> ExperimentRecord:
    """Execute the regime's plan from the cached base network for one seed.

    Each step scores the current network, extends the mask to the step's
    cumulative count, applies it and fine-tunes per the step's policy.
    """
    seed = cfg.seeds[0] if seed is None else seed
    t0 = time.perf_counter()
    record = ExperimentRecord(cfg.run_id(seed), seed, cfg.to_dict())
    splits = splits or load_splits(cfg)
    train, val, test = splits
    if cfg.granularity == "channel":
        spec = StructuredRatioSpec(cfg.structured_ratios)
        # Inventories depend only on the architecture, so validate before any training.
        check_structured(build_model(cfg.model, train.inputs.shape[1:], train.num_classes, 0).inventory, spec)
    net, base_meta = train_base(cfg, seed, splits)
    record.base = base_meta
    try:
        plan = build_plan(cfg, net)
    except InfeasibleBudget as e:
        record.status, record.error = "infeasible", str(e)
        record.wall_time_s = time.perf_counter() - t0
        if write:
            save_record(cfg, record)
        return record
    record.plan = plan.to_dict()
    meter = BudgetMeter(cfg.budget)
    sgd = cfg.finetune_sgd
    mask = Mask.full(net)
    epoch_offset = 1000
    for i, step in enumerate(plan.steps, start=1):
        batches = None if cfg.criterion == "magnitude" else _eval_batches(train, cfg, seed, i)
        scores = compute_scores(net, cfg.criterion, cfg.granularity, batches)
        if cfg.granularity == "weight":
            mask = select_unstructured(scores, step.cumulative - mask.pruned, mask)
            target = step.cumulative / plan.total
        else:
            step_spec = spec.scaled(step.cumulative / plan.final_count)
            mask = select_structured(scores, step_spec, mask, net.inventory)
            target = overall_ratio(net.inventory, step_spec)
        apply_mask(net, mask)
        res = finetune(net, train, val, sgd, step.policy, meter, seed=seed, metric=cfg.metric,
                       epoch_offset=epoch_offset)
        epoch_offset += 1000
        record.steps.append(StepRecord(
            step=i, phase=step.phase, target_sparsity=target, achieved_sparsity=sparsity(net),
            pruned=mask.pruned, epochs_used=res.epochs_used, val_metric=evaluate(net, val),
            test_metric=evaluate(net, test), val_loss=evaluate(net, val, "loss"),
            budget_truncated=res.budget_truncated,
            history=[asdict(h) for h in res.history],
        ))
        record.budget_truncated |= res.budget_truncated
    record.total_budget = sum(s.epochs_used for s in record.steps)
    record.final_val_metric = record.steps[-1].val_metric
    record.final_test_metric = record.steps[-1].test_metric
    record.wall_time_s = time.perf_counter() - t0
    if write:
        save_record(cfg, record)
    return record


def record_path(cfg: ExperimentConfig, run_id: str) -> Path:
    return output_root(cfg) / "records" / f"{run_id}.json"


def save_record(cfg: ExperimentConfig, record: ExperimentRecord) -> Path:
    path = record_path(cfg, record.run_id)
    _atomic_write(path, record.to_json().encode())
    return path


def load_record(path) -> ExperimentRecord:
    return ExperimentRecord.from_dict(json.loads(Path(path).read_text()))


def load_records(directory) -> List[ExperimentRecord]:
    return [load_record(p) for p in sorted(Path(directory).glob("*.json"))]


# sweeps

def set_path(d: dict, dotted: str, value: Any) -> None:
    """Assign ``value`` at a dotted key path (``regime.target``) in a nested dict."""
    keys = dotted.split(".")
    for k in keys[:-1]:
        if d.get(k) is None:
            d[k] = {}
        d = d[k]
    d[keys[-1]] = value


def expand_grid(base: ExperimentConfig, grid: Dict[str, Sequence[Any]]) -> List[ExperimentConfig]:
    """Cartesian product of dotted-key value lists applied to ``base``."""
    if not grid:
        return [base]
    keys = sorted(grid)
    out = []
    for values in itertools.product(*(grid[k] for k in keys)):
        d = base.to_dict()
        for k, v in zip(keys, values):
            set_path(d, k, v)
        out.append(ExperimentConfig.from_dict(d))
    return out


def _run_cell(args) -> Tuple[str, str]:
    cfg_dict, seed = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    try:
        rec = run_experiment(cfg, seed)
        return rec.run_id, rec.status
    except Exception as e:  # noqa: BLE001 - a failed cell must not stop the sweep
        rec = ExperimentRecord(cfg.run_id(seed), seed, cfg.to_dict(), status="failed",
                               error=f"{type(e).__name__}: {e}\n{traceback.format_exc(limit=5)}")
        save_record(cfg, rec)
        return rec.run_id, "failed"


def run_sweep(configs: Sequence[ExperimentConfig], workers: int = 1, retry_failed: bool = False,
              progress=None) -> List[ExperimentRecord]:
    """Run every (config, seed) cell, skipping cells whose record already exists.

    Failed cells are recorded with their error and the sweep continues.
    Records are returned in cell order regardless of execution order.
    """
    if not configs:
        raise InputError("sweep grid is empty")
    cells, todo = [], []
    for cfg in configs:
        for seed in cfg.seeds:
            path = record_path(cfg, cfg.run_id(seed))
            cells.append(path)
            if path.exists():
                if not retry_failed or load_record(path).status != "failed":
                    continue
            todo.append((cfg.to_dict(), seed))
    if workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for run_id, status in pool.map(_run_cell, todo):
                if progress:
                    progress(run_id, status)
    else:
        for args in todo:
            run_id, status = _run_cell(args)
            if progress:
                progress(run_id, status)
    return [load_record(p) for p in cells]


# fixed-budget comparison

@dataclass
class BudgetCell:
    regime: str
    target: float
    budget: int
    feasible: bool
    n_seeds: int
    mean_test: float
    std_test: float
    mean_val: float
    mean_epochs: float


def fixed_budget_compare(base: ExperimentConfig, regimes: Sequence[RegimeConfig], budgets: Sequence[int],
                         workers: int = 1, progress=None) -> List[BudgetCell]:
    """Best accuracy per (regime, budget) with total retraining epochs <= budget.

    Each regime's plan gets its budget split across steps (see
    :func:`distribute_budget`); patience still ends a phase early.
    """
    if not budgets or min(budgets) < 1:
        raise InputError("budgets must be positive")
    configs = []
    for reg in regimes:
        for b in budgets:
            configs.append(replace(base, regime=reg, budget=int(b), budget_mode="distribute"))
    records = run_sweep(configs, workers=workers, progress=progress)
    table = []
    per = len(base.seeds)
    for i, cfg in enumerate(configs):
        recs = records[i * per:(i + 1) * per]
        ok = [r for r in recs if r.status == "ok"]
        feasible = bool(ok) and len(ok) == len(recs)
        tests = np.array([r.final_test_metric for r in ok]) if ok else np.array([math.nan])
        table.append(BudgetCell(
            cfg.regime.kind, cfg.regime.target, cfg.budget, feasible, len(ok),
            float(tests.mean()) if ok else math.nan, float(tests.std()) if ok else math.nan,
            float(np.mean([r.final_val_metric for r in ok])) if ok else math.nan,
            float(np.mean([r.total_budget for r in ok])) if ok else math.nan,
        ))
    return table


# results CSV

def result_rows(records: Iterable[ExperimentRecord]) -> List[dict]:
    rows = []
    for r in records:
        if r.status == "ok":
            rows.extend(r.rows())
    return rows


def write_results_csv(records: Iterable[ExperimentRecord], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=RESULT_COLUMNS)
        w.writeheader()
        for row in result_rows(records):
            w.writerow(row)
    return path
