"""Training and fine-tuning phases with patience-based early stopping."""

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, TextIO

import numpy as np

from .data import Dataset, batches
from .errors import InputError
from .nn import Network, SGDConfig, accuracy, cross_entropy_loss, sgd_step
from .schedules import RetrainPolicy


@dataclass
class EarlyStopper:
    """Early-stopping check.

    For ``lower_is_better`` an observation strictly below the best value is an
    improvement (best updated, counter reset); one strictly above
    ``best + min_delta`` increments the counter; anything in between changes
    nothing, including a value equal to the best. ``higher_is_better`` mirrors
    both comparisons. The check fires once ``counter >= patience``.
    """

    patience: int
    min_delta: float = 0.0
    mode: str = "lower_is_better"
    best_metric_value: float = field(default=math.nan)
    counter: int = 0

    def __post_init__(self):
        if self.patience < 1:
            raise InputError(f"patience must be >= 1, got {self.patience}")
        if self.min_delta < 0:
            raise InputError(f"min_delta must be >= 0, got {self.min_delta}")
        if self.mode not in ("lower_is_better", "higher_is_better"):
            raise InputError(f"unknown mode {self.mode!r}")
        if math.isnan(self.best_metric_value):
            self.best_metric_value = math.inf if self.mode == "lower_is_better" else -math.inf

    def check(self, metric_value: float) -> bool:
        if self.mode == "lower_is_better":
            if metric_value < self.best_metric_value:
                self.best_metric_value = metric_value
                self.counter = 0
            elif metric_value > self.best_metric_value + self.min_delta:
                self.counter += 1
        else:
            if metric_value > self.best_metric_value:
                self.best_metric_value = metric_value
                self.counter = 0
            elif metric_value < self.best_metric_value - self.min_delta:
                self.counter += 1
        return self.counter >= self.patience


def early_stop_check(state: EarlyStopper, metric_value: float) -> bool:
    return state.check(metric_value)


@dataclass
class BudgetMeter:
    """Counts retraining epochs, optionally against a hard cap."""

    cap: Optional[int] = None
    epochs_used: int = 0

    @property
    def remaining(self) -> Optional[int]:
        return None if self.cap is None else max(0, self.cap - self.epochs_used)

    @property
    def exhausted(self) -> bool:
        return self.cap is not None and self.epochs_used >= self.cap

    def charge(self, epochs: int = 1) -> None:
        if epochs < 0:
            raise InputError("cannot refund epochs")
        self.epochs_used += epochs


def finetune_lr(base_lr: float) -> float:
    """Fine-tuning runs at a tenth of the original training learning rate."""
    if not base_lr > 0:
        raise InputError(f"base learning rate must be > 0, got {base_lr}")
    return base_lr / 10.0


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    val_metric: float
    lr: float


@dataclass
class FinetuneResult:
    best_net: Network
    epochs_used: int
    history: List[EpochLog]
    best_epoch: int
    best_metric: float
    budget_truncated: bool = False

    def history_jsonl(self) -> str:
        return "".join(json.dumps(asdict(h), sort_keys=True) + "\n" for h in self.history)


def evaluate(net: Network, data: Dataset, metric: str = "accuracy") -> float:
    logits = net.predict(data.inputs)
    if metric == "accuracy":
        return accuracy(logits, data.labels)
    if metric == "loss":
        return cross_entropy_loss(logits, data.labels)[0]
    raise InputError(f"unknown metric {metric!r}")


def train_epoch(net: Network, data: Dataset, sgd: SGDConfig, seed: int, epoch: int) -> float:
    """One pass of minibatch SGD; returns the mean training loss."""
    total = 0.0
    for x, y in batches(data, sgd.batch_size, seed=seed, shuffle=True, epoch=epoch):
        logits = net.forward(x)
        loss, grad = cross_entropy_loss(logits, y)
        net.zero_grad()
        net.backward(grad)
        sgd_step(net, sgd)
        total += loss * len(y)
    net.zero_grad()
    return total / len(data)


def finetune(net: Network, train: Dataset, val: Dataset, sgd: SGDConfig, policy: RetrainPolicy,
             meter: Optional[BudgetMeter] = None, seed: int = 0, metric: str = "accuracy",
             epoch_offset: int = 0, log: Optional[TextIO] = None) -> FinetuneResult:
    """Run one training phase and leave ``net`` holding its best checkpoint.

    ``fixed`` policies run exactly ``policy.epochs`` epochs; ``patience``
    policies run until the early stopper fires or ``policy.max_epochs`` is
    reached. Either mode also stops when ``meter`` runs out. The returned
    network is the epoch with the best validation metric (earliest on ties);
    a phase of zero epochs returns ``net`` unchanged.

    ``epoch_offset`` shifts the shuffle stream so consecutive phases see
    different batch orders.
    """
    meter = meter or BudgetMeter()
    mode = "higher_is_better" if metric == "accuracy" else "lower_is_better"
    stopper = EarlyStopper(policy.patience, policy.min_delta, mode) if policy.kind == "patience" else None
    limit = policy.epochs if policy.kind == "fixed" else policy.max_epochs
    net.reset_velocity()
    history: List[EpochLog] = []
    best_state: Optional[Dict[str, np.ndarray]] = None
    best_metric, best_epoch = math.nan, 0
    truncated = False
    better = (lambda a, b: a > b) if mode == "higher_is_better" else (lambda a, b: a < b)
    for epoch in range(1, limit + 1):
        if meter.exhausted:
            truncated = True
            break
        train_loss = train_epoch(net, train, sgd, seed, epoch_offset + epoch)
        meter.charge(1)
        value = evaluate(net, val, metric)
        entry = EpochLog(epoch, train_loss, value, sgd.learning_rate)
        history.append(entry)
        if log is not None:
            log.write(json.dumps(asdict(entry), sort_keys=True) + "\n")
        if best_state is None or better(value, best_metric):
            best_state, best_metric, best_epoch = net.state(), value, epoch
        if stopper is not None and stopper.check(value):
            break
    if best_state is not None:
        net.load_state(best_state)
    net.reset_velocity()
    return FinetuneResult(net, len(history), history, best_epoch, best_metric, truncated)
