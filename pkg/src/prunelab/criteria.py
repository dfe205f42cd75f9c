"""Importance scores: magnitude, first-order Taylor, and OBD saliency.

Scores are computed for prunable weights only (biases are never scored). At
``channel`` granularity a layer gets one score per output channel; the
classifier layer is excluded because its outputs are the classes.
"""

import json
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Tuple

import numpy as np

from .errors import InputError
from .nn import Network, cross_entropy_loss

LossFn = Callable[[np.ndarray, np.ndarray], Tuple[float, np.ndarray]]
Batch = Tuple[np.ndarray, np.ndarray]

DEFAULT_EVAL_BATCHES = 4


@dataclass(frozen=True)
class ScoreMap:
    """Per-layer non-negative scores keyed by parameter name (``fc1.weight``)."""

    scores: Dict[str, np.ndarray]
    criterion: str
    granularity: str
    n_batches: int = 0
    meta: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        for name, s in self.scores.items():
            if not np.all(np.isfinite(s)) or (s.size and s.min() < 0):
                raise ValueError(f"scores for {name} must be finite and non-negative")

    def scaled(self, c: float) -> "ScoreMap":
        return ScoreMap({k: v * c for k, v in self.scores.items()}, self.criterion, self.granularity,
                        self.n_batches, dict(self.meta))

    def to_json(self) -> str:
        return json.dumps({
            "criterion": self.criterion,
            "granularity": self.granularity,
            "n_batches": self.n_batches,
            "scores": {k: v.ravel().tolist() for k, v in self.scores.items()},
        }, sort_keys=True)


def channel_layers(net: Network) -> List[str]:
    """Weight names whose output channels may be removed (all but the classifier)."""
    return [f"{r.name}.weight" for r in net.inventory[:-1]]


def _per_channel(w: np.ndarray) -> np.ndarray:
    return w.reshape(w.shape[0], -1)


def _check_granularity(granularity: str) -> None:
    if granularity not in ("weight", "channel"):
        raise InputError(f"granularity must be 'weight' or 'channel', got {granularity!r}")


def magnitude_scores(net: Network, norm: str = "L1", granularity: str = "weight") -> ScoreMap:
    """Weight granularity: ``|w|`` (L1) or ``w**2`` (L2). Channel granularity:
    L1 or L2 norm of each output channel's weight slice."""
    _check_granularity(granularity)
    if norm not in ("L1", "L2"):
        raise InputError(f"norm must be 'L1' or 'L2', got {norm!r}")
    params = net.params()
    out = {}
    if granularity == "weight":
        for name in net.weight_names():
            w = params[name].values
            out[name] = np.abs(w) if norm == "L1" else w * w
    else:
        for name in channel_layers(net):
            w = _per_channel(params[name].values)
            out[name] = np.abs(w).sum(axis=1) if norm == "L1" else np.sqrt((w * w).sum(axis=1))
    return ScoreMap(out, f"magnitude_{norm.lower()}", granularity)


def _reduce(net: Network, per_weight: Dict[str, np.ndarray], granularity: str) -> Dict[str, np.ndarray]:
    if granularity == "weight":
        return per_weight
    # Channel score is the sum over the channel's weights.
    return {name: _per_channel(per_weight[name]).sum(axis=1) for name in channel_layers(net)}


def _batch_gradients(net: Network, batch: Batch, loss_fn: LossFn, per_sample: bool = False) -> None:
    x, y = batch
    net.zero_grad()
    logits = net.forward(x)
    _, grad = loss_fn(logits, y)
    net.backward(grad, per_sample_scale=float(len(x)) if per_sample else None)


def _materialize(data: Iterable[Batch]) -> List[Batch]:
    data = list(data)
    if not data:
        raise InputError("criterion evaluation needs at least one batch")
    return data


def taylor_scores(net: Network, data: Iterable[Batch], granularity: str = "weight",
                  loss_fn: LossFn = cross_entropy_loss) -> ScoreMap:
    """``(g * w)**2`` per weight, averaged over the evaluation batches.

    ``g`` is the gradient of the batch-mean loss for each batch. Gradient
    buffers of ``net`` are overwritten.
    """
    _check_granularity(granularity)
    data = _materialize(data)
    names = net.weight_names()
    params = net.params()
    acc = {n: np.zeros(params[n].shape) for n in names}
    for batch in data:
        _batch_gradients(net, batch, loss_fn)
        for n in names:
            gw = params[n].grad * params[n].values
            acc[n] += gw * gw
    net.zero_grad()
    per_weight = {n: a / len(data) for n, a in acc.items()}
    return ScoreMap(_reduce(net, per_weight, granularity), "taylor", granularity, len(data))


def fisher_diagonal(net: Network, data: Iterable[Batch], loss_fn: LossFn = cross_entropy_loss) -> Dict[str, np.ndarray]:
    """Empirical Fisher diagonal: mean over samples of squared per-sample gradients."""
    data = _materialize(data)
    names = net.weight_names()
    params = net.params()
    acc = {n: np.zeros(params[n].shape) for n in names}
    count = 0
    for batch in data:
        _batch_gradients(net, batch, loss_fn, per_sample=True)
        for n in names:
            acc[n] += params[n].sq_grad
        count += len(batch[1])
    net.zero_grad()
    return {n: a / count for n, a in acc.items()}


def _mean_loss(net: Network, data: List[Batch], loss_fn: LossFn) -> float:
    total, count = 0.0, 0
    for x, y in data:
        loss, _ = loss_fn(net.predict(x), y)
        total += loss * len(y)
        count += len(y)
    return total / count


def exact_hessian_diagonal(net: Network, data: Iterable[Batch], loss_fn: LossFn = cross_entropy_loss,
                           h: float = 1e-4, max_params: int = 1000) -> Dict[str, np.ndarray]:
    """Central second differences of the mean loss along each weight axis.

    Verification oracle for small nets only (cost is two loss evaluations per weight).
    """
    data = _materialize(data)
    params = net.params()
    names = net.weight_names()
    total = sum(params[n].size for n in names)
    if total > max_params:
        raise InputError(f"exact Hessian diagonal limited to {max_params} weights, net has {total}")
    base = _mean_loss(net, data, loss_fn)
    out = {}
    for n in names:
        flat = params[n].values.reshape(-1)
        d = np.empty(flat.size)
        for i in range(flat.size):
            w0 = flat[i]
            flat[i] = w0 + h
            lp = _mean_loss(net, data, loss_fn)
            flat[i] = w0 - h
            lm = _mean_loss(net, data, loss_fn)
            flat[i] = w0
            d[i] = (lp - 2 * base + lm) / (h * h)
        out[n] = d.reshape(params[n].shape)
    return out


def obd_scores(net: Network, data: Iterable[Batch], granularity: str = "weight",
               hessian: str = "fisher", loss_fn: LossFn = cross_entropy_loss) -> ScoreMap:
    """OBD saliency ``0.5 * h_kk * w_k**2``.

    ``hessian="fisher"`` uses the empirical Fisher diagonal; ``"exact"`` uses
    finite differences (small nets only). Negative curvature estimates from
    the exact path are clipped at zero.
    """
    _check_granularity(granularity)
    data = _materialize(data)
    if hessian == "fisher":
        diag = fisher_diagonal(net, data, loss_fn)
    elif hessian == "exact":
        diag = exact_hessian_diagonal(net, data, loss_fn)
    else:
        raise InputError(f"hessian must be 'fisher' or 'exact', got {hessian!r}")
    params = net.params()
    per_weight = {n: 0.5 * np.maximum(d, 0.0) * params[n].values ** 2 for n, d in diag.items()}
    return ScoreMap(_reduce(net, per_weight, granularity), "obd", granularity, len(data), {"hessian": hessian})


CRITERIA = ("magnitude", "taylor", "obd")


def compute_scores(net: Network, criterion: str, granularity: str, data: Optional[Iterable[Batch]] = None,
                   norm: Optional[str] = None) -> ScoreMap:
    if criterion == "magnitude":
        return magnitude_scores(net, norm or ("L1" if granularity == "weight" else "L2"), granularity)
    if data is None:
        raise InputError(f"criterion {criterion!r} needs evaluation batches")
    if criterion == "taylor":
        return taylor_scores(net, data, granularity)
    if criterion == "obd":
        return obd_scores(net, data, granularity)
    raise InputError(f"unknown criterion {criterion!r}")


def scores_from_json(text: str) -> Dict[str, List[float]]:
    return json.loads(text)["scores"]
