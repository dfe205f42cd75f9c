"""Turning scores into masks.

Unstructured selection is global across layers. Structured selection removes
whole output channels per layer at a per-group ratio and propagates each
removal into the coupled input slice of the successor layer.
"""

import base64
import json
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Union

import numpy as np

from .criteria import ScoreMap
from .errors import ConfigurationError, InputError, StateError
from .nn import LayerRecord, Network


@dataclass
class Mask:
    """Boolean keep-masks keyed by parameter name; False marks a pruned position.

    Only ``*.weight`` entries are counted as prunable; bias entries appear when
    structured pruning kills a whole channel.
    """

    arrays: Dict[str, np.ndarray]

    @classmethod
    def full(cls, net: Network) -> "Mask":
        params = net.params()
        return cls({n: np.ones(params[n].shape, dtype=bool) for n in net.weight_names()})

    @classmethod
    def from_net(cls, net: Network) -> "Mask":
        base = cls.full(net)
        for name, m in net.masks.items():
            base.arrays[name] = m.copy()
        return base

    def copy(self) -> "Mask":
        return Mask({k: v.copy() for k, v in self.arrays.items()})

    def _weights(self):
        return [v for k, v in self.arrays.items() if k.endswith(".weight")]

    @property
    def kept(self) -> int:
        return int(sum(v.sum() for v in self._weights()))

    @property
    def pruned(self) -> int:
        return int(sum(v.size - v.sum() for v in self._weights()))

    @property
    def total(self) -> int:
        return int(sum(v.size for v in self._weights()))

    def to_json(self) -> str:
        return json.dumps({
            k: {"shape": list(v.shape), "bits": base64.b64encode(np.packbits(v.ravel(), bitorder="little")).decode()}
            for k, v in self.arrays.items()
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Mask":
        out = {}
        for k, d in json.loads(text).items():
            size = int(np.prod(d["shape"]))
            bits = np.frombuffer(base64.b64decode(d["bits"]), dtype=np.uint8)
            out[k] = np.unpackbits(bits, count=size, bitorder="little").astype(bool).reshape(d["shape"])
        return cls(out)


@dataclass(frozen=True)
class StructuredRatioSpec:
    """Per-group fraction of output channels to remove, e.g. ``{"conv1": 0.2}``.

    Groups absent from ``ratios`` are left untouched.
    """

    ratios: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        for g, r in self.ratios.items():
            if not 0 <= r < 1:
                raise ConfigurationError(f"channel prune fraction for {g!r} must be in [0, 1), got {r}")

    def ratio(self, group: str) -> float:
        return self.ratios.get(group, 0.0)

    def scaled(self, factor: float) -> "StructuredRatioSpec":
        return StructuredRatioSpec({g: r * factor for g, r in self.ratios.items()})


def select_unstructured(scores: ScoreMap, count: int, existing: Mask) -> Mask:
    """Prune ``count`` more kept weights with the globally lowest scores.

    Ties break by (layer order, flat index) ascending.
    """
    if scores.granularity != "weight":
        raise InputError("unstructured selection needs weight-granularity scores")
    names = [n for n in scores.scores if n in existing.arrays]
    kept_scores, owners, flat_idx = [], [], []
    for li, n in enumerate(names):
        keep = existing.arrays[n].ravel()
        idx = np.flatnonzero(keep)
        kept_scores.append(scores.scores[n].ravel()[idx])
        owners.append(np.full(idx.size, li))
        flat_idx.append(idx)
    s = np.concatenate(kept_scores) if kept_scores else np.empty(0)
    if count < 0 or count > s.size:
        raise InputError(f"cannot prune {count} weights: {s.size} prunable weights remain")
    out = existing.copy()
    if count == 0:
        return out
    # Candidates are laid out in (layer, flat) order, so a stable sort on the
    # score alone realizes the tie-break.
    order = np.argsort(s, kind="stable")[:count]
    own = np.concatenate(owners)[order]
    fid = np.concatenate(flat_idx)[order]
    for li, n in enumerate(names):
        sel = fid[own == li]
        if sel.size:
            arr = out.arrays[n].reshape(-1)
            arr[sel] = False
    return out


def _kept_channels(mask: Mask, name: str) -> np.ndarray:
    m = mask.arrays[name]
    return m.reshape(m.shape[0], -1).any(axis=1)


def check_collapse(inventory: Sequence[LayerRecord], spec: StructuredRatioSpec) -> None:
    """Reject specs that would leave any layer with zero output channels."""
    for rec in inventory:
        n_prune = int(np.floor(spec.ratio(rec.group) * rec.out_channels + 1e-9))
        if rec.out_channels - n_prune < 1:
            raise ConfigurationError(
                f"pruning collapse: ratio {spec.ratio(rec.group)} removes all {rec.out_channels} "
                f"channels of layer {rec.name!r}"
            )


def check_structured(inventory: Sequence[LayerRecord], spec: StructuredRatioSpec) -> None:
    """Collapse guard plus the rule that classifier outputs stay intact."""
    check_collapse(inventory, spec)
    head = inventory[-1]
    if spec.ratio(head.group) > 0:
        raise ConfigurationError(f"classifier layer {head.name!r} outputs are classes and cannot be pruned")


def select_structured(scores: ScoreMap, spec: StructuredRatioSpec, existing: Mask,
                      inventory: Sequence[LayerRecord]) -> Mask:
    """Remove ``floor(ratio * original_channels)`` output channels per layer.

    Counts are cumulative: channels already removed count toward the layer's
    quota and the lowest-scoring remaining channels fill the rest.
    """
    if scores.granularity != "channel":
        raise InputError("structured selection needs channel-granularity scores")
    check_structured(inventory, spec)
    by_name = {r.name: r for r in inventory}
    out = existing.copy()
    for rec in inventory[:-1]:
        wname = f"{rec.name}.weight"
        quota = int(np.floor(spec.ratio(rec.group) * rec.out_channels + 1e-9))
        alive = _kept_channels(out, wname)
        extra = quota - int((~alive).sum())
        if extra <= 0:
            continue
        cand = np.flatnonzero(alive)
        order = np.argsort(scores.scores[wname][cand], kind="stable")[:extra]
        dead = cand[order]
        out.arrays[wname][dead] = False
        bname = f"{rec.name}.bias"
        if rec.bias_count:
            if bname not in out.arrays:
                out.arrays[bname] = np.ones(rec.out_channels, dtype=bool)
            out.arrays[bname][dead] = False
        if rec.successor is not None:
            succ = f"{by_name[rec.successor].name}.weight"
            sm = out.arrays[succ]
            for c in dead:
                sm[:, c * rec.per_channel:(c + 1) * rec.per_channel] = False
    return out


def apply_mask(net: Network, mask: Mask) -> None:
    """Attach ``mask`` to ``net`` and zero pruned weights and their velocities."""
    params = net.params()
    for name, m in mask.arrays.items():
        if name not in params:
            raise StateError(f"mask entry {name!r} matches no parameter")
        if m.shape != params[name].shape:
            raise StateError(f"mask for {name!r} has shape {m.shape}, parameter has {params[name].shape}")
    for name, m in mask.arrays.items():
        t = params[name]
        m = m.astype(bool, copy=True)
        net.masks[name] = m
        t.values[~m] = 0.0
        if t.velocity is not None:
            t.velocity[~m] = 0.0


def sparsity(obj: Union[Network, Mask]) -> float:
    """Fraction of prunable weights that are pruned."""
    mask = Mask.from_net(obj) if isinstance(obj, Network) else obj
    return mask.pruned / mask.total if mask.total else 0.0


def overall_ratio(inventory: Sequence[LayerRecord], spec: StructuredRatioSpec) -> float:
    """Predicted fraction of weights removed by ``spec``.

    A layer keeps ``kept_out * kept_in * (k*k or per-channel width)`` weights,
    where ``kept_in`` follows from its predecessor's removed channels. Every
    layer in ``inventory`` honors its group's ratio, so an inventory that
    ends in a classifier should leave that group out. Biases are not
    counted.
    """
    check_collapse(inventory, spec)
    kept_out = {}
    for rec in inventory:
        kept_out[rec.name] = rec.out_channels - int(np.floor(spec.ratio(rec.group) * rec.out_channels + 1e-9))
    total = removed = 0
    prev: Optional[LayerRecord] = None
    for rec in inventory:
        per_out = rec.weights_per_out_channel
        if prev is None:
            kept_per_out = per_out
        else:
            kept_in = kept_out[prev.name] * prev.per_channel
            kept_per_out = kept_in * (per_out // (prev.out_channels * prev.per_channel))
        kept = kept_out[rec.name] * kept_per_out
        total += rec.weight_count
        removed += rec.weight_count - kept
        prev = rec
    return removed / total
