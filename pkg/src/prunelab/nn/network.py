from collections import OrderedDict
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import ConfigurationError, StateError
from ..rng import INIT, make_rng
from .layers import PARAMETRIC_KINDS, Layer, LayerSpec, build_layer
from .tensor import Tensor


@dataclass(frozen=True)
class LayerRecord:
    """Inventory entry for one parametric layer.

    ``successor`` names the next parametric layer whose input slice ``c`` is
    coupled to this layer's output channel ``c``; ``per_channel`` is the width
    of that slice in the successor's input features (1 for conv/dense inputs,
    H*W when a flatten sits in between).
    """

    name: str
    group: str
    kind: str
    in_channels: int
    out_channels: int
    kernel: int
    weight_count: int
    bias_count: int
    successor: Optional[str]
    per_channel: int

    @property
    def parameter_count(self) -> int:
        return self.weight_count + self.bias_count

    @property
    def weights_per_out_channel(self) -> int:
        return self.weight_count // self.out_channels


def build_inventory(specs: Sequence[Tuple[LayerSpec, Tuple[int, ...]]]) -> List[LayerRecord]:
    """Inventory from ``(spec, input_shape)`` pairs of a sequential network."""
    param_idx = [i for i, (s, _) in enumerate(specs) if s.kind in PARAMETRIC_KINDS]
    records = []
    for pos, i in enumerate(param_idx):
        spec, _ = specs[i]
        k = spec.kernel if spec.kind == "conv2d" else 1
        weight_count = spec.out_channels * spec.in_channels * k * k
        successor, per_channel = None, 0
        if pos + 1 < len(param_idx):
            j = param_idx[pos + 1]
            nxt, nxt_in = specs[j]
            successor = nxt.name
            if nxt.kind == "conv2d":
                per_channel = 1
            else:
                per_channel = int(np.prod(nxt_in)) // spec.out_channels
        records.append(LayerRecord(
            name=spec.name, group=spec.group or spec.name, kind=spec.kind,
            in_channels=spec.in_channels, out_channels=spec.out_channels, kernel=k,
            weight_count=weight_count, bias_count=spec.out_channels if spec.has_bias else 0,
            successor=successor, per_channel=per_channel,
        ))
    return records


class Network:
    """Sequential network over the fixed layer set.

    Args:
        specs: layer specifications in order.
        input_shape: per-sample input shape, e.g. ``(2,)`` or ``(1, 16, 16)``.
        seed: initialization seed.
    """

    def __init__(self, specs: Sequence[LayerSpec], input_shape: Sequence[int], seed: int = 0):
        self.input_shape = tuple(int(d) for d in input_shape)
        self.seed = seed
        rng = make_rng(seed, INIT)
        named = []
        counts: Dict[str, int] = {}
        for spec in specs:
            if spec.kind in PARAMETRIC_KINDS and not spec.name:
                counts[spec.kind] = counts.get(spec.kind, 0) + 1
                prefix = "fc" if spec.kind == "dense" else "conv"
                spec = LayerSpec(**{**spec.to_dict(), "name": f"{prefix}{counts[spec.kind]}"})
            named.append(spec)
        names = [s.name for s in named if s.kind in PARAMETRIC_KINDS]
        if len(set(names)) != len(names):
            raise ConfigurationError(f"duplicate layer names: {names}")
        self.specs: List[LayerSpec] = named
        self.layers: List[Layer] = [build_layer(s, i, rng) for i, s in enumerate(named)]
        if self.layers:
            self.layers[0].need_input_grad = False

        shape = self.input_shape
        shapes = []
        for layer in self.layers:
            shapes.append(shape)
            shape = layer.output_shape(shape)
        if len(shape) != 1:
            raise ConfigurationError(f"network output must be [batch, classes], got per-sample shape {list(shape)}")
        self.output_shape = shape
        self._in_shapes = shapes
        self.inventory: List[LayerRecord] = build_inventory(list(zip(named, shapes)))
        self.masks: Dict[str, np.ndarray] = {}
        self._forward_done = False

    # parameters

    def params(self) -> "OrderedDict[str, Tensor]":
        out = OrderedDict()
        for layer in self.layers:
            for pname, t in layer.params().items():
                out[f"{layer.spec.name}.{pname}"] = t
        return out

    def weight_names(self) -> List[str]:
        """Names of prunable tensors (weights of dense/conv layers; biases excluded)."""
        return [f"{r.name}.weight" for r in self.inventory]

    @property
    def num_classes(self) -> int:
        return self.output_shape[0]

    def prunable_count(self) -> int:
        return sum(r.weight_count for r in self.inventory)

    def flat(self) -> np.ndarray:
        return np.concatenate([t.values.ravel() for t in self.params().values()])

    def set_flat(self, vec: np.ndarray) -> None:
        vec = np.asarray(vec, dtype=np.float64)
        offset = 0
        for t in self.params().values():
            t.values[...] = vec[offset:offset + t.size].reshape(t.shape)
            offset += t.size
        if offset != vec.size:
            raise ValueError(f"flat vector has {vec.size} entries, network has {offset}")

    def state(self) -> Dict[str, np.ndarray]:
        return {k: t.values.copy() for k, t in self.params().items()}

    def load_state(self, state: Dict[str, np.ndarray]) -> None:
        params = self.params()
        if set(state) != set(params):
            raise StateError("state keys do not match network parameters")
        for k, t in params.items():
            t.values[...] = state[k]

    def zero_grad(self) -> None:
        for t in self.params().values():
            t.grad = None
            t.sq_grad = None

    def reset_velocity(self) -> None:
        for t in self.params().values():
            t.velocity = None

    def clone(self) -> "Network":
        other = Network(self.specs, self.input_shape, self.seed)
        other.load_state(self.state())
        other.masks = {k: v.copy() for k, v in self.masks.items()}
        return other

    # computation

    def forward(self, x) -> np.ndarray:
        x = x.values if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)
        if x.shape[1:] != self.input_shape:
            raise ConfigurationError(
                f"layer 0 ({self.specs[0].kind}): expected input shape "
                f"[batch, {', '.join(map(str, self.input_shape))}], got {list(x.shape)}"
            )
        for layer in self.layers:
            x = layer.forward(x)
        self._forward_done = True
        self._batch = x.shape[0]
        return x

    def backward(self, loss_grad, per_sample_scale: Optional[float] = None) -> None:
        """Accumulate parameter gradients for ``loss_grad`` (d loss / d logits).

        With ``per_sample_scale`` set, also accumulate per-sample squared
        gradients into ``Tensor.sq_grad``; the scale converts a row of the
        mean-loss gradient into the gradient of that sample's own loss.
        """
        if not self._forward_done:
            raise StateError("backward called without a preceding forward")
        dy = loss_grad.values if isinstance(loss_grad, Tensor) else np.asarray(loss_grad, dtype=np.float64)
        if dy.shape != (self._batch,) + self.output_shape:
            raise ConfigurationError(f"loss_grad shape {list(dy.shape)} does not match logits")
        self._forward_done = False
        for layer in reversed(self.layers):
            dy = layer.backward(dy, per_sample_scale)

    def predict(self, x: np.ndarray, batch_size: int = 1024) -> np.ndarray:
        out = [self.forward(x[i:i + batch_size]) for i in range(0, len(x), batch_size)]
        self._forward_done = False
        for layer in self.layers:
            layer._cache = None
        return np.concatenate(out)


def forward(net: Network, batch) -> np.ndarray:
    return net.forward(batch)


def backward(net: Network, loss_grad) -> None:
    net.backward(loss_grad)
