"""Layer kinds supported by the engine.

Every layer caches what it needs during ``forward`` and consumes the cache in
``backward``. Parametric layers store ``weight`` (and optionally ``bias``) as
:class:`Tensor` objects; dense weights are ``[out, in]``, conv weights are
``[out, in, k, k]``.
"""

from dataclasses import asdict, dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from ..errors import ConfigurationError, StateError
from .tensor import Tensor

LAYER_KINDS = ("dense", "conv2d", "relu", "maxpool2x2", "flatten")
PARAMETRIC_KINDS = ("dense", "conv2d")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    in_channels: int = 0
    out_channels: int = 0
    kernel: int = 0
    has_bias: bool = True
    padding: int = 0
    name: str = ""
    # Structured-pruning group the layer belongs to (defaults to its name).
    group: str = ""

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ConfigurationError(f"unknown layer kind {self.kind!r}")
        if self.kind in PARAMETRIC_KINDS:
            if self.in_channels < 1 or self.out_channels < 1:
                raise ConfigurationError(f"{self.kind} needs positive in/out channels")
            if self.kind == "conv2d" and self.kernel < 1:
                raise ConfigurationError("conv2d needs a positive kernel size")

    def to_dict(self) -> dict:
        return asdict(self)


def dense(n_in: int, n_out: int, bias: bool = True, name: str = "", group: str = "") -> LayerSpec:
    return LayerSpec("dense", n_in, n_out, has_bias=bias, name=name, group=group)


def conv2d(c_in: int, c_out: int, kernel: int, padding: int = 0, bias: bool = True,
           name: str = "", group: str = "") -> LayerSpec:
    return LayerSpec("conv2d", c_in, c_out, kernel, bias, padding, name, group)


def relu() -> LayerSpec:
    return LayerSpec("relu")


def maxpool2x2() -> LayerSpec:
    return LayerSpec("maxpool2x2")


def flatten() -> LayerSpec:
    return LayerSpec("flatten")


class Layer:
    spec: LayerSpec
    index: int
    # The network clears this on its first layer, whose input gradient is unused.
    need_input_grad: bool = True

    def __init__(self, spec: LayerSpec, index: int):
        self.spec = spec
        self.index = index
        self._cache = None

    def params(self) -> Dict[str, Tensor]:
        return {}

    def output_shape(self, in_shape: Tuple[int, ...]) -> Tuple[int, ...]:
        return in_shape

    def _check(self, x: np.ndarray, expected: Tuple[int, ...]) -> None:
        if x.shape[1:] != expected:
            raise ConfigurationError(
                f"layer {self.index} ({self.spec.kind}): expected input shape "
                f"[batch, {', '.join(map(str, expected))}], got {list(x.shape)}"
            )

    def _pop_cache(self):
        if self._cache is None:
            raise StateError(f"layer {self.index} ({self.spec.kind}): backward called without forward")
        cache, self._cache = self._cache, None
        return cache

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray, per_sample_scale: Optional[float] = None) -> np.ndarray:
        raise NotImplementedError


class Dense(Layer):
    def __init__(self, spec: LayerSpec, index: int, rng: np.random.Generator):
        super().__init__(spec, index)
        bound = np.sqrt(6.0 / spec.in_channels)
        self.weight = Tensor(rng.uniform(-bound, bound, size=(spec.out_channels, spec.in_channels)))
        self.bias = Tensor.zeros((spec.out_channels,)) if spec.has_bias else None

    def params(self):
        out = {"weight": self.weight}
        if self.bias is not None:
            out["bias"] = self.bias
        return out

    def output_shape(self, in_shape):
        if in_shape != (self.spec.in_channels,):
            raise ConfigurationError(
                f"layer {self.index} (dense): expects {self.spec.in_channels} features, "
                f"previous layer produces shape {list(in_shape)}"
            )
        return (self.spec.out_channels,)

    def forward(self, x):
        self._check(x, (self.spec.in_channels,))
        self._cache = x
        y = x @ self.weight.values.T
        if self.bias is not None:
            y = y + self.bias.values
        return y

    def backward(self, dy, per_sample_scale=None):
        x = self._pop_cache()
        self.weight.accumulate(dy.T @ x)
        if self.bias is not None:
            self.bias.accumulate(dy.sum(axis=0))
        if per_sample_scale is not None:
            # sum_b (s * dy_b x_b^T)^2 factorizes elementwise.
            s2 = per_sample_scale ** 2
            _add_sq(self.weight, s2 * ((dy * dy).T @ (x * x)))
            if self.bias is not None:
                _add_sq(self.bias, s2 * (dy * dy).sum(axis=0))
        return dy @ self.weight.values if self.need_input_grad else None


class Conv2d(Layer):
    """Stride-1 convolution with symmetric zero padding, computed via im2col."""

    def __init__(self, spec: LayerSpec, index: int, rng: np.random.Generator):
        super().__init__(spec, index)
        k = spec.kernel
        fan_in = spec.in_channels * k * k
        bound = np.sqrt(6.0 / fan_in)
        self.weight = Tensor(rng.uniform(-bound, bound, size=(spec.out_channels, spec.in_channels, k, k)))
        self.bias = Tensor.zeros((spec.out_channels,)) if spec.has_bias else None

    def params(self):
        out = {"weight": self.weight}
        if self.bias is not None:
            out["bias"] = self.bias
        return out

    def output_shape(self, in_shape):
        if len(in_shape) != 3 or in_shape[0] != self.spec.in_channels:
            raise ConfigurationError(
                f"layer {self.index} (conv2d): expects [{self.spec.in_channels}, H, W] input, "
                f"previous layer produces shape {list(in_shape)}"
            )
        _, h, w = in_shape
        p, k = self.spec.padding, self.spec.kernel
        ho, wo = h + 2 * p - k + 1, w + 2 * p - k + 1
        if ho < 1 or wo < 1:
            raise ConfigurationError(f"layer {self.index} (conv2d): kernel {k} larger than padded input {h}x{w}")
        return (self.spec.out_channels, ho, wo)

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] != self.spec.in_channels:
            raise ConfigurationError(
                f"layer {self.index} (conv2d): expected input shape [batch, {self.spec.in_channels}, H, W], "
                f"got {list(x.shape)}"
            )
        b, c, h, w = x.shape
        k, p = self.spec.kernel, self.spec.padding
        ho, wo = h + 2 * p - k + 1, w + 2 * p - k + 1
        # Channel-major im2col: cols[c, i, j, b, y, x] = xpad[c, b, y + i, x + j].
        xp = np.zeros((c, b, h + 2 * p, w + 2 * p))
        xp[:, :, p:p + h, p:p + w] = x.transpose(1, 0, 2, 3)
        cols = np.empty((c, k, k, b, ho, wo))
        for i in range(k):
            for j in range(k):
                cols[:, i, j] = xp[:, :, i:i + ho, j:j + wo]
        cols = cols.reshape(c * k * k, b * ho * wo)
        y = self.weight.values.reshape(self.spec.out_channels, -1) @ cols
        if self.bias is not None:
            y += self.bias.values[:, None]
        self._cache = (cols, x.shape)
        return y.reshape(self.spec.out_channels, b, ho, wo).transpose(1, 0, 2, 3)

    def backward(self, dy, per_sample_scale=None):
        cols, (b, c, h, w) = self._pop_cache()
        k, p, n_out = self.spec.kernel, self.spec.padding, self.spec.out_channels
        ho, wo = dy.shape[2], dy.shape[3]
        dyt = np.ascontiguousarray(dy.transpose(1, 0, 2, 3)).reshape(n_out, b * ho * wo)
        self.weight.accumulate((dyt @ cols.T).reshape(self.weight.shape))
        if self.bias is not None:
            self.bias.accumulate(dyt.sum(axis=1))
        if per_sample_scale is not None:
            cb = cols.reshape(-1, b, ho * wo).transpose(1, 2, 0)  # b, P, K
            db = dyt.reshape(n_out, b, ho * wo).transpose(1, 0, 2)  # b, out, P
            g = np.matmul(db, cb) * per_sample_scale
            _add_sq(self.weight, (g * g).sum(axis=0).reshape(self.weight.shape))
            if self.bias is not None:
                gb = db.sum(axis=2) * per_sample_scale
                _add_sq(self.bias, (gb * gb).sum(axis=0))
        if not self.need_input_grad:
            return None
        dcols = (self.weight.values.reshape(n_out, -1).T @ dyt).reshape(c, k, k, b, ho, wo)
        dxp = np.zeros((c, b, h + 2 * p, w + 2 * p))
        for i in range(k):
            for j in range(k):
                dxp[:, :, i:i + ho, j:j + wo] += dcols[:, i, j]
        return dxp[:, :, p:p + h, p:p + w].transpose(1, 0, 2, 3)


class ReLU(Layer):
    def forward(self, x):
        keep = x > 0
        self._cache = keep
        return x * keep

    def backward(self, dy, per_sample_scale=None):
        return dy * self._pop_cache()


class MaxPool2x2(Layer):
    def output_shape(self, in_shape):
        if len(in_shape) != 3 or in_shape[1] % 2 or in_shape[2] % 2:
            raise ConfigurationError(
                f"layer {self.index} (maxpool2x2): needs [C, H, W] input with even H and W, got {list(in_shape)}"
            )
        c, h, w = in_shape
        return (c, h // 2, w // 2)

    def forward(self, x):
        if x.ndim != 4 or x.shape[2] % 2 or x.shape[3] % 2:
            raise ConfigurationError(f"layer {self.index} (maxpool2x2): bad input shape {list(x.shape)}")
        q0, q1, q2, q3 = (x[:, :, i::2, j::2] for i in (0, 1) for j in (0, 1))
        # Strict comparisons send ties to the earlier window element (order q0..q3).
        right = q1 > q0
        a = np.maximum(q0, q1)
        right_lo = q3 > q2
        b = np.maximum(q2, q3)
        lower = b > a
        self._cache = (right, right_lo, lower, x.shape)
        return np.maximum(a, b)

    def backward(self, dy, per_sample_scale=None):
        right, right_lo, lower, shape = self._pop_cache()
        dx = np.empty(shape)
        top = np.where(lower, 0.0, dy)
        bot = dy - top
        dx[:, :, 0::2, 0::2] = np.where(right, 0.0, top)
        dx[:, :, 0::2, 1::2] = np.where(right, top, 0.0)
        dx[:, :, 1::2, 0::2] = np.where(right_lo, 0.0, bot)
        dx[:, :, 1::2, 1::2] = np.where(right_lo, bot, 0.0)
        return dx


class Flatten(Layer):
    def output_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, x):
        self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy, per_sample_scale=None):
        return dy.reshape(self._pop_cache())


def _add_sq(t: Tensor, sq: np.ndarray) -> None:
    if t.sq_grad is None:
        t.sq_grad = np.array(sq, dtype=np.float64)
    else:
        t.sq_grad += sq


def build_layer(spec: LayerSpec, index: int, rng: np.random.Generator) -> Layer:
    if spec.kind == "dense":
        return Dense(spec, index, rng)
    if spec.kind == "conv2d":
        return Conv2d(spec, index, rng)
    return {"relu": ReLU, "maxpool2x2": MaxPool2x2, "flatten": Flatten}[spec.kind](spec, index)
