"""Independent reference implementations used as test oracles."""

import numpy as np

from prunelab.nn.layers import Conv2d, Dense, Flatten, LayerSpec, MaxPool2x2, ReLU


def rel_err(a, b) -> float:
    a, b = np.ravel(a), np.ravel(b)
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-300)
    return float(np.linalg.norm(a - b) / denom)


def central_diff(f, arr: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """d f / d arr by central differences, perturbing ``arr`` in place."""
    out = np.zeros(arr.shape)
    flat, g = arr.reshape(-1), out.reshape(-1)
    for i in range(flat.size):
        x0 = flat[i]
        flat[i] = x0 + h
        fp = f()
        flat[i] = x0 - h
        fm = f()
        flat[i] = x0
        g[i] = (fp - fm) / (2 * h)
    return out


def layer_gradcheck(layer, x: np.ndarray, rng: np.random.Generator, h: float = 1e-6) -> dict:
    """Relative errors of input and parameter gradients of ``sum(R * layer(x))``."""
    y = layer.forward(x)
    r = rng.normal(size=y.shape)
    for t in layer.params().values():
        t.grad = None
    dx = layer.backward(r)

    def loss():
        out = float((layer.forward(x) * r).sum())
        layer._cache = None
        return out

    errs = {"input": rel_err(central_diff(loss, x, h), dx)}
    for name, t in layer.params().items():
        errs[name] = rel_err(central_diff(loss, t.values, h), t.grad)
    return errs


def conv2d_loops(x, w, b, pad):
    """Direct nested-loop convolution."""
    n, c, hh, ww = x.shape
    o, _, k, _ = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    ho, wo = hh + 2 * pad - k + 1, ww + 2 * pad - k + 1
    y = np.zeros((n, o, ho, wo))
    for bi in range(n):
        for oi in range(o):
            for i in range(ho):
                for j in range(wo):
                    y[bi, oi, i, j] = (xp[bi, :, i:i + k, j:j + k] * w[oi]).sum() + (b[oi] if b is not None else 0)
    return y


def brute_force_select(scores: dict, count: int, existing: dict) -> dict:
    """Full sort of (score, layer index, flat index) over kept positions."""
    cands = []
    for li, name in enumerate(scores):
        s = scores[name].ravel()
        keep = existing[name].ravel()
        for fi in range(s.size):
            if keep[fi]:
                cands.append((float(s[fi]), li, fi))
    cands.sort()
    out = {k: v.copy() for k, v in existing.items()}
    names = list(scores)
    for _, li, fi in cands[:count]:
        out[names[li]].reshape(-1)[fi] = False
    return out


def random_layer(kind: str, rng: np.random.Generator):
    """A random small instance of ``kind`` and a matching input batch."""
    b = int(rng.integers(1, 4))
    if kind == "dense":
        n_in, n_out = int(rng.integers(1, 6)), int(rng.integers(1, 6))
        layer = Dense(LayerSpec("dense", n_in, n_out, has_bias=bool(rng.integers(2))), 0, rng)
        return layer, rng.normal(size=(b, n_in))
    if kind == "conv2d":
        c_in, c_out, k = int(rng.integers(1, 4)), int(rng.integers(1, 4)), int(rng.integers(1, 4))
        pad = int(rng.integers(0, 2))
        hw = int(rng.integers(k, k + 3))
        layer = Conv2d(LayerSpec("conv2d", c_in, c_out, k, bool(rng.integers(2)), pad), 0, rng)
        if layer.bias is not None:
            layer.bias.values[:] = rng.normal(size=c_out)
        return layer, rng.normal(size=(b, c_in, hw, hw))
    if kind == "relu":
        x = rng.normal(size=(b, 7))
        # Keep inputs away from the kink so differences stay one-sided-safe.
        x[np.abs(x) < 1e-3] = 0.5
        return ReLU(LayerSpec("relu"), 0), x
    if kind == "maxpool2x2":
        c, h2, w2 = int(rng.integers(1, 3)), int(rng.integers(1, 4)), int(rng.integers(1, 4))
        # Distinct, well-separated values: no ties within a pooling window.
        vals = rng.permutation(b * c * 4 * h2 * w2).astype(float) * 0.01
        return MaxPool2x2(LayerSpec("maxpool2x2"), 0), vals.reshape(b, c, 2 * h2, 2 * w2)
    if kind == "flatten":
        return Flatten(LayerSpec("flatten"), 0), rng.normal(size=(b, 2, 3, 2))
    raise ValueError(kind)
