"""Seeded random streams.

All randomness goes through Philox4x64 (a counter-based generator with a
documented algorithm), keyed by ``(seed, stream)``. Streams are independent,
so e.g. the shuffle order of epoch 3 never depends on how many numbers were
drawn for initialization.
"""

import numpy as np

_MASK64 = (1 << 64) - 1

# Named stream ids; arbitrary but fixed.
INIT = 1
DATA = 2
SPLIT = 3
SHUFFLE = 4
EVAL = 5


def make_rng(seed: int, stream: int = 0, epoch: int = 0) -> np.random.Generator:
    """Return a generator for ``(seed, stream, epoch)``."""
    key = np.array([seed & _MASK64, ((stream & 0xFFFFFFFF) << 32) | (epoch & 0xFFFFFFFF)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
