from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from ..errors import ConfigurationError
from .network import Network


@dataclass(frozen=True)
class SGDConfig:
    """SGD hyperparameters. Defaults are the pruning-phase values used for the
    full-scale runs; desk-scale experiments override ``batch_size``."""

    learning_rate: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 0.0005
    batch_size: int = 512

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigurationError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0 <= self.momentum < 1:
            raise ConfigurationError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ConfigurationError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")


def sgd_step(net: Network, cfg: SGDConfig, masks: Optional[Dict[str, np.ndarray]] = None) -> None:
    """One momentum-SGD update of every parameter with a populated gradient.

    ``v <- momentum * v + grad + weight_decay * w``; ``w <- w - lr * v``.
    Positions where the mask is False are held at exactly zero with zero
    velocity. ``masks`` defaults to the masks attached to ``net``.
    """
    if masks is None:
        masks = net.masks
    for name, t in net.params().items():
        if t.grad is None:
            continue
        g = t.grad + cfg.weight_decay * t.values if cfg.weight_decay else t.grad
        if t.velocity is None or cfg.momentum == 0:
            t.velocity = np.array(g, dtype=np.float64)
        else:
            t.velocity *= cfg.momentum
            t.velocity += g
        t.values -= cfg.learning_rate * t.velocity
        mask = masks.get(name)
        if mask is not None:
            t.values[~mask] = 0.0
            t.velocity[~mask] = 0.0
