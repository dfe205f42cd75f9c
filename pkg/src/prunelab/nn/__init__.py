"""Minimal float64 neural-network engine: layers, backprop, SGD, checkpoints."""

from .checkpoint import FORMAT_VERSION, load_checkpoint, save_checkpoint
from .layers import LayerSpec, conv2d, dense, flatten, maxpool2x2, relu
from .loss import accuracy, cross_entropy_loss
from .network import LayerRecord, Network, backward, build_inventory, forward
from .optim import SGDConfig, sgd_step
from .tensor import Tensor

__all__ = [
    "FORMAT_VERSION", "LayerRecord", "LayerSpec", "Network", "SGDConfig", "Tensor",
    "accuracy", "backward", "build_inventory", "conv2d", "cross_entropy_loss", "dense",
    "flatten", "forward", "load_checkpoint", "maxpool2x2", "relu", "save_checkpoint", "sgd_step",
]
