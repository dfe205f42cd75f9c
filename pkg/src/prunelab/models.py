"""Desk-scale model zoo and reference layer inventories."""

from typing import List, Sequence, Tuple

from .errors import InputError
from .nn import LayerRecord, LayerSpec, Network, build_inventory, conv2d, dense, flatten, maxpool2x2, relu


def mlp_specs(n_in: int = 2, hidden: Sequence[int] = (64, 64), n_out: int = 3) -> List[LayerSpec]:
    specs, prev = [], n_in
    for h in hidden:
        specs += [dense(prev, h), relu()]
        prev = h
    return specs + [dense(prev, n_out)]


def cnn_specs(n_classes: int = 10, size: int = 16) -> List[LayerSpec]:
    """Two conv/pool stages and a two-layer head; ~1.0e5 weights at 16x16 input."""
    flat = 16 * (size // 4) ** 2
    return [
        conv2d(1, 8, 3, padding=1, name="conv1"), relu(), maxpool2x2(),
        conv2d(8, 16, 3, padding=1, name="conv2"), relu(), maxpool2x2(),
        flatten(),
        dense(flat, 384, name="fc1"), relu(),
        dense(384, n_classes, name="fc2"),
    ]


def build_model(model_id: str, input_shape: Tuple[int, ...], n_classes: int, seed: int) -> Network:
    if model_id == "mlp":
        return Network(mlp_specs(input_shape[0], (64, 64), n_classes), input_shape, seed)
    if model_id == "cnn":
        return Network(cnn_specs(n_classes, input_shape[-1]), input_shape, seed)
    raise InputError(f"unknown model id {model_id!r}")


def resnet18_inventory(n_classes: int = 10) -> List[LayerRecord]:
    """Sequential inventory of a CIFAR ResNet-18 (3x3 convs, no skip projections).

    Groups are ``conv1`` and ``layer1``..``layer4``; the classifier forms its
    own group ``linear``. Residual shortcuts are not modelled: coupling runs
    along the chain only.
    """
    specs: List[Tuple[LayerSpec, Tuple[int, ...]]] = [(conv2d(3, 64, 3, 1, False, "conv1", "conv1"), (3, 32, 32))]
    c_in, hw = 64, 32
    for g, c in enumerate((64, 128, 256, 512), start=1):
        for block in range(2):
            for conv in range(2):
                name = f"layer{g}.{block}.conv{conv + 1}"
                specs.append((conv2d(c_in, c, 3, 1, False, name, f"layer{g}"), (c_in, hw, hw)))
                if g > 1 and block == 0 and conv == 0:
                    hw //= 2
                c_in = c
    specs.append((dense(512, n_classes, True, "linear", "linear"), (512,)))
    return build_inventory(specs)
