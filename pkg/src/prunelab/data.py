"""Desk-scale datasets: synthetic generators, IDX/CSV readers, splits, batching."""

import csv
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional, Tuple

import numpy as np

from .errors import FormatError, InputError
from .rng import SHUFFLE, SPLIT, DATA, make_rng

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True)
class Dataset:
    inputs: np.ndarray
    labels: np.ndarray
    num_classes: int
    split: str = "all"

    def __post_init__(self):
        if len(self.inputs) < 1 or len(self.inputs) != len(self.labels):
            raise InputError(f"dataset needs N >= 1 matching inputs/labels, got {len(self.inputs)}/{len(self.labels)}")
        if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
            raise InputError(f"labels must lie in [0, {self.num_classes})")
        self.inputs.setflags(write=False)
        self.labels.setflags(write=False)

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, idx: np.ndarray, split: str) -> "Dataset":
        return Dataset(self.inputs[idx].copy(), self.labels[idx].copy(), self.num_classes, split)


@dataclass(frozen=True)
class SplitSpec:
    train: float = 0.72
    val: float = 0.08
    test: float = 0.2
    seed: int = 0

    def __post_init__(self):
        fr = (self.train, self.val, self.test)
        if any(not 0 < f < 1 for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
            raise InputError(f"split fractions must each lie in (0,1) and sum to 1, got {fr}")


def gen_synthetic(kind: str, n: int, classes: int, noise: float, seed: int) -> Dataset:
    """Balanced 2-D classification data.

    ``spirals`` draws one arm per class; ``gaussians`` places isotropic
    blobs with std ``noise`` on a circle of radius 5.
    """
    if noise < 0:
        raise InputError(f"noise must be >= 0, got {noise}")
    if classes < 1 or n < classes:
        raise InputError(f"need n >= classes >= 1, got n={n}, classes={classes}")
    rng = make_rng(seed, DATA)
    labels = np.arange(n) % classes
    counts = np.bincount(labels, minlength=classes)
    xs = []
    for k in range(classes):
        m = counts[k]
        if kind == "spirals":
            t = np.sqrt(rng.uniform(0.02, 1.0, size=m))
            theta = 3.5 * t + 2 * np.pi * k / classes
            pts = np.stack([t * np.cos(theta), t * np.sin(theta)], axis=1)
        elif kind == "gaussians":
            phi = 2 * np.pi * k / classes
            pts = np.tile([5 * np.cos(phi), 5 * np.sin(phi)], (m, 1))
        else:
            raise InputError(f"unknown synthetic kind {kind!r}")
        xs.append(pts + rng.normal(0, noise, size=pts.shape))
    inputs = np.concatenate(xs)
    labels = np.repeat(np.arange(classes), counts)
    order = rng.permutation(n)
    return Dataset(inputs[order], labels[order].astype(np.int64), classes)


# IDX

def _parse_idx(raw: bytes, magic: int, what: str) -> np.ndarray:
    if len(raw) < 4:
        raise FormatError(f"{what}: truncated header at offset 0")
    (got,) = struct.unpack(">I", raw[:4])
    if got != magic:
        raise FormatError(f"{what}: bad magic 0x{got:08x} at offset 0 (expected 0x{magic:08x})")
    ndim = magic & 0xFF
    if len(raw) < 4 + 4 * ndim:
        raise FormatError(f"{what}: truncated dimension header at offset 4")
    dims = struct.unpack(f">{ndim}I", raw[4:4 + 4 * ndim])
    offset = 4 + 4 * ndim
    size = int(np.prod(dims))
    if len(raw) - offset < size:
        raise FormatError(f"{what}: truncated data at offset {len(raw)} (expected {offset + size} bytes)")
    if len(raw) - offset > size:
        raise FormatError(f"{what}: {len(raw) - offset - size} trailing bytes at offset {offset + size}")
    return np.frombuffer(raw, dtype=np.uint8, offset=offset, count=size).reshape(dims)


def read_idx(path) -> np.ndarray:
    """Raw uint8 array from an IDX images or labels file."""
    raw = Path(path).read_bytes()
    magic = IDX_LABELS_MAGIC if raw[:4] == struct.pack(">I", IDX_LABELS_MAGIC) else IDX_IMAGES_MAGIC
    return _parse_idx(raw, magic, str(path))


def load_idx(images_path, labels_path, normalize: bool = False, num_classes: Optional[int] = None) -> Dataset:
    """Read an MNIST-style IDX pair into ``[N, 1, H, W]`` inputs scaled to [0, 1].

    With ``normalize`` the inputs are standardized to mean 0 / std 1.
    """
    images = _parse_idx(Path(images_path).read_bytes(), IDX_IMAGES_MAGIC, str(images_path))
    labels = _parse_idx(Path(labels_path).read_bytes(), IDX_LABELS_MAGIC, str(labels_path))
    if images.shape[0] != labels.shape[0]:
        raise FormatError(f"image count {images.shape[0]} != label count {labels.shape[0]} (offset 4)")
    x = images.astype(np.float64)[:, None] / 255.0
    if normalize:
        x = (x - x.mean()) / max(x.std(), 1e-12)
    y = labels.astype(np.int64)
    return Dataset(x, y, num_classes or int(y.max()) + 1)


def write_idx(path, array: np.ndarray) -> None:
    array = np.asarray(array)
    if array.dtype != np.uint8 or array.ndim not in (1, 3):
        raise InputError("write_idx supports uint8 label vectors and [N, H, W] image stacks")
    magic = 0x00000800 | array.ndim
    with open(path, "wb") as f:
        f.write(struct.pack(">I", magic))
        f.write(struct.pack(f">{array.ndim}I", *array.shape))
        f.write(array.tobytes())


def load_csv(path, num_classes: Optional[int] = None) -> Dataset:
    """Tabular dump with a header row; the ``label`` column holds class ids."""
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        if "label" not in header:
            raise FormatError(f"{path}: header has no 'label' column")
        li = header.index("label")
        rows = [r for r in reader if r]
    labels = np.array([int(r[li]) for r in rows], dtype=np.int64)
    inputs = np.array([[float(v) for i, v in enumerate(r) if i != li] for r in rows])
    return Dataset(inputs, labels, num_classes or int(labels.max()) + 1)


def write_csv(path, ds: Dataset) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow([f"x{i}" for i in range(ds.inputs.shape[1])] + ["label"])
        for x, y in zip(ds.inputs, ds.labels):
            w.writerow([repr(float(v)) for v in x] + [int(y)])


# splits and batching

def split(dataset: Dataset, spec: SplitSpec) -> Tuple[Dataset, Dataset, Dataset]:
    n = len(dataset)
    n_val = int(np.floor(spec.val * n + 1e-9))
    n_test = int(np.floor(spec.test * n + 1e-9))
    n_train = n - n_val - n_test
    if min(n_train, n_val, n_test) < 1:
        raise InputError(f"split of N={n} with {spec} leaves an empty part ({n_train}, {n_val}, {n_test})")
    perm = make_rng(spec.seed, SPLIT).permutation(n)
    return (
        dataset.subset(np.sort(perm[:n_train]), "train"),
        dataset.subset(np.sort(perm[n_train:n_train + n_val]), "val"),
        dataset.subset(np.sort(perm[n_train + n_val:]), "test"),
    )


def batches(dataset: Dataset, batch_size: int, seed: int = 0, shuffle: bool = True,
            epoch: int = 0) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
    """Yield ``(inputs, labels)`` covering every sample once; the last batch may be short."""
    if batch_size < 1:
        raise InputError(f"batch_size must be >= 1, got {batch_size}")
    n = len(dataset)
    order = make_rng(seed, SHUFFLE, epoch).permutation(n) if shuffle else np.arange(n)
    for i in range(0, n, batch_size):
        idx = order[i:i + batch_size]
        yield dataset.inputs[idx], dataset.labels[idx]


# registry

def digits_idx(cache_dir, n: int = 4000, seed: int = 0, size: int = 16) -> Tuple[Path, Path]:
    """Materialize the procedural digit corpus as an IDX pair (cached on disk)."""
    from .digits import make_digits

    cache = Path(cache_dir)
    cache.mkdir(parents=True, exist_ok=True)
    img, lbl = cache / f"digits-{n}-{seed}-{size}-images.idx3-ubyte", cache / f"digits-{n}-{seed}-{size}-labels.idx1-ubyte"
    if not (img.exists() and lbl.exists()):
        images, labels = make_digits(n, seed, size)
        tmp_i, tmp_l = img.with_suffix(f".tmp{os.getpid()}"), lbl.with_suffix(f".tmp{os.getpid()}")
        write_idx(tmp_i, images)
        write_idx(tmp_l, labels)
        os.replace(tmp_i, img)
        os.replace(tmp_l, lbl)
    return img, lbl


def load_dataset(dataset_id: str, cache_dir=".cache", seed: int = 0) -> Dataset:
    """Resolve a dataset id.

    Ids: ``digits`` (4,000 procedural 16x16 digits, via IDX), ``spirals``,
    ``gaussians``, ``idx:<images>:<labels>``, ``csv:<path>``.
    """
    if dataset_id == "digits":
        img, lbl = digits_idx(cache_dir, seed=seed)
        return load_idx(img, lbl, normalize=True, num_classes=10)
    if dataset_id == "spirals":
        return gen_synthetic("spirals", 1500, 3, 0.06, seed)
    if dataset_id == "gaussians":
        return gen_synthetic("gaussians", 600, 4, 1.0, seed)
    if dataset_id.startswith("idx:"):
        _, img, lbl = dataset_id.split(":", 2)
        return load_idx(img, lbl, normalize=True)
    if dataset_id.startswith("csv:"):
        return load_csv(dataset_id[4:])
    raise InputError(f"unknown dataset id {dataset_id!r}")
