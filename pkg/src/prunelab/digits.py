"""Procedural MNIST-style handwritten-digit images.

Each class is a set of polyline strokes in the unit square. A sample applies a
random affine jitter (rotation, anisotropic scale, shear, shift), per-vertex
wobble and a random pen width, rasterizes the strokes with anti-aliasing and
adds pixel noise. Output is uint8 ``[n, size, size]`` in MNIST orientation
(white ink on black).
"""

import numpy as np

from .rng import DATA, make_rng


def _arc(cx, cy, rx, ry, a0, a1, n=10):
    t = np.linspace(np.radians(a0), np.radians(a1), n)
    return [(cx + rx * np.cos(u), cy + ry * np.sin(u)) for u in t]


# y grows downward.
STROKES = {
    0: [_arc(0.5, 0.5, 0.28, 0.38, 0, 360, 18)],
    1: [[(0.38, 0.28), (0.55, 0.12), (0.55, 0.88)]],
    2: [_arc(0.5, 0.33, 0.26, 0.21, 190, 380, 10) + [(0.25, 0.88), (0.78, 0.88)]],
    3: [_arc(0.48, 0.31, 0.24, 0.19, 200, 450, 10), _arc(0.48, 0.68, 0.27, 0.2, 270, 520, 10)],
    4: [[(0.62, 0.88), (0.62, 0.12), (0.22, 0.65), (0.8, 0.65)]],
    5: [[(0.75, 0.12), (0.3, 0.12), (0.27, 0.47)] + _arc(0.5, 0.65, 0.27, 0.23, 230, 480, 10)],
    6: [[(0.68, 0.12), (0.35, 0.45)] + _arc(0.5, 0.66, 0.24, 0.22, 200, 560, 14)],
    7: [[(0.22, 0.12), (0.78, 0.12), (0.42, 0.88)], [(0.35, 0.5), (0.7, 0.5)]],
    8: [_arc(0.5, 0.3, 0.2, 0.18, 0, 360, 14), _arc(0.5, 0.68, 0.25, 0.2, 0, 360, 14)],
    9: [_arc(0.5, 0.34, 0.24, 0.22, 0, 360, 14), [(0.74, 0.34), (0.62, 0.88)]],
}


def _segment_distance(px, py, ax, ay, bx, by):
    dx, dy = bx - ax, by - ay
    ll = dx * dx + dy * dy
    t = np.clip(((px - ax) * dx + (py - ay) * dy) / np.maximum(ll, 1e-12), 0.0, 1.0)
    qx, qy = ax + t * dx - px, ay + t * dy - py
    return np.sqrt(qx * qx + qy * qy)


def render_digit(label: int, rng: np.random.Generator, size: int = 16, jitter: float = 1.0,
                 noise: float = 0.1) -> np.ndarray:
    ang = rng.normal(0, 0.2 * jitter)
    sx, sy = np.exp(rng.normal(0, 0.12 * jitter, size=2))
    shear = rng.normal(0, 0.2 * jitter)
    tx, ty = rng.normal(0, 0.06 * jitter, size=2)
    c, s = np.cos(ang), np.sin(ang)
    a = np.array([[c, -s], [s, c]]) @ np.array([[1, shear], [0, 1]]) @ np.diag([sx, sy])
    width = rng.uniform(0.045, 0.09)

    grid = (np.arange(size) + 0.5) / size
    px, py = np.meshgrid(grid, grid)
    dist = np.full((size, size), np.inf)
    for stroke in STROKES[label]:
        pts = np.asarray(stroke) - 0.5
        pts = pts + rng.normal(0, 0.025 * jitter, size=pts.shape)
        pts = pts @ a.T + 0.5 + np.array([tx, ty])
        for (ax, ay), (bx, by) in zip(pts[:-1], pts[1:]):
            dist = np.minimum(dist, _segment_distance(px, py, ax, ay, bx, by))
    aa = 0.6 / size
    img = np.clip((width + aa - dist) / (2 * aa), 0.0, 1.0)
    img = img + rng.normal(0, noise, size=img.shape)
    return np.clip(np.round(img * 255), 0, 255).astype(np.uint8)


def make_digits(n: int, seed: int = 0, size: int = 16, jitter: float = 1.0, noise: float = 0.1):
    """Return ``(images uint8 [n, size, size], labels uint8 [n])`` with balanced classes."""
    rng = make_rng(seed, DATA)
    labels = np.arange(n) % 10
    labels = labels[rng.permutation(n)].astype(np.uint8)
    images = np.stack([render_digit(int(y), rng, size, jitter, noise) for y in labels])
    return images, labels
