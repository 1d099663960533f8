"""Deterministic procedural digit corpus in MNIST's IDX container format.

The sandbox this simulator ships in has no copy of MNIST and no way to
download one, so experiments run against a generated stand-in: 28x28
grayscale digits rendered from per-class stroke skeletons under random
affine distortion, stroke width, and intensity. The corpus matches the
properties the simulator actually depends on: 60000/10000 train/test
split, labels 0-9, pixels in [0, 255] with a large fraction of exact
zeros (MNIST-like ~80% background), and enough within-class variation
that a small MLP trains meaningfully instead of memorizing.

Point real MNIST files at the loader (AIRGRAD_MNIST_DIR) and everything
downstream behaves identically.
"""

from __future__ import annotations

import gzip
import struct
from pathlib import Path

import numpy as np

from .rng import substream

SIDE = 28
DEFAULT_SEED = 902613

_TRAIN_FILES = ("train-images-idx3-ubyte.gz", "train-labels-idx1-ubyte.gz")
_TEST_FILES = ("t10k-images-idx3-ubyte.gz", "t10k-labels-idx1-ubyte.gz")


def _arc(cx, cy, rx, ry, t0, t1, n=14):
    t = np.linspace(t0, t1, n)
    return np.column_stack([cx + rx * np.cos(t), cy + ry * np.sin(t)])


def _poly(*points):
    return np.asarray(points, dtype=np.float64)


def _skeleton(digit: int) -> list[np.ndarray]:
    """Stroke polylines for one digit in a unit box, y increasing downward."""
    pi = np.pi
    if digit == 0:
        return [_arc(0.50, 0.50, 0.21, 0.30, 0, 2 * pi, 26)]
    if digit == 1:
        return [_poly((0.40, 0.30), (0.53, 0.16), (0.53, 0.84)),
                _poly((0.38, 0.84), (0.66, 0.84))]
    if digit == 2:
        top = _arc(0.50, 0.33, 0.17, 0.15, pi, 2.15 * pi, 14)
        return [np.vstack([top, _poly((0.60, 0.45), (0.33, 0.80), (0.69, 0.80))])]
    if digit == 3:
        upper = _arc(0.46, 0.33, 0.17, 0.15, 0.85 * pi, 2.45 * pi, 16)
        lower = _arc(0.46, 0.65, 0.19, 0.17, 1.55 * pi, 3.10 * pi, 16)
        return [upper, lower]
    if digit == 4:
        return [_poly((0.60, 0.16), (0.30, 0.60), (0.76, 0.60)),
                _poly((0.60, 0.34), (0.60, 0.84))]
    if digit == 5:
        hook = _arc(0.46, 0.62, 0.20, 0.19, 1.35 * pi, 2.70 * pi, 16)
        return [_poly((0.67, 0.17), (0.37, 0.17), (0.35, 0.45)), hook]
    if digit == 6:
        loop = _arc(0.48, 0.62, 0.18, 0.20, 0, 2 * pi, 22)
        return [_poly((0.64, 0.15), (0.50, 0.32), (0.41, 0.50)), loop]
    if digit == 7:
        return [_poly((0.32, 0.18), (0.69, 0.18), (0.45, 0.84))]
    if digit == 8:
        return [_arc(0.50, 0.33, 0.16, 0.15, 0, 2 * pi, 20),
                _arc(0.50, 0.66, 0.19, 0.17, 0, 2 * pi, 20)]
    if digit == 9:
        loop = _arc(0.52, 0.37, 0.17, 0.16, 0, 2 * pi, 20)
        return [loop, _poly((0.685, 0.40), (0.66, 0.62), (0.55, 0.84))]
    raise ValueError(f"digit {digit} out of range")


_PIXEL_CENTERS = (np.stack(np.meshgrid(np.arange(SIDE), np.arange(SIDE), indexing="xy"),
                           axis=-1).reshape(-1, 2) + 0.5) / SIDE  # (784, 2) as (x, y)


def _segment_distances(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance from every point to every segment a[i]->b[i]; (P, S)."""
    ab = b - a  # (S, 2)
    ap = points[:, None, :] - a[None, :, :]  # (P, S, 2)
    denom = np.einsum("sd,sd->s", ab, ab)
    denom = np.where(denom > 0, denom, 1.0)
    t = np.clip(np.einsum("psd,sd->ps", ap, ab) / denom, 0.0, 1.0)
    closest = a[None, :, :] + t[:, :, None] * ab[None, :, :]
    return np.linalg.norm(points[:, None, :] - closest, axis=2)


def render_digit(digit: int, rng: np.random.Generator) -> np.ndarray:
    """One 28x28 uint8 image of `digit` with random distortion."""
    strokes = _skeleton(digit)
    theta = rng.uniform(-0.22, 0.22)
    sx, sy = rng.uniform(0.82, 1.10, size=2)
    shear = rng.uniform(-0.18, 0.18)
    tx, ty = rng.uniform(-0.05, 0.05, size=2)
    width = rng.uniform(0.045, 0.082)
    amp = rng.uniform(0.72, 1.0)

    c, s = np.cos(theta), np.sin(theta)
    lin = np.array([[c, -s], [s, c]]) @ np.array([[sx, shear * sx], [0.0, sy]])
    segs_a, segs_b = [], []
    for stroke in strokes:
        pts = stroke + rng.normal(0.0, 0.012, size=stroke.shape)
        pts = (pts - 0.5) @ lin.T + 0.5 + np.array([tx, ty])
        segs_a.append(pts[:-1])
        segs_b.append(pts[1:])
    a = np.vstack(segs_a)
    b = np.vstack(segs_b)
    dist = _segment_distances(_PIXEL_CENTERS, a, b).min(axis=1)

    halo = 0.018  # anti-alias band; pixels beyond width/2 + halo stay exactly 0
    level = amp * np.clip((width / 2 + halo - dist) / halo, 0.0, 1.0)
    img = np.round(level * 255.0).astype(np.uint8)
    return img.reshape(SIDE, SIDE)


def _render_split(n_per_digit: int, rng: np.random.Generator):
    images = np.empty((10 * n_per_digit, SIDE * SIDE), dtype=np.uint8)
    labels = np.repeat(np.arange(10, dtype=np.uint8), n_per_digit)
    for i, d in enumerate(labels):
        images[i] = render_digit(int(d), rng).ravel()
    order = rng.permutation(len(labels))
    return images[order], labels[order]


def _write_idx_images(path: Path, images: np.ndarray):
    header = struct.pack(">IIII", 2051, len(images), SIDE, SIDE)
    with gzip.open(path, "wb", compresslevel=1) as fh:
        fh.write(header)
        fh.write(images.tobytes())


def _write_idx_labels(path: Path, labels: np.ndarray):
    header = struct.pack(">II", 2049, len(labels))
    with gzip.open(path, "wb", compresslevel=1) as fh:
        fh.write(header)
        fh.write(labels.astype(np.uint8).tobytes())


def corpus_present(out_dir) -> bool:
    root = Path(out_dir)
    return all((root / f).exists() for f in _TRAIN_FILES + _TEST_FILES)


def generate_digit_corpus(out_dir, seed: int = DEFAULT_SEED,
                          n_train_per_digit: int = 6000,
                          n_test_per_digit: int = 1000,
                          force: bool = False) -> Path:
    """Write train/test IDX files under out_dir; no-op if already present."""
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    if corpus_present(root) and not force:
        return root
    train_images, train_labels = _render_split(n_train_per_digit, substream(seed, "dataset", 0))
    test_images, test_labels = _render_split(n_test_per_digit, substream(seed, "dataset", 1))
    _write_idx_images(root / _TRAIN_FILES[0], train_images)
    _write_idx_labels(root / _TRAIN_FILES[1], train_labels)
    _write_idx_images(root / _TEST_FILES[0], test_images)
    _write_idx_labels(root / _TEST_FILES[1], test_labels)
    return root
