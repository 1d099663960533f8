"""MNIST-format dataset ingestion and the non-IID device partition.

Reads the classic IDX container (big-endian, magic 0x803 for images and
0x801 for labels), plain or gzipped. Pixels are scaled to [0, 1].
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DataError

IMAGES_MAGIC = 2051
LABELS_MAGIC = 2049

SAMPLES_PER_DEVICE = 1000


@dataclass
class Dataset:
    """A split of the digit corpus: images flattened to 784 floats in [0, 1]."""

    images: np.ndarray  # (n, 784) float64
    labels: np.ndarray  # (n,) int64
    split: str

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise DataError(
                f"{self.split}: {len(self.images)} images vs {len(self.labels)} labels"
            )

    def __len__(self) -> int:
        return len(self.images)


@dataclass
class LocalDataset:
    """The shard held by one device: 1000 training indices of a single digit."""

    device_index: int  # 1-based, matching the uplink device numbering
    indices: np.ndarray  # (1000,) into the training Dataset
    digit: int


def _read_payload(path) -> bytes:
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def _parse_idx(raw: bytes, expected_magic: int, ndim: int, path) -> tuple[tuple, bytes]:
    header_len = 4 * (1 + ndim)
    if len(raw) < header_len:
        raise DataError(f"{path}: truncated IDX header")
    magic, *dims = struct.unpack(f">{1 + ndim}I", raw[:header_len])
    if magic != expected_magic:
        raise DataError(f"{path}: IDX magic {magic}, expected {expected_magic}")
    body = raw[header_len:]
    n_items = int(np.prod(dims))
    if len(body) < n_items:
        raise DataError(f"{path}: IDX body holds {len(body)} bytes, header claims {n_items}")
    return tuple(dims), body[:n_items]


def load_mnist(images_path, labels_path, split: str = "train") -> Dataset:
    """Load an images/labels IDX pair into a Dataset with pixels in [0, 1]."""
    img_dims, img_body = _parse_idx(_read_payload(images_path), IMAGES_MAGIC, 3, images_path)
    lab_dims, lab_body = _parse_idx(_read_payload(labels_path), LABELS_MAGIC, 1, labels_path)
    count, rows, cols = img_dims
    if count != lab_dims[0]:
        raise DataError(
            f"image count {count} != label count {lab_dims[0]} "
            f"({images_path} vs {labels_path})"
        )
    images = np.frombuffer(img_body, dtype=np.uint8).astype(np.float64) / 255.0
    images = images.reshape(count, rows * cols)
    labels = np.frombuffer(lab_body, dtype=np.uint8).astype(np.int64)
    if labels.size and (labels.min() < 0 or labels.max() > 9):
        raise DataError(f"{labels_path}: labels outside 0..9")
    return Dataset(images=images, labels=labels, split=split)


def load_mnist_dir(data_dir, split: str) -> Dataset:
    """Load a split from a directory holding the standard four MNIST files."""
    prefix = {"train": "train", "test": "t10k"}[split]
    root = Path(data_dir)
    paths = []
    for kind in (f"{prefix}-images-idx3-ubyte", f"{prefix}-labels-idx1-ubyte"):
        for candidate in (root / kind, root / f"{kind}.gz"):
            if candidate.exists():
                paths.append(candidate)
                break
        else:
            raise DataError(f"missing {kind}[.gz] under {root}")
    return load_mnist(paths[0], paths[1], split=split)


def assigned_digit(k: int, n_devices: int) -> int:
    """Digit held by device k (1-based): floor(10*(k-1)/K).

    Coincides with floor((k-1)/(K/10)) whenever 10 divides K, and degrades
    to ten near-equal groups otherwise (K = 75, 150, ... stay usable).
    """
    return (10 * (k - 1)) // n_devices


def partition_non_iid(dataset: Dataset, n_devices: int, rng: np.random.Generator) -> list[LocalDataset]:
    """Give each device 1000 uniform (without replacement) samples of its digit.

    Devices sharing a digit draw independently, so their shards may overlap;
    within one device the indices are distinct.
    """
    if n_devices < 1:
        raise ConfigurationError("need at least one device")
    by_digit = [np.flatnonzero(dataset.labels == d) for d in range(10)]
    needed = {assigned_digit(k, n_devices) for k in range(1, n_devices + 1)}
    for d in needed:
        if len(by_digit[d]) < SAMPLES_PER_DEVICE:
            raise ConfigurationError(
                f"digit {d} has only {len(by_digit[d])} training samples, "
                f"need {SAMPLES_PER_DEVICE} per device"
            )
    shards = []
    for k in range(1, n_devices + 1):
        d = assigned_digit(k, n_devices)
        picks = rng.choice(by_digit[d], size=SAMPLES_PER_DEVICE, replace=False)
        shards.append(LocalDataset(device_index=k, indices=np.sort(picks), digit=d))
    return shards
