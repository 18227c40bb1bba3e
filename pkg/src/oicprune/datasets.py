"""Synthetic dataset generators and the IDX (MNIST-format) loader."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import IdxBadMagic, IdxCountMismatch, IdxTruncated

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801

SYNTHETIC_TASKS = ("two_moons", "gaussian_blobs", "striped_images")


@dataclass
class Dataset:
    inputs: np.ndarray  # N x F or N x C x H x W, float64
    labels: np.ndarray  # N int64 class indices
    num_classes: int
    split: str = "train"

    def __post_init__(self):
        if len(self.inputs) != len(self.labels):
            raise ValueError("inputs and labels disagree on sample count")
        if len(self.labels) and self.labels.max() >= self.num_classes:
            raise ValueError("label out of range")


def _balanced_labels(n, num_classes, rng):
    """Class counts differing by at most one, in shuffled order."""
    labels = np.arange(n) % num_classes
    return labels[rng.permutation(n)].astype(np.int64)


def _two_moons(n, seed, noise=0.1):
    rng = np.random.default_rng(seed)
    n0 = n // 2
    n1 = n - n0
    t0 = rng.uniform(0, np.pi, n0)
    t1 = rng.uniform(0, np.pi, n1)
    x0 = np.stack([np.cos(t0), np.sin(t0)], axis=1)
    x1 = np.stack([1.0 - np.cos(t1), 0.5 - np.sin(t1)], axis=1)
    x = np.concatenate([x0, x1]) + rng.normal(0, noise, (n, 2))
    y = np.concatenate([np.zeros(n0, np.int64), np.ones(n1, np.int64)])
    order = rng.permutation(n)
    return x[order], y[order], 2


def _gaussian_blobs(n, seed, num_classes=3, noise=0.15):
    rng = np.random.default_rng(seed)
    y = _balanced_labels(n, num_classes, rng)
    angles = 2 * np.pi * np.arange(num_classes) / num_classes
    centers = np.stack([np.cos(angles), np.sin(angles)], axis=1) * 2.0
    x = centers[y] + rng.normal(0, noise, (n, 2))
    return x, y, num_classes


_STRIPE_PATTERNS = ("horizontal", "vertical", "diagonal", "checker")


def _striped_images(n, seed, num_classes=4, size=8, noise=0.3):
    """1 x size x size images whose spatial pattern encodes the class."""
    if not 2 <= num_classes <= len(_STRIPE_PATTERNS):
        raise ValueError(f"striped_images supports 2..{len(_STRIPE_PATTERNS)} classes")
    rng = np.random.default_rng(seed)
    y = _balanced_labels(n, num_classes, rng)
    ii, jj = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    x = np.empty((n, 1, size, size))
    phases = rng.integers(0, 2, n)
    for k in range(n):
        ph = int(phases[k])
        pattern = _STRIPE_PATTERNS[y[k]]
        if pattern == "horizontal":
            img = ((ii // 2 + ph) % 2).astype(float)
        elif pattern == "vertical":
            img = ((jj // 2 + ph) % 2).astype(float)
        elif pattern == "diagonal":
            img = (((ii + jj) // 2 + ph) % 2).astype(float)
        else:
            img = ((ii + jj + ph) % 2).astype(float)
        x[k, 0] = img * 2.0 - 1.0
    x += rng.normal(0, noise, x.shape)
    return x, y, num_classes


def gen_synthetic(task, n, seed, num_classes=None, split="train") -> Dataset:
    """Deterministic desk-scale datasets; same (task, n, seed) -> same data."""
    if task not in SYNTHETIC_TASKS:
        raise ValueError(f"unknown task {task!r}; choose from {SYNTHETIC_TASKS}")
    min_classes = {"two_moons": 2, "gaussian_blobs": num_classes or 3,
                   "striped_images": num_classes or 4}[task]
    if n < min_classes:
        raise ValueError(f"need at least {min_classes} samples, got {n}")
    if task == "two_moons":
        x, y, k = _two_moons(n, seed)
    elif task == "gaussian_blobs":
        x, y, k = _gaussian_blobs(n, seed, num_classes or 3)
    else:
        x, y, k = _striped_images(n, seed, num_classes or 4)
    return Dataset(x, y, k, split)


# ---- IDX format ----------------------------------------------------------


def _read_be32(data, offset, path):
    if offset + 4 > len(data):
        raise IdxTruncated(f"{path}: file ends inside the header")
    return struct.unpack_from(">I", data, offset)[0]


def load_idx(images_path, labels_path) -> Dataset:
    """Parse an IDX image/label file pair; pixels are scaled to [0, 1]."""
    with open(images_path, "rb") as f:
        img_bytes = f.read()
    with open(labels_path, "rb") as f:
        lbl_bytes = f.read()

    magic = _read_be32(img_bytes, 0, images_path)
    if magic != IDX_IMAGE_MAGIC:
        raise IdxBadMagic(
            f"{images_path}: magic 0x{magic:08x}, expected 0x{IDX_IMAGE_MAGIC:08x}"
        )
    n = _read_be32(img_bytes, 4, images_path)
    rows = _read_be32(img_bytes, 8, images_path)
    cols = _read_be32(img_bytes, 12, images_path)
    if len(img_bytes) < 16 + n * rows * cols:
        raise IdxTruncated(
            f"{images_path}: declared {n} images of {rows}x{cols}, "
            f"payload is {len(img_bytes) - 16} bytes"
        )
    images = np.frombuffer(img_bytes, np.uint8, n * rows * cols, 16)

    magic = _read_be32(lbl_bytes, 0, labels_path)
    if magic != IDX_LABEL_MAGIC:
        raise IdxBadMagic(
            f"{labels_path}: magic 0x{magic:08x}, expected 0x{IDX_LABEL_MAGIC:08x}"
        )
    n_lbl = _read_be32(lbl_bytes, 4, labels_path)
    if len(lbl_bytes) < 8 + n_lbl:
        raise IdxTruncated(f"{labels_path}: declared {n_lbl} labels, payload short")
    if n != n_lbl:
        raise IdxCountMismatch(f"{n} images but {n_lbl} labels")
    labels = np.frombuffer(lbl_bytes, np.uint8, n_lbl, 8).astype(np.int64)

    x = images.reshape(n, 1, rows, cols).astype(np.float64) / 255.0
    return Dataset(x, labels, int(labels.max()) + 1 if n else 10)
