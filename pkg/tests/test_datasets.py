import struct

import numpy as np
import pytest

from oicprune.datasets import (
    IDX_IMAGE_MAGIC,
    IDX_LABEL_MAGIC,
    Dataset,
    gen_synthetic,
    load_idx,
)
from oicprune.errors import IdxBadMagic, IdxCountMismatch, IdxTruncated


def idx_image_bytes(images, magic=IDX_IMAGE_MAGIC):
    images = np.asarray(images, np.uint8)
    n, h, w = images.shape
    return struct.pack(">IIII", magic, n, h, w) + images.tobytes()


def idx_label_bytes(labels, magic=IDX_LABEL_MAGIC, declared=None):
    labels = np.asarray(labels, np.uint8)
    n = len(labels) if declared is None else declared
    return struct.pack(">II", magic, n) + labels.tobytes()


def write_pair(tmp_path, img_bytes, lbl_bytes):
    ip = tmp_path / "images.idx"
    lp = tmp_path / "labels.idx"
    ip.write_bytes(img_bytes)
    lp.write_bytes(lbl_bytes)
    return ip, lp


@pytest.mark.parametrize("task", ["two_moons", "gaussian_blobs", "striped_images"])
def test_generators_deterministic(task):
    a = gen_synthetic(task, 40, seed=9)
    b = gen_synthetic(task, 40, seed=9)
    np.testing.assert_array_equal(a.inputs, b.inputs)
    np.testing.assert_array_equal(a.labels, b.labels)
    c = gen_synthetic(task, 40, seed=10)
    assert not np.array_equal(a.inputs, c.inputs)


def test_two_moons_shapes_and_classes():
    ds = gen_synthetic("two_moons", 51, seed=0)
    assert ds.inputs.shape == (51, 2)
    assert ds.num_classes == 2
    assert set(np.unique(ds.labels)) == {0, 1}


def test_gaussian_blobs_separable():
    ds = gen_synthetic("gaussian_blobs", 90, seed=1)
    # nearest-center classification should be nearly perfect at this noise
    angles = 2 * np.pi * np.arange(3) / 3
    centers = np.stack([np.cos(angles), np.sin(angles)], axis=1) * 2.0
    pred = np.linalg.norm(ds.inputs[:, None] - centers[None], axis=2).argmin(axis=1)
    assert (pred == ds.labels).mean() > 0.99


def test_striped_images_balance_and_shape():
    ds = gen_synthetic("striped_images", 103, seed=2)
    assert ds.inputs.shape == (103, 1, 8, 8)
    counts = np.bincount(ds.labels, minlength=4)
    assert counts.max() - counts.min() <= 1


def test_striped_images_class_count_bounds():
    ds = gen_synthetic("striped_images", 40, seed=0, num_classes=2)
    assert ds.num_classes == 2
    with pytest.raises(ValueError):
        gen_synthetic("striped_images", 40, seed=0, num_classes=9)


def test_unknown_task_rejected():
    with pytest.raises(ValueError):
        gen_synthetic("spirals", 10, seed=0)
    with pytest.raises(ValueError):
        gen_synthetic("gaussian_blobs", 2, seed=0)


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset(np.zeros((3, 2)), np.zeros(2, np.int64), 2)
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 2)), np.array([0, 5]), 2)


def test_load_idx_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    images = rng.integers(0, 256, (5, 4, 4)).astype(np.uint8)
    labels = np.array([0, 1, 2, 1, 0], np.uint8)
    ip, lp = write_pair(tmp_path, idx_image_bytes(images), idx_label_bytes(labels))
    ds = load_idx(ip, lp)
    assert ds.inputs.shape == (5, 1, 4, 4)
    assert ds.inputs.dtype == np.float64
    np.testing.assert_array_equal(ds.inputs[:, 0] * 255.0, images.astype(float))
    np.testing.assert_array_equal(ds.labels, labels)
    assert ds.num_classes == 3


def test_load_idx_bad_magic(tmp_path):
    images = np.zeros((2, 3, 3), np.uint8)
    labels = np.zeros(2, np.uint8)
    ip, lp = write_pair(
        tmp_path, idx_image_bytes(images, magic=0xDEADBEEF), idx_label_bytes(labels)
    )
    with pytest.raises(IdxBadMagic):
        load_idx(ip, lp)
    ip, lp = write_pair(
        tmp_path, idx_image_bytes(images), idx_label_bytes(labels, magic=0x00000805)
    )
    with pytest.raises(IdxBadMagic):
        load_idx(ip, lp)


def test_load_idx_truncated(tmp_path):
    images = np.zeros((4, 3, 3), np.uint8)
    labels = np.zeros(4, np.uint8)
    blob = idx_image_bytes(images)
    ip, lp = write_pair(tmp_path, blob[:-5], idx_label_bytes(labels))
    with pytest.raises(IdxTruncated):
        load_idx(ip, lp)
    ip, lp = write_pair(tmp_path, blob[:10], idx_label_bytes(labels))
    with pytest.raises(IdxTruncated):
        load_idx(ip, lp)


def test_load_idx_count_mismatch(tmp_path):
    images = np.zeros((3, 2, 2), np.uint8)
    labels = np.zeros(4, np.uint8)
    ip, lp = write_pair(tmp_path, idx_image_bytes(images), idx_label_bytes(labels))
    with pytest.raises(IdxCountMismatch):
        load_idx(ip, lp)
