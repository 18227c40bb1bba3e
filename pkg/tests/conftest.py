import copy

import numpy as np
import pytest

from oicprune.model import Layer, Model, build_model
from oicprune.autodiff import Tensor


def rel_err(a, b):
    """Elementwise relative error with a unit floor on the denominator."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1.0)
    return np.abs(a - b) / denom


def numeric_grad(fn, arr, h=1e-6, indices=None):
    """Central finite differences of scalar fn w.r.t. entries of arr.

    Mutates arr in place during probing and restores it. ``indices``
    limits the check to a subset of flat coordinates.
    """
    flat = arr.reshape(-1)
    if indices is None:
        indices = range(flat.size)
    grad = {}
    for i in indices:
        orig = flat[i]
        flat[i] = orig + h
        fp = fn()
        flat[i] = orig - h
        fm = fn()
        flat[i] = orig
        grad[i] = (fp - fm) / (2 * h)
    return grad


def assert_grad_close(analytic, fn, arr, tol=1e-5, h=1e-6, indices=None):
    num = numeric_grad(fn, arr, h=h, indices=indices)
    aflat = analytic.reshape(-1)
    for i, g in num.items():
        err = rel_err(aflat[i], g)
        assert err <= tol, f"coord {i}: analytic {aflat[i]} vs numeric {g} (rel {err})"


def clone_model(model):
    return copy.deepcopy(model)


def small_conv_net(seed=0, num_classes=4, in_shape=(1, 8, 8)):
    """3 conv + 1 dense classifier used by several training tests."""
    specs = [
        {"kind": "conv2d", "out_channels": 8, "kernel": 3, "padding": 1},
        {"kind": "relu"},
        {"kind": "maxpool", "size": 2},
        {"kind": "conv2d", "out_channels": 8, "kernel": 3, "padding": 1},
        {"kind": "relu"},
        {"kind": "conv2d", "out_channels": 12, "kernel": 3, "padding": 1},
        {"kind": "relu"},
        {"kind": "maxpool", "size": 2},
        {"kind": "flatten"},
        {"kind": "dense", "out_features": num_classes},
    ]
    return build_model(specs, in_shape, seed=seed)


def random_sequential_model(rng):
    """Random sequential net mixing conv->conv, conv->fc, relu/pool/affine."""
    c = int(rng.integers(1, 3))
    hw = int(rng.integers(6, 10))
    specs = []
    channels = c
    n_conv = int(rng.integers(1, 4))
    for _ in range(n_conv):
        oc = int(rng.integers(2, 7))
        specs.append({"kind": "conv2d", "out_channels": oc, "kernel": 3, "padding": 1})
        if rng.random() < 0.6:
            specs.append({"kind": "relu"})
        if rng.random() < 0.4:
            specs.append({"kind": "scale_shift"})
        channels = oc
    if rng.random() < 0.5 and hw >= 6:
        specs.append({"kind": "maxpool", "size": 2})
    specs.append({"kind": "flatten"})
    if rng.random() < 0.5:
        specs.append({"kind": "dense", "out_features": int(rng.integers(4, 9))})
        if rng.random() < 0.5:
            specs.append({"kind": "relu"})
    specs.append({"kind": "dense", "out_features": 3})
    model = build_model(specs, (c, hw, hw), seed=int(rng.integers(0, 10_000)))
    # non-zero biases and affine params so equivalence tests are not vacuous
    for layer in model.layers:
        if layer.kind in ("conv2d", "dense"):
            layer.bias.data[:] = rng.normal(0, 0.1, layer.bias.data.shape)
        elif layer.kind == "scale_shift":
            layer.weight.data[:] = rng.normal(1.0, 0.2, layer.weight.data.shape)
            layer.bias.data[:] = rng.normal(0, 0.1, layer.bias.data.shape)
    return model


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
