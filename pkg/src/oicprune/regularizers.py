"""Values and analytic gradients of the four compared regularizers.

All functions are pure reads of the model weights and return
``(value, grads)`` where ``grads`` maps layer index to an array shaped
like that layer's weight. Coefficients (lambda, lambda_s) are applied
by the caller.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .model import WEIGHTED_KINDS, in_channel_slice, out_channel_slice

REGULARIZER_KINDS = ("l2", "separated_gl", "oicsr_gl", "l1_scale")

# Group norms at or below this are treated as zero; the subgradient
# there is 0, which keeps dead channels dead.
ZERO_GROUP_EPS = 1e-12


def l2_value_grad(model):
    """Sum of squared weights over all weighted layers; grad = 2w."""
    value = 0.0
    grads = {}
    for idx, layer in enumerate(model.layers):
        if layer.kind in WEIGHTED_KINDS:
            w = layer.weight.data
            value += float(np.sum(w * w))
            grads[idx] = 2.0 * w
    return value, grads


def separated_gl_value_grad(model):
    """Per-layer group lasso over out-channels of non-final weighted layers."""
    value = 0.0
    grads = {}
    for pair in model.pairs:
        idx = pair.out_layer
        w = model.layers[idx].weight.data
        rows = w.reshape(w.shape[0], -1)
        norms = np.sqrt(np.sum(rows * rows, axis=1))
        value += float(norms.sum())
        safe = np.where(norms > ZERO_GROUP_EPS, norms, 1.0)
        g = rows / safe[:, None]
        g[norms <= ZERO_GROUP_EPS] = 0.0
        grads[idx] = g.reshape(w.shape)
    return value, grads


def oicsr_gl_value_grad(model):
    """Joint group lasso over out-in-channel groups of every layer pair.

    Each group is the concatenation of out-channel i of layer l and the
    corresponding in-channel block of layer l+1; both sides receive the
    quotient-form gradient w / ||group||. A middle layer's weights sit
    in two pairs and accumulate both contributions.
    """
    if not model.pairs:
        raise ConfigError("oicsr_gl needs at least one layer pair")
    value = 0.0
    grads = {
        idx: np.zeros_like(model.layers[idx].weight.data)
        for idx in model.weighted_layer_indices()
    }
    for pair in model.pairs:
        w_out = model.layers[pair.out_layer].weight.data
        w_in = model.layers[pair.in_layer].weight.data
        g_out = grads[pair.out_layer]
        g_in = grads[pair.in_layer]
        for i in range(pair.channel_count):
            o = out_channel_slice(model, pair, i)
            n = in_channel_slice(model, pair, i)
            norm = np.sqrt(np.sum(o * o) + np.sum(n * n))
            value += float(norm)
            if norm <= ZERO_GROUP_EPS:
                continue
            if w_out.ndim == 4:
                g_out[i] += (o / norm).reshape(w_out.shape[1:])
            else:
                g_out[i, :] += o / norm
            if w_in.ndim == 4:
                g_in[:, i] += n / norm
            else:
                m = pair.in_multiplicity
                g_in[:, i * m : (i + 1) * m] += n / norm
    return value, grads


def l1_scale_value_grad(model):
    """L1 norm of the per-channel scale factors; grad = sign(gamma)."""
    scale_layers = [i for i, l in enumerate(model.layers) if l.kind == "scale_shift"]
    if not scale_layers:
        raise ConfigError("l1_scale requires scale_shift layers in the model")
    value = 0.0
    grads = {}
    for idx in scale_layers:
        gamma = model.layers[idx].weight.data
        value += float(np.abs(gamma).sum())
        grads[idx] = np.sign(gamma)
    return value, grads


_DISPATCH = {
    "l2": l2_value_grad,
    "separated_gl": separated_gl_value_grad,
    "oicsr_gl": oicsr_gl_value_grad,
    "l1_scale": l1_scale_value_grad,
}


def structured_value_grad(model, kind):
    if kind not in _DISPATCH:
        raise ConfigError(f"unknown regularizer kind {kind!r}")
    return _DISPATCH[kind](model)
