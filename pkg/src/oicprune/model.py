"""Sequential model container and out-in-channel pair bookkeeping.

A weighted layer (conv2d/dense) and the next weighted layer form a
channel pair: out-channel i of the first and the column block of the
second that consumes feature map i are one jointly-regularized group.
The pairing survives interleaved relu/maxpool/scale_shift layers and
the conv->flatten->dense boundary (where one out-channel feeds H*W
consecutive dense input columns, because flatten is channel-major).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, ShapeError

WEIGHTED_KINDS = ("conv2d", "dense")
PASSTHROUGH_KINDS = ("relu", "maxpool", "scale_shift", "flatten")


@dataclass
class Layer:
    kind: str
    weight: Tensor | None = None  # dense: OCxIC; conv: OCxICxkhxkw; scale_shift: gamma
    bias: Tensor | None = None    # dense/conv: OC; scale_shift: beta
    stride: int = 1
    padding: int = 0
    pool_size: int = 2

    def out_channels(self):
        return self.weight.data.shape[0] if self.kind in WEIGHTED_KINDS else None

    def in_channels(self):
        return self.weight.data.shape[1] if self.kind in WEIGHTED_KINDS else None


@dataclass
class ChannelPair:
    out_layer: int
    in_layer: int
    channel_count: int
    in_multiplicity: int  # in-layer columns per out-channel (dense after flatten: H*W)
    intervening: list = field(default_factory=list)  # relu/maxpool/scale_shift between


class Model:
    """Ordered layers plus derived channel-pair metadata."""

    def __init__(self, layers, input_shape):
        self.layers = list(layers)
        self.input_shape = tuple(int(v) for v in input_shape)
        self.output_shapes = self._check_shapes()
        self.pairs = self._derive_pairs()

    # ---- construction-time validation -------------------------------

    def _check_shapes(self):
        shape = self.input_shape
        shapes = []
        for idx, layer in enumerate(self.layers):
            if layer.kind == "conv2d":
                if len(shape) != 3:
                    raise ConfigError(f"layer {idx}: conv2d needs CxHxW input, got {shape}")
                oc, ic, kh, kw = layer.weight.data.shape
                if ic != shape[0]:
                    raise ConfigError(
                        f"layer {idx}: conv2d expects {ic} input channels, got {shape[0]}"
                    )
                ho = ad._conv_out_extent(shape[1], kh, layer.stride, layer.padding, "conv2d")
                wo = ad._conv_out_extent(shape[2], kw, layer.stride, layer.padding, "conv2d")
                shape = (oc, ho, wo)
            elif layer.kind == "dense":
                if len(shape) != 1:
                    raise ConfigError(
                        f"layer {idx}: dense needs flat input, got {shape} (missing flatten?)"
                    )
                oc, ic = layer.weight.data.shape
                if ic != shape[0]:
                    raise ConfigError(
                        f"layer {idx}: dense expects {ic} input features, got {shape[0]}"
                    )
                shape = (oc,)
            elif layer.kind == "scale_shift":
                if layer.weight.data.shape != (shape[0],):
                    raise ConfigError(
                        f"layer {idx}: scale_shift has {layer.weight.data.shape[0]} "
                        f"factors but input has {shape[0]} channels"
                    )
            elif layer.kind == "maxpool":
                if len(shape) != 3:
                    raise ConfigError(f"layer {idx}: maxpool needs CxHxW input, got {shape}")
                s = layer.stride
                ho = (shape[1] - layer.pool_size) // s + 1
                wo = (shape[2] - layer.pool_size) // s + 1
                if ho < 1 or wo < 1:
                    raise ConfigError(f"layer {idx}: maxpool window exceeds input {shape}")
                shape = (shape[0], ho, wo)
            elif layer.kind == "flatten":
                if len(shape) != 3:
                    raise ConfigError(f"layer {idx}: flatten needs CxHxW input, got {shape}")
                shape = (shape[0] * shape[1] * shape[2],)
            elif layer.kind == "relu":
                pass
            else:
                raise ConfigError(f"layer {idx}: unknown kind {layer.kind!r}")
            shapes.append(shape)
        return shapes

    def _derive_pairs(self):
        weighted = [i for i, l in enumerate(self.layers) if l.kind in WEIGHTED_KINDS]
        pairs = []
        for a, b in zip(weighted, weighted[1:]):
            out_l, in_l = self.layers[a], self.layers[b]
            oc = out_l.out_channels()
            ic = in_l.in_channels()
            if ic % oc != 0:
                raise ConfigError(
                    f"layers {a}->{b}: in-dim {ic} not a multiple of out-channels {oc}"
                )
            intervening = [
                j
                for j in range(a + 1, b)
                if self.layers[j].kind in ("relu", "maxpool", "scale_shift")
            ]
            pairs.append(
                ChannelPair(
                    out_layer=a,
                    in_layer=b,
                    channel_count=oc,
                    in_multiplicity=ic // oc,
                    intervening=intervening,
                )
            )
        return pairs

    # ---- forward -----------------------------------------------------

    def forward(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            if layer.kind == "conv2d":
                x = ad.conv2d(x, layer.weight, layer.bias, layer.stride, layer.padding)
            elif layer.kind == "dense":
                x = ad.dense(x, layer.weight, layer.bias)
            elif layer.kind == "scale_shift":
                x = ad.scale_shift(x, layer.weight, layer.bias)
            elif layer.kind == "relu":
                x = ad.relu(x)
            elif layer.kind == "maxpool":
                x = ad.maxpool2d(x, layer.pool_size, layer.stride)
            elif layer.kind == "flatten":
                x = ad.flatten(x)
        return x

    def predict(self, inputs: np.ndarray) -> np.ndarray:
        """Forward pass on raw arrays; no gradients kept."""
        return self.forward(Tensor(inputs)).data

    def parameters(self):
        out = []
        for layer in self.layers:
            if layer.weight is not None:
                out.append(layer.weight)
            if layer.bias is not None:
                out.append(layer.bias)
        return out

    def zero_grads(self):
        for p in self.parameters():
            p.zero_grad()

    def weighted_layer_indices(self):
        return [i for i, l in enumerate(self.layers) if l.kind in WEIGHTED_KINDS]


# ---- channel slices ----------------------------------------------------


def out_channel_slice(model: Model, pair: ChannelPair, i: int) -> np.ndarray:
    """View of all out-layer weights producing feature map i."""
    if not 0 <= i < pair.channel_count:
        raise IndexError(f"channel {i} out of range [0, {pair.channel_count})")
    w = model.layers[pair.out_layer].weight.data
    return w[i].reshape(-1) if w.ndim == 4 else w[i, :]


def in_channel_slice(model: Model, pair: ChannelPair, i: int) -> np.ndarray:
    """View of all in-layer weights consuming feature map i."""
    if not 0 <= i < pair.channel_count:
        raise IndexError(f"channel {i} out of range [0, {pair.channel_count})")
    w = model.layers[pair.in_layer].weight.data
    if w.ndim == 4:
        return w[:, i]  # conv: every filter's i-th input slice
    m = pair.in_multiplicity
    return w[:, i * m : (i + 1) * m]


def zero_group(model: Model, pair: ChannelPair, i: int):
    """Zero a whole out-in-channel group in place (weights, bias, affine).

    After this, evaluating the model matches surgically removing the
    group: the out-layer emits an all-zero map i and the in-layer
    ignores it.
    """
    out_channel_slice(model, pair, i)[...] = 0.0
    in_channel_slice(model, pair, i)[...] = 0.0
    out_l = model.layers[pair.out_layer]
    if out_l.bias is not None:
        out_l.bias.data[i] = 0.0
    for j in pair.intervening:
        layer = model.layers[j]
        if layer.kind == "scale_shift":
            layer.weight.data[i] = 0.0
            layer.bias.data[i] = 0.0


# ---- construction --------------------------------------------------------


def build_model(layer_specs, input_shape, seed=0) -> Model:
    """Instantiate a sequential model from layer spec dicts.

    Spec kinds: conv2d (out_channels, kernel, stride, padding), dense
    (out_features), maxpool (size, stride), relu, flatten, scale_shift.
    Weights: zero-mean normal with std sqrt(2/fan_in); biases zero;
    scale factors one.
    """
    rng = np.random.default_rng(seed)
    shape = tuple(int(v) for v in input_shape)
    layers = []
    for idx, spec in enumerate(layer_specs):
        kind = spec["kind"]
        if kind == "conv2d":
            if len(shape) != 3:
                raise ConfigError(f"layer {idx}: conv2d needs CxHxW input, got {shape}")
            oc = int(spec["out_channels"])
            k = int(spec.get("kernel", 3))
            stride = int(spec.get("stride", 1))
            padding = int(spec.get("padding", 0))
            ic = shape[0]
            fan_in = ic * k * k
            w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(oc, ic, k, k))
            layers.append(
                Layer(
                    "conv2d",
                    weight=Tensor(w, requires_grad=True),
                    bias=Tensor(np.zeros(oc), requires_grad=True),
                    stride=stride,
                    padding=padding,
                )
            )
            ho = ad._conv_out_extent(shape[1], k, stride, padding, "conv2d")
            wo = ad._conv_out_extent(shape[2], k, stride, padding, "conv2d")
            shape = (oc, ho, wo)
        elif kind == "dense":
            if len(shape) != 1:
                raise ConfigError(f"layer {idx}: dense needs flat input, got {shape}")
            oc = int(spec["out_features"])
            ic = shape[0]
            w = rng.normal(0.0, np.sqrt(2.0 / ic), size=(oc, ic))
            layers.append(
                Layer(
                    "dense",
                    weight=Tensor(w, requires_grad=True),
                    bias=Tensor(np.zeros(oc), requires_grad=True),
                )
            )
            shape = (oc,)
        elif kind == "scale_shift":
            if len(shape) == 0:
                raise ConfigError(f"layer {idx}: scale_shift needs channelled input")
            c = shape[0]
            layers.append(
                Layer(
                    "scale_shift",
                    weight=Tensor(np.ones(c), requires_grad=True),
                    bias=Tensor(np.zeros(c), requires_grad=True),
                )
            )
        elif kind == "maxpool":
            size = int(spec.get("size", 2))
            stride = int(spec.get("stride", size))
            layers.append(Layer("maxpool", pool_size=size, stride=stride))
            if len(shape) != 3:
                raise ConfigError(f"layer {idx}: maxpool needs CxHxW input, got {shape}")
            shape = (shape[0], (shape[1] - size) // stride + 1, (shape[2] - size) // stride + 1)
        elif kind == "flatten":
            layers.append(Layer("flatten"))
            if len(shape) != 3:
                raise ConfigError(f"layer {idx}: flatten needs CxHxW input, got {shape}")
            shape = (shape[0] * shape[1] * shape[2],)
        elif kind == "relu":
            layers.append(Layer("relu"))
        else:
            raise ConfigError(f"layer {idx}: unknown layer kind {kind!r}")
    return Model(layers, input_shape)


def parse_architecture(text: str):
    """Parse the compact layer description used in config files.

    Comma-separated tokens: ``conv:OC:kK[:sS][:pP]``, ``dense:OC``,
    ``maxpool:SIZE[:STRIDE]``, ``relu``, ``flatten``, ``scale_shift``.
    Example: ``conv:8:k3:p1, relu, maxpool:2, flatten, dense:10``.
    """
    specs = []
    for raw in text.replace("\n", ",").split(","):
        token = raw.strip()
        if not token:
            continue
        parts = token.split(":")
        name = parts[0]
        if name == "conv":
            spec = {"kind": "conv2d", "out_channels": int(parts[1])}
            for p in parts[2:]:
                if p.startswith("k"):
                    spec["kernel"] = int(p[1:])
                elif p.startswith("s"):
                    spec["stride"] = int(p[1:])
                elif p.startswith("p"):
                    spec["padding"] = int(p[1:])
                else:
                    raise ConfigError(f"bad conv option {p!r} in {token!r}")
            specs.append(spec)
        elif name == "dense":
            specs.append({"kind": "dense", "out_features": int(parts[1])})
        elif name == "maxpool":
            spec = {"kind": "maxpool", "size": int(parts[1]) if len(parts) > 1 else 2}
            if len(parts) > 2:
                spec["stride"] = int(parts[2])
            specs.append(spec)
        elif name in ("relu", "flatten", "scale_shift"):
            if len(parts) > 1:
                raise ConfigError(f"layer {name!r} takes no options: {token!r}")
            specs.append({"kind": name})
        else:
            raise ConfigError(f"unknown layer kind {name!r} in architecture")
    return specs


def parse_input_shape(text: str):
    dims = tuple(int(v) for v in text.lower().replace(" ", "").split("x"))
    if len(dims) not in (1, 3) or any(d < 1 for d in dims):
        raise ConfigError(f"input shape must be F or CxHxW, got {text!r}")
    return dims
