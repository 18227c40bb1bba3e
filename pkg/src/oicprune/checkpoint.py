"""Versioned single-file model checkpoints.

Layout: an ASCII magic+version line, a decimal header-length line, a
JSON header (architecture, input shape, run config snapshot, pruning
history, and per-buffer byte counts), one newline, then the raw
little-endian float64 parameter buffers concatenated in layer order
(weight before bias). Writes are atomic (temp file + rename) and a
round trip reproduces parameters bit-exactly.
"""

from __future__ import annotations

import dataclasses
import json
import os
import tempfile

import numpy as np

from .autodiff import Tensor
from .errors import CheckpointError
from .importance import OutInChannelGroup
from .model import Layer, Model
from .pruning import PruningPlan

MAGIC = b"OICPRUNE-CKPT"
VERSION = 1


def plan_to_dict(plan: PruningPlan) -> dict:
    return dataclasses.asdict(plan)


def plan_from_dict(d: dict) -> PruningPlan:
    return PruningPlan(
        iteration=d["iteration"],
        removals=[OutInChannelGroup(**g) for g in d["removals"]],
        achieved_flops_ratio=d["achieved_flops_ratio"],
        capped_pairs=list(d["capped_pairs"]),
        predicted_flops=d["predicted_flops"],
    )


def _layer_descriptor(layer: Layer) -> dict:
    d = {"kind": layer.kind}
    if layer.kind in ("conv2d", "dense", "scale_shift"):
        d["weight_shape"] = list(layer.weight.data.shape)
        d["has_bias"] = layer.bias is not None
    if layer.kind == "conv2d":
        d["stride"] = layer.stride
        d["padding"] = layer.padding
    if layer.kind == "maxpool":
        d["pool_size"] = layer.pool_size
        d["stride"] = layer.stride
    return d


def save_checkpoint(model: Model, meta: dict, path):
    """Write model + metadata atomically; ``meta`` must be JSON-safe."""
    buffers = []
    arrays = []
    for layer in model.layers:
        for name, t in (("weight", layer.weight), ("bias", layer.bias)):
            if t is None:
                continue
            raw = np.ascontiguousarray(t.data, dtype="<f8").tobytes()
            arrays.append({"name": name, "nbytes": len(raw)})
            buffers.append(raw)
    header = {
        "version": VERSION,
        "input_shape": list(model.input_shape),
        "architecture": [_layer_descriptor(l) for l in model.layers],
        "arrays": arrays,
        "meta": meta,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    payload = b"".join(
        [
            MAGIC + b" " + str(VERSION).encode() + b"\n",
            str(len(header_bytes)).encode() + b"\n",
            header_bytes,
            b"\n",
        ]
        + buffers
    )
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".ckpt-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path):
    """Read a checkpoint; returns (Model, meta dict)."""
    with open(path, "rb") as f:
        blob = f.read()
    nl1 = blob.find(b"\n")
    if nl1 < 0 or not blob.startswith(MAGIC + b" "):
        raise CheckpointError(f"{path}: not a checkpoint file")
    version = blob[len(MAGIC) + 1 : nl1].decode()
    if version != str(VERSION):
        raise CheckpointError(f"{path}: version {version}, expected {VERSION}")
    nl2 = blob.find(b"\n", nl1 + 1)
    if nl2 < 0:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header_len = int(blob[nl1 + 1 : nl2])
    except ValueError:
        raise CheckpointError(f"{path}: bad header length field")
    header_end = nl2 + 1 + header_len
    if header_end + 1 > len(blob):
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(blob[nl2 + 1 : header_end])
    except json.JSONDecodeError as e:
        raise CheckpointError(f"{path}: corrupt header: {e}")
    body = blob[header_end + 1 :]
    expected = sum(a["nbytes"] for a in header["arrays"])
    if len(body) != expected:
        raise CheckpointError(
            f"{path}: payload is {len(body)} bytes, header declares {expected}"
        )

    offset = 0
    layers = []
    array_iter = iter(header["arrays"])

    def take(shape):
        nonlocal offset
        entry = next(array_iter)
        n = entry["nbytes"]
        arr = np.frombuffer(body, "<f8", n // 8, offset).reshape(shape).copy()
        offset += n
        return Tensor(arr, requires_grad=True)

    for desc in header["architecture"]:
        kind = desc["kind"]
        if kind in ("conv2d", "dense", "scale_shift"):
            weight = take(desc["weight_shape"])
            bias = take((desc["weight_shape"][0],)) if desc["has_bias"] else None
            layers.append(
                Layer(
                    kind,
                    weight=weight,
                    bias=bias,
                    stride=desc.get("stride", 1),
                    padding=desc.get("padding", 0),
                )
            )
        elif kind == "maxpool":
            layers.append(Layer(kind, pool_size=desc["pool_size"], stride=desc["stride"]))
        else:
            layers.append(Layer(kind))
    model = Model(layers, header["input_shape"])
    return model, header["meta"]
