"""Dense float64 tensors with tape-based reverse-mode autodiff.

Every op builds a node on an implicit tape (parent links + a backward
closure). ``Tensor.backward()`` walks the tape in reverse topological
order and accumulates gradients into the ``grad`` buffers of tensors
that require them. No broadcasting: shapes must match exactly except
where an op defines its own rule (bias vectors in dense/conv,
per-channel affine in scale_shift).
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import as_strided

from .errors import ShapeError


class Tensor:
    """N-dimensional float64 value with an optional gradient buffer."""

    def __init__(self, data, requires_grad=False):
        arr = np.asarray(data, dtype=np.float64)
        if not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        self.data = arr  # 0-d stays 0-d so scalar losses convert cleanly
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self):
        """Reverse pass from a scalar root.

        Repeated calls without zeroing keep accumulating into ``grad``.
        """
        if self.data.size != 1:
            raise ShapeError(
                f"backward() needs a scalar root, got shape {self.data.shape}"
            )
        order = _toposort(self)
        local = {id(self): np.ones_like(self.data)}
        for node in order:
            g = local.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad:
                node._accumulate(g)
            if node._backward is None:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None:
                    continue
                if id(parent) in local:
                    local[id(parent)] = local[id(parent)] + pg
                else:
                    local[id(parent)] = pg

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def _toposort(root):
    """Deterministic reverse-topological order (iterative DFS)."""
    order = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))
    return list(reversed(order))


def _node(data, parents, backward):
    out = Tensor(data)
    out.requires_grad = False  # grads flow through, stored only on leaves
    out._parents = tuple(parents)
    out._backward = backward
    return out


def _as2d(t, name, op):
    if t.data.ndim != 2:
        raise ShapeError(f"{op}: {name} must be 2-D, got shape {t.data.shape}")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    _as2d(a, "a", "matmul")
    _as2d(b, "b", "matmul")
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(
            f"matmul: inner extents differ, {a.data.shape} x {b.data.shape}"
        )
    y = a.data @ b.data

    def backward(g):
        return g @ b.data.T, a.data.T @ g

    return _node(y, (a, b), backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ShapeError(f"add: shapes differ, {a.data.shape} vs {b.data.shape}")
    return _node(a.data + b.data, (a, b), lambda g: (g, g))


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _node(a.data * c, (a,), lambda g: (g * c,))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0

    def backward(g):
        return (g * mask,)

    return _node(np.where(mask, x.data, 0.0), (x,), backward)


def tsum(x: Tensor) -> Tensor:
    def backward(g):
        return (np.full_like(x.data, np.asarray(g).ravel()[0]),)

    return _node(np.array(x.data.sum()), (x,), backward)


def flatten(x: Tensor) -> Tensor:
    """N x C x H x W -> N x (C*H*W), channel-major (row-major reshape)."""
    if x.data.ndim < 2:
        raise ShapeError(f"flatten: need at least 2-D input, got {x.data.shape}")
    n = x.data.shape[0]
    y = x.data.reshape(n, -1)

    def backward(g):
        return (g.reshape(x.data.shape),)

    return _node(y, (x,), backward)


def dense(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """y = x @ w.T (+ b). Weight layout: out_features x in_features."""
    _as2d(x, "x", "dense")
    _as2d(w, "w", "dense")
    if x.data.shape[1] != w.data.shape[1]:
        raise ShapeError(
            f"dense: input features {x.data.shape[1]} != weight in-dim {w.data.shape[1]}"
        )
    y = x.data @ w.data.T
    if b is not None:
        if b.data.shape != (w.data.shape[0],):
            raise ShapeError(f"dense: bias shape {b.data.shape} != ({w.data.shape[0]},)")
        y = y + b.data

    def backward(g):
        grads = [g @ w.data, g.T @ x.data]
        if b is not None:
            grads.append(g.sum(axis=0))
        return grads

    parents = (x, w) if b is None else (x, w, b)
    return _node(y, parents, backward)


def _conv_out_extent(ext, k, stride, pad, op):
    span = ext + 2 * pad - k
    if span < 0 or span % stride != 0:
        raise ShapeError(
            f"{op}: extent {ext} with kernel {k}, stride {stride}, pad {pad} "
            "gives a non-integral output size"
        )
    return span // stride + 1


def _im2col(x, kh, kw, stride, pad):
    n, c, h, w = x.shape
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (w + 2 * pad - kw) // stride + 1
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    s0, s1, s2, s3 = xp.strides
    win = as_strided(
        xp,
        shape=(n, c, kh, kw, ho, wo),
        strides=(s0, s1, s2, s3, s2 * stride, s3 * stride),
    )
    return np.ascontiguousarray(win).reshape(n, c * kh * kw, ho * wo), ho, wo


def _col2im(dcol, x_shape, kh, kw, stride, pad, ho, wo):
    n, c, h, w = x_shape
    dxp = np.zeros((n, c, h + 2 * pad, w + 2 * pad))
    dcol = dcol.reshape(n, c, kh, kw, ho, wo)
    for a in range(kh):
        for b in range(kw):
            dxp[:, :, a : a + stride * ho : stride, b : b + stride * wo : stride] += dcol[
                :, :, a, b
            ]
    if pad:
        return dxp[:, :, pad:-pad, pad:-pad]
    return dxp


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride=1, padding=0) -> Tensor:
    """Cross-correlation (no kernel flip). x: NxCxHxW, w: OCxICxkhxkw."""
    if x.data.ndim != 4:
        raise ShapeError(f"conv2d: input must be 4-D, got {x.data.shape}")
    if w.data.ndim != 4:
        raise ShapeError(f"conv2d: weight must be 4-D, got {w.data.shape}")
    n, c, h, wd = x.data.shape
    oc, ic, kh, kw = w.data.shape
    if c != ic:
        raise ShapeError(f"conv2d: input channels {c} != weight in-channels {ic}")
    ho = _conv_out_extent(h, kh, stride, padding, "conv2d")
    wo = _conv_out_extent(wd, kw, stride, padding, "conv2d")
    col, _, _ = _im2col(x.data, kh, kw, stride, padding)
    wf = w.data.reshape(oc, -1)
    y = np.matmul(wf, col).reshape(n, oc, ho, wo)
    if b is not None:
        if b.data.shape != (oc,):
            raise ShapeError(f"conv2d: bias shape {b.data.shape} != ({oc},)")
        y = y + b.data.reshape(1, oc, 1, 1)

    def backward(g):
        gf = g.reshape(n, oc, ho * wo)
        dw = np.matmul(gf, col.transpose(0, 2, 1)).sum(axis=0).reshape(w.data.shape)
        dcol = np.matmul(wf.T, gf)
        dx = _col2im(dcol, x.data.shape, kh, kw, stride, padding, ho, wo)
        grads = [dx, dw]
        if b is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return grads

    parents = (x, w) if b is None else (x, w, b)
    return _node(y, parents, backward)


def maxpool2d(x: Tensor, size: int, stride: int | None = None) -> Tensor:
    """Max pooling; ties go to the first (lowest flat index) maximum."""
    if x.data.ndim != 4:
        raise ShapeError(f"maxpool2d: input must be 4-D, got {x.data.shape}")
    stride = size if stride is None else stride
    n, c, h, w = x.data.shape
    if h < size or w < size:
        raise ShapeError(f"maxpool2d: window {size} larger than input {h}x{w}")
    ho = (h - size) // stride + 1
    wo = (w - size) // stride + 1
    s0, s1, s2, s3 = x.data.strides
    win = as_strided(
        x.data,
        shape=(n, c, ho, wo, size, size),
        strides=(s0, s1, s2 * stride, s3 * stride, s2, s3),
    )
    flat = win.reshape(n, c, ho, wo, size * size)
    arg = flat.argmax(axis=-1)
    y = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]

    def backward(g):
        dx = np.zeros_like(x.data)
        ni, ci, ii, ji = np.indices((n, c, ho, wo))
        rows = ii * stride + arg // size
        cols = ji * stride + arg % size
        np.add.at(dx, (ni, ci, rows, cols), g)
        return (dx,)

    return _node(y, (x,), backward)


def scale_shift(x: Tensor, gamma: Tensor, beta: Tensor) -> Tensor:
    """Per-channel affine y = gamma[c]*x + beta[c] on NxC or NxCxHxW input."""
    if x.data.ndim not in (2, 4):
        raise ShapeError(f"scale_shift: input must be 2-D or 4-D, got {x.data.shape}")
    c = x.data.shape[1]
    if gamma.data.shape != (c,) or beta.data.shape != (c,):
        raise ShapeError(
            f"scale_shift: affine params must have shape ({c},), "
            f"got {gamma.data.shape} and {beta.data.shape}"
        )
    if x.data.ndim == 4:
        gview = gamma.data.reshape(1, c, 1, 1)
        bview = beta.data.reshape(1, c, 1, 1)
        axes = (0, 2, 3)
    else:
        gview, bview, axes = gamma.data, beta.data, (0,)
    y = x.data * gview + bview

    def backward(g):
        return g * gview, (g * x.data).sum(axis=axes), g.sum(axis=axes)

    return _node(y, (x, gamma, beta), backward)


def softmax_cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean cross-entropy over the batch, max-subtraction stabilized."""
    _as2d(logits, "logits", "softmax_cross_entropy")
    labels = np.asarray(labels)
    n, k = logits.data.shape
    if labels.shape != (n,):
        raise ShapeError(
            f"softmax_cross_entropy: labels shape {labels.shape} != ({n},)"
        )
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"softmax_cross_entropy: label out of range [0, {k})")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    ez = np.exp(z)
    p = ez / ez.sum(axis=1, keepdims=True)
    loss = -np.mean(np.log(p[np.arange(n), labels]))

    def backward(g):
        d = p.copy()
        d[np.arange(n), labels] -= 1.0
        return (d * (np.asarray(g).ravel()[0] / n),)

    return _node(np.array(loss), (logits,), backward)
