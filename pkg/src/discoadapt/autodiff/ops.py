"""Differentiable primitives.

Every function takes tensors (or array-likes, treated as constants) and
returns a new tensor. Broadcasting follows numpy; backward rules sum the
upstream gradient back down to each operand's shape.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy.special import expit

from .tensor import DTYPE, ShapeError, Tensor, as_tensor, make_node


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _check_broadcast(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


# -- elementwise binary ------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("add", a, b)
    sa, sb = a.shape, b.shape
    return make_node("add", a.data + b.data, (a, b),
                     lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("sub", a, b)
    sa, sb = a.shape, b.shape
    return make_node("sub", a.data - b.data, (a, b),
                     lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("mul", a, b)
    ad, bd = a.data, b.data
    return make_node("mul", ad * bd, (a, b),
                     lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("div", a, b)
    ad, bd = a.data, b.data
    out = ad / bd

    def backward(g):
        return _unbroadcast(g / bd, ad.shape), _unbroadcast(-g * out / bd, bd.shape)

    return make_node("div", out, (a, b), backward)


def neg(a) -> Tensor:
    a = as_tensor(a)
    return make_node("neg", -a.data, (a,), lambda g: (-g,))


def scale(a, c: float) -> Tensor:
    """Multiply by a python scalar constant."""
    a = as_tensor(a)
    c = float(c)
    return make_node("scale", a.data * c, (a,), lambda g: (g * c,))


# -- linear algebra ----------------------------------------------------------

def matmul(a, b) -> Tensor:
    """Matrix product; ``a`` may carry leading batch axes, ``b`` is 1-D or 2-D."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim == 0 or b.ndim == 0 or b.ndim > 2 or a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} are not aligned")
    ad, bd = a.data, b.data

    def backward(g):
        ga = gb = None
        if bd.ndim == 1:
            if a.requires_grad:
                ga = g[..., None] * bd
            if b.requires_grad:
                gb = np.tensordot(g, ad, axes=(tuple(range(g.ndim)), tuple(range(ad.ndim - 1))))
        else:
            if a.requires_grad:
                ga = g @ bd.T
            if b.requires_grad:
                a2 = ad.reshape(-1, ad.shape[-1])
                gb = a2.T @ g.reshape(-1, g.shape[-1]) if ad.ndim > 1 else np.outer(ad, g)
        return ga, gb

    return make_node("matmul", ad @ bd, (a, b), backward)


def transpose(a) -> Tensor:
    a = as_tensor(a)
    return make_node("transpose", a.data.T, (a,), lambda g: (g.T,))


def reshape(a, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    old = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view {old} as {tuple(shape)}") from None
    return make_node("reshape", out, (a,), lambda g: (g.reshape(old),))


# -- nonlinearities ----------------------------------------------------------

def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return make_node("tanh", out, (a,), lambda g: (g * (1.0 - out * out),))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = expit(a.data)
    return make_node("sigmoid", out, (a,), lambda g: (g * out * (1.0 - out),))


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return make_node("relu", np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def leaky_relu(a, slope: float = 0.01) -> Tensor:
    a = as_tensor(a)
    factor = np.where(a.data > 0, 1.0, slope)
    return make_node("leaky_relu", a.data * factor, (a,), lambda g: (g * factor,))


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return make_node("exp", out, (a,), lambda g: (g * out,))


def log(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    return make_node("log", np.log(x), (a,), lambda g: (g / x,))


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return make_node("softmax", out, (a,), backward)


def log_softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse

    def backward(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return make_node("log_softmax", out, (a,), backward)


# -- reductions --------------------------------------------------------------

def sum(a, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    shape = a.shape

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape),)

    return make_node("sum", np.asarray(a.data.sum(axis=axis, keepdims=keepdims)), (a,), backward)


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    shape = a.shape
    n = a.size if axis is None else int(np.prod([shape[i] for i in np.atleast_1d(axis)]))
    if n == 0:
        raise ShapeError(f"mean: empty reduction over shape {shape}")

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / n, shape),)

    return make_node("mean", np.asarray(a.data.mean(axis=axis, keepdims=keepdims)), (a,), backward)


def squared_distance(a, b, axis: int = -1) -> Tensor:
    """Squared L2 distance along ``axis``."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"squared_distance: shapes {a.shape} and {b.shape} differ")
    diff = a.data - b.data

    def backward(g):
        gd = 2.0 * np.expand_dims(g, axis) * diff
        return gd, -gd

    return make_node("squared_distance", (diff * diff).sum(axis=axis), (a, b), backward)


# -- structure ---------------------------------------------------------------

def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError:
        raise ShapeError(f"concat: shapes {[t.shape for t in ts]} do not line up on axis {axis}") from None
    bounds = np.cumsum([t.shape[axis] for t in ts])[:-1]
    return make_node("concat", out, tuple(ts), lambda g: tuple(np.split(g, bounds, axis=axis)))


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    try:
        out = np.stack([t.data for t in ts], axis=axis)
    except ValueError:
        raise ShapeError(f"stack: shapes {[t.shape for t in ts]} differ") from None

    def backward(g):
        return tuple(np.moveaxis(g, axis, 0))

    return make_node("stack", out, tuple(ts), backward)


def _is_basic(key) -> bool:
    keys = key if isinstance(key, tuple) else (key,)
    return all(isinstance(k, (slice, int, np.integer)) or k is None or k is Ellipsis for k in keys)


def getitem(a, key) -> Tensor:
    """Basic or advanced indexing (slices, masks, integer arrays)."""
    a = as_tensor(a)
    shape = a.shape
    out = a.data[key]

    basic = _is_basic(key)

    def backward(g):
        full = np.zeros(shape, dtype=DTYPE)
        if basic:
            full[key] = g
        else:
            np.add.at(full, key, g)
        return (full,)

    return make_node("getitem", np.array(out, dtype=DTYPE), (a,), backward)


def gather(table, ids) -> Tensor:
    """Row lookup ``table[ids]`` (embedding gather); ids may have any shape."""
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    if table.ndim != 2:
        raise ShapeError(f"gather: table must be 2-D, got {table.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeError(f"gather: ids out of range for table {table.shape}")
    shape = table.shape

    def backward(g):
        full = np.zeros(shape, dtype=DTYPE)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, shape[1]))
        return (full,)

    return make_node("gather", table.data[ids], (table,), backward)


def take_along(a, index: np.ndarray, axis: int) -> Tensor:
    """``np.take_along_axis`` with an integer index broadcastable to ``a``."""
    a = as_tensor(a)
    index = np.asarray(index, dtype=np.int64)
    shape = a.shape

    def backward(g):
        full = np.zeros(shape, dtype=DTYPE)
        idx = np.broadcast_to(index, g.shape)
        grids = list(np.indices(g.shape, sparse=True))
        grids[axis] = idx
        np.add.at(full, tuple(grids), g)
        return (full,)

    return make_node("take_along", np.take_along_axis(a.data, index, axis), (a,), backward)


def masked_fill(a, mask: np.ndarray, value: float) -> Tensor:
    """Replace entries where ``mask`` is True by a constant; no gradient flows there."""
    a = as_tensor(a)
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), a.shape)
    keep = ~mask
    return make_node("masked_fill", np.where(mask, value, a.data), (a,), lambda g: (g * keep,))


# -- gradient routing --------------------------------------------------------

def stop_gradient(a) -> Tensor:
    """Same values, cut from the graph."""
    return as_tensor(a).detach()


def grad_reverse(a, lam: float) -> Tensor:
    """Identity forward; backward multiplies incoming gradients by ``-lam``."""
    a = as_tensor(a)
    lam = float(lam)
    if not np.isfinite(lam):
        raise ValueError(f"grad_reverse: lambda must be finite, got {lam}")
    return make_node("grad_reverse", a.data, (a,), lambda g: (-lam * g,))
