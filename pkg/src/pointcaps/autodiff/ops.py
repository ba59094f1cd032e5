"""Differentiable operations on Tensors.

Each function validates shapes, computes the forward value with numpy
and records the adjoint closure via ``make_op``. Reductions that must be
invariant under input permutation (the capsule-routing sum and batch
statistics) accept a ``deterministic`` flag that switches to a
sort-then-sum so equal multisets give bit-equal results.
"""
from __future__ import annotations

import numpy as np

from .tensor import ShapeError, Tensor, as_tensor, make_op, unbroadcast


def _axis_tuple(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def ordered_sum(arr, axis):
    """Permutation-invariant sum: sort along the reduced axes first.

    Sorting canonicalizes the accumulation order, so any permutation of
    the input along ``axis`` produces bit-identical output.
    """
    axes = _axis_tuple(axis, arr.ndim)
    if len(axes) == 1:
        work = np.sort(arr, axis=axes[0])
        return np.sum(work, axis=axes[0])
    moved = np.moveaxis(arr, axes, range(len(axes)))
    flat = moved.reshape((-1,) + moved.shape[len(axes):])
    return np.sum(np.sort(flat, axis=0), axis=0)


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data + b.data
    except ValueError:
        raise ShapeError("add: cannot broadcast %r with %r" % (a.shape, b.shape))
    return make_op(out, [
        (a, lambda g: unbroadcast(g, a.shape)),
        (b, lambda g: unbroadcast(g, b.shape)),
    ])


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data - b.data
    except ValueError:
        raise ShapeError("sub: cannot broadcast %r with %r" % (a.shape, b.shape))
    return make_op(out, [
        (a, lambda g: unbroadcast(g, a.shape)),
        (b, lambda g: unbroadcast(-g, b.shape)),
    ])


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data * b.data
    except ValueError:
        raise ShapeError("mul: cannot broadcast %r with %r" % (a.shape, b.shape))
    return make_op(out, [
        (a, lambda g: unbroadcast(g * b.data, a.shape)),
        (b, lambda g: unbroadcast(g * a.data, b.shape)),
    ])


def scale(a, s):
    """Multiply by a python scalar."""
    a = as_tensor(a)
    s = float(s)
    return make_op(a.data * s, [(a, lambda g: g * s)])


def neg(a):
    return scale(a, -1.0)


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul: needs ndim >= 2, got %r @ %r" % (a.shape, b.shape))
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError("matmul: inner dims differ, %r @ %r" % (a.shape, b.shape))
    out = np.matmul(a.data, b.data)
    return make_op(out, [
        (a, lambda g: unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape)),
        (b, lambda g: unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape)),
    ])


def relu(a):
    a = as_tensor(a)
    out = np.maximum(a.data, 0)
    mask = a.data > 0
    return make_op(out, [(a, lambda g: g * mask)])


def tanh(a):
    a = as_tensor(a)
    out = np.tanh(a.data)
    return make_op(out, [(a, lambda g: g * (1.0 - out * out))])


def exp(a):
    a = as_tensor(a)
    out = np.exp(a.data)
    return make_op(out, [(a, lambda g: g * out)])


def log(a):
    a = as_tensor(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(a.data)
    return make_op(out, [(a, lambda g: g / a.data)])


def square(a):
    a = as_tensor(a)
    return make_op(a.data * a.data, [(a, lambda g: g * (2.0 * a.data))])


def sqrt(a):
    """Elementwise square root. Inputs must be positive for a finite grad."""
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return make_op(out, [(a, lambda g: g * (0.5 / out))])


def softmax(a, axis):
    """Softmax along ``axis``, shift-stabilized."""
    a = as_tensor(a)
    shifted = a.data - np.max(a.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / np.sum(e, axis=axis, keepdims=True)

    def back(g):
        inner = np.sum(g * out, axis=axis, keepdims=True)
        return out * (g - inner)

    return make_op(out, [(a, back)])


def max_over_axis(a, axis, keepdims=False):
    """Max along one axis. Gradient goes to the lowest winning index."""
    a = as_tensor(a)
    axis = axis % a.ndim
    idx = np.argmax(a.data, axis=axis)
    out = np.take_along_axis(a.data, np.expand_dims(idx, axis), axis=axis)
    if not keepdims:
        out = np.squeeze(out, axis=axis)

    def back(g):
        gx = np.zeros_like(a.data)
        gg = g if keepdims else np.expand_dims(g, axis)
        np.put_along_axis(gx, np.expand_dims(idx, axis), gg, axis=axis)
        return gx

    return make_op(out, [(a, back)])


def sum_over_axis(a, axis=None, keepdims=False, deterministic=False):
    a = as_tensor(a)
    axes = _axis_tuple(axis, a.ndim)
    if deterministic:
        out = ordered_sum(a.data, axes)
        if keepdims:
            shape = list(a.shape)
            for ax in axes:
                shape[ax] = 1
            out = out.reshape(shape)
    else:
        out = np.sum(a.data, axis=axes, keepdims=keepdims)

    def back(g):
        gg = g
        if not keepdims:
            shape = list(a.shape)
            for ax in axes:
                shape[ax] = 1
            gg = np.reshape(g, shape)
        return np.broadcast_to(gg, a.shape)

    return make_op(out, [(a, back)])


def mean_over_axis(a, axis=None, keepdims=False, deterministic=False):
    a = as_tensor(a)
    axes = _axis_tuple(axis, a.ndim)
    n = 1
    for ax in axes:
        n *= a.shape[ax]
    total = sum_over_axis(a, axis=axes, keepdims=keepdims, deterministic=deterministic)
    return scale(total, 1.0 / n)


def concat(tensors, axis):
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat: empty input list")
    axis = axis % tensors[0].ndim
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def back_for(i):
        lo, hi = offsets[i], offsets[i + 1]

        def back(g):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            return g[tuple(sl)]

        return back

    return make_op(out, [(t, back_for(i)) for i, t in enumerate(tensors)])


def reshape(a, shape):
    a = as_tensor(a)
    out = np.reshape(a.data, shape)
    return make_op(out, [(a, lambda g: np.reshape(g, a.shape))])


def transpose(a, axes):
    a = as_tensor(a)
    axes = tuple(axes)
    inv = np.argsort(axes)
    out = np.transpose(a.data, axes)
    return make_op(out, [(a, lambda g: np.transpose(g, inv))])


def take_index(a, index, axis=0):
    """Select one slice along ``axis``, dropping that axis."""
    a = as_tensor(a)
    axis = axis % a.ndim
    if not 0 <= index < a.shape[axis]:
        raise ShapeError(
            "take_index: index %d out of range for axis %d of %r"
            % (index, axis, a.shape)
        )
    out = np.take(a.data, index, axis=axis)

    def back(g):
        gx = np.zeros_like(a.data)
        sl = [slice(None)] * a.ndim
        sl[axis] = index
        gx[tuple(sl)] = g
        return gx

    return make_op(out, [(a, back)])


def repeat_rows(a, repeats, axis):
    """Repeat each slice along ``axis`` ``repeats`` times, in place order."""
    a = as_tensor(a)
    axis = axis % a.ndim
    out = np.repeat(a.data, repeats, axis=axis)

    def back(g):
        shape = a.shape[:axis] + (a.shape[axis], repeats) + a.shape[axis + 1:]
        return g.reshape(shape).sum(axis=axis + 1)

    return make_op(out, [(a, back)])


def squash(a, axis=-1):
    """Capsule squash: v = s * |s| / (1 + |s|^2) along ``axis``.

    Maps the zero vector to zero (with zero gradient) and every other
    vector to norm |s|^2/(1+|s|^2) < 1, preserving direction.
    """
    a = as_tensor(a)
    x = a.data
    n2 = np.sum(x * x, axis=axis, keepdims=True)
    n = np.sqrt(n2)
    f = n / (1.0 + n2)
    out = x * f

    def back(g):
        # d/ds [f(n) s] = f I + f'(n)/n (s s^T), f'(n) = (1-n^2)/(1+n^2)^2
        denom = (1.0 + n2) * (1.0 + n2)
        fprime = (1.0 - n2) / denom
        inv_n = np.where(n > 0, 1.0 / np.where(n > 0, n, 1.0), 0.0)
        dot = np.sum(g * x, axis=axis, keepdims=True)
        return g * f + x * (dot * fprime * inv_n)

    return make_op(out, [(a, back)])


def _pairwise_distances(x, y):
    """Euclidean distance matrix between rows of x (n,d) and y (m,d)."""
    diff = x[:, None, :] - y[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def chamfer_terms(x, y):
    """Both directed Chamfer terms between two point sets.

    x: (n, d), y: (m, d). Returns (mean_x min_y dist, mean_y min_x dist)
    as scalar tensors; their sum is the symmetric Chamfer distance.
    Distances are plain Euclidean norms, not squared. Nearest-neighbor
    ties resolve to the lowest index; coincident pairs get zero gradient.
    """
    x, y = as_tensor(x), as_tensor(y)
    if x.ndim != 2 or y.ndim != 2 or x.shape[1] != y.shape[1]:
        raise ShapeError("chamfer: expected (n,d) and (m,d), got %r, %r" % (x.shape, y.shape))
    if x.shape[0] == 0 or y.shape[0] == 0:
        raise ShapeError("chamfer: empty point set")
    dmat = _pairwise_distances(x.data, y.data)
    idx_xy = np.argmin(dmat, axis=1)
    idx_yx = np.argmin(dmat, axis=0)
    d_xy = dmat[np.arange(x.shape[0]), idx_xy]
    d_yx = dmat[idx_yx, np.arange(y.shape[0])]
    dtype = x.data.dtype
    term_xy_val = np.asarray(np.mean(d_xy), dtype=dtype)
    term_yx_val = np.asarray(np.mean(d_yx), dtype=dtype)

    def _directed_back(src, dst, idx, dists, n):
        # unit vectors from matched dst point to each src point
        diff = src - dst[idx]
        safe = np.where(dists > 0, dists, 1.0)
        unit = np.where(dists[:, None] > 0, diff / safe[:, None], 0.0)
        return unit / n

    def back_xy(g):
        unit = _directed_back(x.data, y.data, idx_xy, d_xy, x.shape[0])
        return g * unit

    def back_xy_other(g):
        unit = _directed_back(x.data, y.data, idx_xy, d_xy, x.shape[0])
        out = np.zeros_like(y.data)
        np.add.at(out, idx_xy, -g * unit)
        return out

    def back_yx(g):
        unit = _directed_back(y.data, x.data, idx_yx, d_yx, y.shape[0])
        return g * unit

    def back_yx_other(g):
        unit = _directed_back(y.data, x.data, idx_yx, d_yx, y.shape[0])
        out = np.zeros_like(x.data)
        np.add.at(out, idx_yx, -g * unit)
        return out

    term_xy = make_op(term_xy_val, [(x, back_xy), (y, back_xy_other)])
    term_yx = make_op(term_yx_val, [(y, back_yx), (x, back_yx_other)])
    return term_xy, term_yx


def chamfer_distance(x, y):
    """Symmetric Chamfer distance as a differentiable scalar."""
    term_xy, term_yx = chamfer_terms(x, y)
    return add(term_xy, term_yx)


def _attach_operators():
    Tensor.__add__ = lambda self, other: add(self, other)
    Tensor.__radd__ = lambda self, other: add(other, self)
    Tensor.__sub__ = lambda self, other: sub(self, other)
    Tensor.__rsub__ = lambda self, other: sub(other, self)
    Tensor.__mul__ = lambda self, other: mul(self, other)
    Tensor.__rmul__ = lambda self, other: mul(other, self)
    Tensor.__matmul__ = lambda self, other: matmul(self, other)
    Tensor.__neg__ = lambda self: neg(self)


_attach_operators()
