"""Reverse-mode automatic differentiation over dense numpy arrays.

Every operation builds its output ``Tensor`` together with an adjoint
closure. Calling ``backward`` on a scalar walks the recorded graph in
reverse topological order and accumulates gradients into leaf tensors
(and into any tensor whose ``keep_grad`` flag is set). Gradients add up
across backward calls; the caller zeroes them between optimizer steps.

Only first-order gradients are supported: adjoint closures compute with
plain numpy arrays, so differentiating through a backward pass is not
possible.
"""
from __future__ import annotations

import contextlib

import numpy as np


class ShapeError(ValueError):
    """Raised when an operation receives incompatibly shaped inputs."""


class NonFiniteError(FloatingPointError):
    """Raised in checked mode when a tensor holds NaN or infinity."""


_grad_enabled = True
_check_finite = False


def grad_enabled():
    return _grad_enabled


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block. Forward values only."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def set_check_finite(flag):
    """Toggle non-finite input detection on tensor creation.

    Returns the previous setting. Off by default; the overhead is one
    full scan per created tensor.
    """
    global _check_finite
    prev = _check_finite
    _check_finite = bool(flag)
    return prev


def check_finite_enabled():
    return _check_finite


class Tensor:
    """A dense array plus the bookkeeping needed for reverse mode.

    ``data`` is always a float32 or float64 numpy array. ``grad`` starts
    as None (or zeros for registered parameters) and receives the
    accumulated adjoint after ``backward``. Treat ``grad`` as read-only;
    reset it through the owning ParameterStore.
    """

    __slots__ = ("data", "grad", "requires_grad", "keep_grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad=False, _parents=(), _vjp=None):
        arr = np.asarray(data)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        if _check_finite and not np.all(np.isfinite(arr)):
            raise NonFiniteError("tensor holds non-finite values")
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.keep_grad = False
        self._parents = _parents
        self._vjp = _vjp

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def retain_grad(self):
        """Keep this tensor's gradient after backward even if not a leaf."""
        self.keep_grad = True
        return self

    def is_leaf(self):
        return not self._parents

    def backward(self):
        """Accumulate d(self)/d(leaf) into every reachable leaf's grad.

        ``self`` must be a scalar (shape ``()``).
        """
        if self.data.shape != ():
            raise ShapeError(
                "backward requires a scalar loss, got shape %r" % (self.data.shape,)
            )
        order = self._toposort()
        grads = {id(self): np.ones((), dtype=self.data.dtype)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.keep_grad or (node.is_leaf() and node.requires_grad):
                node.grad = g if node.grad is None else node.grad + g
            if node._vjp is None:
                continue
            for parent, pg in node._vjp(g):
                if pg is None:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    def _toposort(self):
        order = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        return order

    def __repr__(self):
        return "Tensor(shape=%r, dtype=%s, requires_grad=%s)" % (
            self.shape,
            self.data.dtype.name,
            self.requires_grad,
        )

    # Arithmetic sugar; implementations live in ops.py and are attached
    # there to avoid a circular import.


def as_tensor(value, dtype=None):
    """Wrap a value as a constant Tensor, casting when dtype is given."""
    if isinstance(value, Tensor):
        if dtype is not None and value.data.dtype != np.dtype(dtype):
            raise ShapeError(
                "tensor has dtype %s, expected %s" % (value.data.dtype, dtype)
            )
        return value
    arr = np.asarray(value)
    if dtype is not None:
        arr = arr.astype(dtype, copy=False)
    return Tensor(arr)


def make_op(out_data, pairs):
    """Build the output tensor of an op.

    ``pairs`` is a list of (input_tensor, adjoint_fn) tuples where
    adjoint_fn maps the output gradient to that input's gradient. Inputs
    that do not require gradients are dropped from the closure.
    """
    live = [(t, fn) for t, fn in pairs if t.requires_grad]
    if not _grad_enabled or not live:
        return Tensor(out_data)

    def vjp(g):
        return [(t, fn(g)) for t, fn in live]

    return Tensor(
        out_data,
        requires_grad=True,
        _parents=tuple(t for t, _ in live),
        _vjp=vjp,
    )


def unbroadcast(grad, shape):
    """Sum a broadcast gradient back down to ``shape``."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad
