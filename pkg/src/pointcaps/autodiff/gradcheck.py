"""Finite-difference gradient checking utilities.

Central differences with a small step are the reference; analytic
gradients from the tape must agree elementwise within
|analytic - numeric| <= atol + rtol * |numeric|. Run checks in float64,
away from non-differentiable points (ReLU and max ties).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor, no_grad

DEFAULT_STEP = 1e-6
DEFAULT_RTOL = 1e-4
DEFAULT_ATOL = 1e-7


@dataclass
class GradCheckResult:
    name: str
    ok: bool
    max_rel_error: float

    def __str__(self):
        status = "ok" if self.ok else "FAIL"
        return "%-40s %s  (max rel err %.3e)" % (self.name, status, self.max_rel_error)


def numeric_gradient(f, arrays, step=DEFAULT_STEP):
    """Central-difference gradient of scalar ``f`` w.r.t. each array.

    ``f`` takes no arguments and reads the arrays in place; they are
    perturbed one element at a time and restored afterwards.
    """
    grads = []
    with no_grad():
        for arr in arrays:
            g = np.zeros_like(arr)
            flat = arr.reshape(-1)
            gflat = g.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + step
                hi = f()
                flat[i] = orig - step
                lo = f()
                flat[i] = orig
                gflat[i] = (hi - lo) / (2.0 * step)
            grads.append(g)
    return grads


def compare_gradients(analytic, numeric, rtol=DEFAULT_RTOL, atol=DEFAULT_ATOL):
    """Worst-case error ratio; <= 1 means every element is within tolerance."""
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = atol + rtol * np.abs(n)
        ratio = np.abs(a - n) / denom
        if ratio.size:
            worst = max(worst, float(ratio.max()))
    return worst


def gradcheck(name, fn, inputs, step=DEFAULT_STEP, rtol=DEFAULT_RTOL, atol=DEFAULT_ATOL):
    """Check d(fn)/d(inputs) against central differences.

    ``fn`` maps Tensors (one per input array) to a scalar Tensor. Inputs
    should be float64 arrays positioned away from kinks.
    """
    arrays = [np.array(a, dtype=np.float64) for a in inputs]
    tensors = [Tensor(a, requires_grad=True) for a in arrays]
    loss = fn(*tensors)
    loss.backward()
    analytic = [
        t.grad if t.grad is not None else np.zeros_like(t.data) for t in tensors
    ]

    def value():
        return float(fn(*[Tensor(a) for a in arrays]).data)

    numeric = numeric_gradient(value, arrays, step=step)
    worst = compare_gradients(analytic, numeric, rtol=rtol, atol=atol)
    return GradCheckResult(name, worst <= 1.0, worst * rtol)


def gradcheck_params(name, loss_fn, store, names=None, step=DEFAULT_STEP,
                     rtol=DEFAULT_RTOL, atol=DEFAULT_ATOL):
    """Check gradients w.r.t. parameters of a store-backed model.

    ``loss_fn`` takes no arguments, runs the forward pass and returns a
    scalar Tensor; it must be a pure function of the store parameters.
    """
    if store.dtype != np.float64:
        raise ValueError("gradcheck requires a float64 parameter store")
    if names is None:
        names = [n for n, _ in store.trainable_items()]
    store.zero_grad()
    loss = loss_fn()
    loss.backward()
    analytic = [store[n].grad.copy() for n in names]

    def value():
        return float(loss_fn().data)

    arrays = [store[n].data for n in names]
    numeric = numeric_gradient(value, arrays, step=step)
    worst = compare_gradients(analytic, numeric, rtol=rtol, atol=atol)
    return GradCheckResult(name, worst <= 1.0, worst * rtol)
