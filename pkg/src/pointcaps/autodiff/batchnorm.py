"""Batch normalization over the trailing channel axis.

The input may have any number of leading axes; statistics are taken per
channel over all of them, so a (batch, points, channels) activation is
normalized across every point of every shape in the batch. Variance is
the population (biased) estimate. Running statistics follow
new = (1 - momentum) * old + momentum * batch with momentum 0.1.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import ShapeError, Tensor, as_tensor, make_op
from .ops import ordered_sum


@dataclass
class BatchNormState:
    """Per-layer normalization state.

    gamma and beta are trainable tensors registered with the owning
    ParameterStore; the running statistics are plain buffers updated in
    place during training-mode forwards and used verbatim in eval mode.
    """

    gamma: Tensor
    beta: Tensor
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1
    epsilon: float = 1e-5
    mode: str = "train"

    def train(self):
        self.mode = "train"

    def eval(self):
        self.mode = "eval"

    @property
    def channels(self):
        return self.gamma.shape[0]


def batchnorm(x, state, deterministic=False):
    """Normalize ``x`` per channel and apply the affine transform.

    Training mode uses batch statistics (and needs at least two rows);
    eval mode uses the running estimates. With ``deterministic`` the
    batch statistics are computed with an order-canonical sum so row
    permutations give bit-identical output.
    """
    x = as_tensor(x)
    c = state.channels
    if x.ndim < 2 or x.shape[-1] != c:
        raise ShapeError(
            "batchnorm: expected (..., %d) channels, got %r" % (c, x.shape)
        )
    gamma, beta = state.gamma, state.beta
    lead = x.shape[:-1]
    rows = int(np.prod(lead)) if lead else 1
    flat = x.data.reshape(rows, c)

    if state.mode == "train":
        if rows < 2:
            raise ShapeError(
                "batchnorm: training mode needs at least 2 rows, got %d" % rows
            )
        if deterministic:
            mean = ordered_sum(flat, 0) / rows
            var = ordered_sum((flat - mean) ** 2, 0) / rows
        else:
            mean = flat.mean(axis=0)
            var = flat.var(axis=0)
        m = state.momentum
        state.running_mean[...] = (1.0 - m) * state.running_mean + m * mean
        state.running_var[...] = (1.0 - m) * state.running_var + m * var
    elif state.mode == "eval":
        mean = state.running_mean
        var = state.running_var
    else:
        raise ValueError("batchnorm: unknown mode %r" % (state.mode,))

    inv_std = 1.0 / np.sqrt(var + np.asarray(state.epsilon, dtype=x.dtype))
    xhat = (flat - mean) * inv_std
    out = (xhat * gamma.data + beta.data).reshape(x.shape)

    if state.mode == "eval":
        def back_x(g):
            return (g.reshape(rows, c) * (gamma.data * inv_std)).reshape(x.shape)
    else:
        def back_x(g):
            # population-variance backward, reductions over the row axis
            gf = g.reshape(rows, c) * gamma.data
            mean_g = gf.mean(axis=0)
            mean_gx = (gf * xhat).mean(axis=0)
            dx = inv_std * (gf - mean_g - xhat * mean_gx)
            return dx.reshape(x.shape)

    def back_gamma(g):
        return (g.reshape(rows, c) * xhat).sum(axis=0)

    def back_beta(g):
        return g.reshape(rows, c).sum(axis=0)

    return make_op(out, [(x, back_x), (gamma, back_gamma), (beta, back_beta)])
