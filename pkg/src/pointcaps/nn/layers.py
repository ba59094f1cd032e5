"""Building blocks: linear layers with Glorot init, batchnorm wrappers."""
from __future__ import annotations

import numpy as np

from ..autodiff import BatchNormState, batchnorm, ops


def glorot_uniform(rng, fan_in, fan_out, shape, dtype):
    """Uniform init on [-a, a] with a = sqrt(6 / (fan_in + fan_out))."""
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape).astype(dtype)


class Linear:
    """y = x @ w + b with w (fan_in, fan_out), bias starts at zero."""

    def __init__(self, store, name, fan_in, fan_out, rng):
        self.name = name
        self.fan_in = fan_in
        self.fan_out = fan_out
        init = glorot_uniform(rng, fan_in, fan_out, (fan_in, fan_out), store.dtype)
        self.w = store.add(name + ".w", init)
        self.b = store.add(name + ".b", np.zeros(fan_out, dtype=store.dtype))

    def __call__(self, x):
        return ops.add(ops.matmul(x, self.w), self.b)


class BatchNorm:
    """Channel batchnorm whose affine parameters live in the store.

    Running statistics are registered as non-trainable entries so that
    checkpoints capture them alongside the weights.
    """

    def __init__(self, store, name, channels, momentum=0.1, epsilon=1e-5):
        self.name = name
        gamma = store.add(name + ".gamma", np.ones(channels, dtype=store.dtype))
        beta = store.add(name + ".beta", np.zeros(channels, dtype=store.dtype))
        rm = store.add(
            name + ".running_mean", np.zeros(channels, dtype=store.dtype),
            trainable=False,
        )
        rv = store.add(
            name + ".running_var", np.ones(channels, dtype=store.dtype),
            trainable=False,
        )
        self.state = BatchNormState(
            gamma=gamma,
            beta=beta,
            running_mean=rm.data,
            running_var=rv.data,
            momentum=momentum,
            epsilon=epsilon,
        )

    def __call__(self, x, deterministic=False):
        return batchnorm(x, self.state, deterministic=deterministic)

    def train(self):
        self.state.train()

    def eval(self):
        self.state.eval()
