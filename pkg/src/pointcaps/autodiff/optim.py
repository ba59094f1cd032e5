"""Parameter registry and the Adam optimizer."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor


@dataclass
class AdamConfig:
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def validate(self):
        if self.learning_rate <= 0:
            raise ValueError("adam: learning_rate must be positive")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("adam: betas must lie in [0, 1)")
        if self.epsilon <= 0:
            raise ValueError("adam: epsilon must be positive")


class _Entry:
    __slots__ = ("tensor", "m", "v", "trainable")

    def __init__(self, tensor, trainable):
        self.tensor = tensor
        self.trainable = trainable
        if trainable:
            self.m = np.zeros_like(tensor.data)
            self.v = np.zeros_like(tensor.data)
        else:
            self.m = None
            self.v = None


class ParameterStore:
    """Named parameters plus their Adam moments and a shared step count.

    Registration order is preserved; checkpointing serializes entries in
    sorted-name order so the layout is reproducible.
    """

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        if self.dtype not in (np.float32, np.float64):
            raise ValueError("parameter store dtype must be float32 or float64")
        self._entries = {}
        self.step = 0

    def add(self, name, value, trainable=True):
        if name in self._entries:
            raise ValueError("parameter %r already registered" % name)
        arr = np.array(value, dtype=self.dtype)
        t = Tensor(arr, requires_grad=trainable)
        t.grad = np.zeros_like(arr)
        self._entries[name] = _Entry(t, trainable)
        return t

    def __getitem__(self, name):
        return self._entries[name].tensor

    def __contains__(self, name):
        return name in self._entries

    def __len__(self):
        return len(self._entries)

    def names(self):
        return list(self._entries)

    def entry(self, name):
        return self._entries[name]

    def trainable_items(self):
        return [(n, e) for n, e in self._entries.items() if e.trainable]

    def zero_grad(self):
        for e in self._entries.values():
            if e.trainable:
                e.tensor.grad = np.zeros_like(e.tensor.data)

    def grad_norm(self):
        total = 0.0
        for _, e in self.trainable_items():
            if e.tensor.grad is not None:
                total += float(np.sum(e.tensor.grad.astype(np.float64) ** 2))
        return float(np.sqrt(total))

    def state_blobs(self):
        """All persistent arrays keyed by name, for checkpointing.

        Parameter values use the bare name; Adam moments append ``.m``
        and ``.v``. Iteration follows sorted parameter names.
        """
        blobs = {}
        for name in sorted(self._entries):
            e = self._entries[name]
            blobs[name] = e.tensor.data
            if e.trainable:
                blobs[name + ".m"] = e.m
                blobs[name + ".v"] = e.v
        return blobs

    def load_state_blobs(self, blobs):
        """Restore values and moments from ``state_blobs`` output."""
        for name in sorted(self._entries):
            e = self._entries[name]
            if name not in blobs:
                raise KeyError("checkpoint is missing parameter %r" % name)
            arr = blobs[name]
            if arr.shape != e.tensor.data.shape:
                raise ValueError(
                    "parameter %r has shape %r, checkpoint holds %r"
                    % (name, e.tensor.data.shape, arr.shape)
                )
            # write in place: batchnorm states alias these arrays
            e.tensor.data[...] = arr.astype(self.dtype, copy=False)
            e.tensor.grad = np.zeros_like(e.tensor.data)
            if e.trainable:
                e.m = blobs[name + ".m"].astype(self.dtype, copy=True)
                e.v = blobs[name + ".v"].astype(self.dtype, copy=True)


def adam_step(store, cfg):
    """One Adam update over every trainable parameter in the store.

    Uses the bias-corrected moments and applies
    theta -= lr * m_hat / (sqrt(v_hat) + epsilon). Parameters whose
    gradient is all zero keep their value (their moments still decay).
    """
    cfg.validate()
    store.step += 1
    t = store.step
    b1, b2 = cfg.beta1, cfg.beta2
    lr = cfg.learning_rate
    eps = cfg.epsilon
    corr1 = 1.0 - b1 ** t
    corr2 = 1.0 - b2 ** t
    for _, e in store.trainable_items():
        g = e.tensor.grad
        if g is None:
            g = np.zeros_like(e.tensor.data)
        e.m = b1 * e.m + (1.0 - b1) * g
        e.v = b2 * e.v + (1.0 - b2) * (g * g)
        m_hat = e.m / corr1
        v_hat = e.v / corr2
        e.tensor.data = e.tensor.data - lr * m_hat / (np.sqrt(v_hat) + eps)
