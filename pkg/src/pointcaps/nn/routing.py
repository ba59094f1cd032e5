"""Routing of primary capsules into latent capsules.

Two interchangeable aggregators produce the (latent_count, latent_dim)
latent grid from the primary capsules:

* dynamic routing by agreement: each output capsule gets a learned
  prediction map shared across all input capsules; coupling
  coefficients start uniform (zero logits), are refined for a fixed
  number of iterations and the whole loop stays on the gradient tape.
  The logit update is skipped after the final iteration because nothing
  would consume it.

* a routing-free ablation: independent branches lift each primary
  capsule point-wise and are max-pooled over the primary capsules, one
  branch per latent capsule row.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import NonFiniteError, ShapeError, Tensor, as_tensor, ops
from .layers import BatchNorm, Linear, glorot_uniform

DYNAMIC_ROUTING = "dynamic-routing"
CONV_ABLATION = "conv-ablation"
ROUTING_MODES = (DYNAMIC_ROUTING, CONV_ABLATION)


@dataclass
class RoutingConfig:
    latent_count: int = 64
    latent_dim: int = 64
    iterations: int = 3
    mode: str = DYNAMIC_ROUTING

    def validate(self):
        if self.latent_count < 1 or self.latent_dim < 1:
            raise ValueError("routing: latent_count and latent_dim must be positive")
        if self.iterations < 1:
            raise ValueError("routing: iterations must be at least 1")
        if self.mode not in ROUTING_MODES:
            raise ValueError(
                "routing: mode must be one of %r, got %r" % (ROUTING_MODES, self.mode)
            )


@dataclass
class RoutingState:
    """Intermediates of one routing run, for inspection and tests.

    logits and couplings are from the final iteration;
    coupling_history holds the couplings of every iteration in order.
    All arrays are detached copies.
    """

    logits: np.ndarray
    couplings: np.ndarray
    predictions: np.ndarray
    outputs: np.ndarray
    coupling_history: list


class DynamicRouting:
    """Agreement routing with one prediction map per output capsule."""

    def __init__(self, cfg, in_dim, store, rng):
        cfg.validate()
        self.cfg = cfg
        self.in_dim = in_dim
        out = cfg.latent_count * cfg.latent_dim
        # prediction maps for all output capsules, fused: column block j
        # holds the (in_dim -> latent_dim) map of output capsule j
        init = glorot_uniform(rng, in_dim, cfg.latent_dim, (in_dim, out), store.dtype)
        self.w = store.add("route.pred.w", init)
        self.b = store.add("route.pred.b", np.zeros(out, dtype=store.dtype))

    def __call__(self, primary, deterministic=False, record_state=False):
        """Route (batch, n_in, in_dim) capsules to (batch, latent_count, latent_dim)."""
        cfg = self.cfg
        if primary.ndim != 3 or primary.shape[-1] != self.in_dim:
            raise ShapeError(
                "routing: expected (batch, n, %d) capsules, got %r"
                % (self.in_dim, primary.shape)
            )
        b, n_in, _ = primary.shape
        j, d = cfg.latent_count, cfg.latent_dim

        flat = ops.add(ops.matmul(primary, self.w), self.b)  # (b, n_in, j*d)
        u_hat = ops.reshape(flat, (b, n_in, j, d))

        logits = Tensor(np.zeros((b, n_in, j), dtype=primary.dtype))
        history = []
        couplings = None
        outputs = None
        for it in range(cfg.iterations):
            couplings = ops.softmax(logits, axis=2)
            weighted = ops.mul(ops.reshape(couplings, (b, n_in, j, 1)), u_hat)
            pre = ops.sum_over_axis(weighted, axis=1, deterministic=deterministic)
            outputs = ops.squash(pre, axis=-1)  # (b, j, d)
            if not np.all(np.isfinite(outputs.data)):
                raise NonFiniteError(
                    "routing: non-finite capsules at iteration %d" % it
                )
            if record_state:
                history.append(np.array(couplings.data))
            if it + 1 < cfg.iterations:
                # agreement between predictions and current outputs
                agree = ops.sum_over_axis(
                    ops.mul(u_hat, ops.reshape(outputs, (b, 1, j, d))), axis=3
                )
                logits = ops.add(logits, agree)

        if record_state:
            state = RoutingState(
                logits=np.array(logits.data),
                couplings=np.array(couplings.data),
                predictions=np.array(u_hat.data),
                outputs=np.array(outputs.data),
                coupling_history=history,
            )
            return outputs, state
        return outputs


class ConvAblation:
    """Routing-free aggregator: branch MLPs max-pooled over primary capsules."""

    def __init__(self, cfg, in_dim, store, rng):
        cfg.validate()
        self.cfg = cfg
        self.in_dim = in_dim
        total = cfg.latent_count * cfg.latent_dim
        self.lift = Linear(store, "route.ablation", in_dim, total, rng)
        self.bn = BatchNorm(store, "route.ablation.bn", total)

    def batchnorms(self):
        return [self.bn]

    def __call__(self, primary, deterministic=False):
        cfg = self.cfg
        if primary.ndim != 3 or primary.shape[-1] != self.in_dim:
            raise ShapeError(
                "routing: expected (batch, n, %d) capsules, got %r"
                % (self.in_dim, primary.shape)
            )
        b = primary.shape[0]
        z = ops.relu(self.bn(self.lift(primary), deterministic=deterministic))
        pooled = ops.max_over_axis(z, axis=1)  # (b, latent_count*latent_dim)
        return ops.reshape(pooled, (b, cfg.latent_count, cfg.latent_dim))


def squash(vectors, axis=-1):
    """Convenience wrapper over the squash op for raw arrays or tensors."""
    return ops.squash(as_tensor(vectors), axis=axis)
