"""Point-cloud encoder producing primary point capsules.

A point-wise shared MLP lifts each point to a feature vector, then a
bank of independent branch layers (one linear map per branch, all
applied point-wise) is max-pooled over the points. Branch k contributes
one pooled response per capsule slot, so capsule i is the vector of
branch responses at slot i: with branch_count K and branch_width S the
result is an (S, K) primary-capsule matrix per shape.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..autodiff import ShapeError, ops
from .layers import BatchNorm, Linear


@dataclass
class EncoderConfig:
    n_points: int = 2048
    point_dim: int = 3
    mlp_widths: tuple = (3, 64, 128)
    branch_count: int = 16
    branch_width: int = 1024

    def validate(self):
        if self.n_points < 1:
            raise ValueError("encoder: n_points must be positive")
        if len(self.mlp_widths) < 2:
            raise ValueError("encoder: mlp_widths needs at least input and output")
        if self.mlp_widths[0] != self.point_dim:
            raise ValueError(
                "encoder: mlp_widths must start at point_dim (%d), got %r"
                % (self.point_dim, self.mlp_widths)
            )
        if self.branch_count < 1 or self.branch_width < 1:
            raise ValueError("encoder: branch_count and branch_width must be positive")


class CapsuleEncoder:
    """Shared MLP plus branch bank; owns its layers, params live in the store."""

    def __init__(self, cfg, store, rng):
        cfg.validate()
        self.cfg = cfg
        widths = cfg.mlp_widths
        self.mlp = []
        self.mlp_bn = []
        for i in range(len(widths) - 1):
            self.mlp.append(Linear(store, "enc.mlp%d" % i, widths[i], widths[i + 1], rng))
            self.mlp_bn.append(BatchNorm(store, "enc.mlp%d.bn" % i, widths[i + 1]))
        feat = widths[-1]
        total = cfg.branch_count * cfg.branch_width
        # all branches fused into one linear map; channel c = k*branch_width + s
        self.branches = Linear(store, "enc.branches", feat, total, rng)
        self.branches_bn = BatchNorm(store, "enc.branches.bn", total)

    def batchnorms(self):
        return self.mlp_bn + [self.branches_bn]

    def encode_primary(self, points, deterministic=False):
        """Map (batch, n_points, point_dim) to (batch, branch_width, branch_count)."""
        cfg = self.cfg
        if points.ndim != 3 or points.shape[-1] != cfg.point_dim:
            raise ShapeError(
                "encoder: expected (batch, n, %d) points, got %r"
                % (cfg.point_dim, points.shape)
            )
        if points.shape[1] != cfg.n_points:
            raise ShapeError(
                "encoder: configured for %d points per cloud, got %d"
                % (cfg.n_points, points.shape[1])
            )
        h = points
        for lin, bn in zip(self.mlp, self.mlp_bn):
            h = ops.relu(bn(lin(h), deterministic=deterministic))
        z = ops.relu(self.branches_bn(self.branches(h), deterministic=deterministic))
        pooled = ops.max_over_axis(z, axis=1)  # (batch, K*S)
        b = pooled.shape[0]
        stacked = ops.reshape(pooled, (b, cfg.branch_count, cfg.branch_width))
        return ops.transpose(stacked, (0, 2, 1))  # (batch, S, K)
