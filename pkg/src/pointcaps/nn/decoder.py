"""Capsule-replication decoder.

Each latent capsule is replicated a fixed number of times; every replica
gets two fresh uniform grid coordinates appended and runs through a
point-wise shared MLP ending in tanh, producing one 3D point. The m
points born from capsule j form patch j, so the reconstruction carries a
point-to-capsule attribution for free.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import ShapeError, Tensor, as_tensor, ops
from .layers import BatchNorm, Linear

RESAMPLE_PER_FORWARD = "resample-per-forward"
FIXED_SEED = "fixed-seed"
GRID_MODES = (RESAMPLE_PER_FORWARD, FIXED_SEED)


@dataclass
class DecoderConfig:
    replicas_per_capsule: int = 32
    mlp_widths: tuple = ()  # empty means derive (latent_dim+2, 64, 32, 16, 3)
    grid_mode: str = RESAMPLE_PER_FORWARD
    grid_seed: int = 0

    def widths_for(self, latent_dim):
        if self.mlp_widths:
            return tuple(self.mlp_widths)
        return (latent_dim + 2, 64, 32, 16, 3)

    def validate(self, latent_dim=None):
        if self.replicas_per_capsule < 1:
            raise ValueError("decoder: replicas_per_capsule must be positive")
        if self.grid_mode not in GRID_MODES:
            raise ValueError(
                "decoder: grid_mode must be one of %r, got %r"
                % (GRID_MODES, self.grid_mode)
            )
        if self.mlp_widths:
            if self.mlp_widths[-1] != 3:
                raise ValueError("decoder: mlp must end at width 3")
            if latent_dim is not None and self.mlp_widths[0] != latent_dim + 2:
                raise ValueError(
                    "decoder: mlp input width must be latent_dim+2 (%d), got %d"
                    % (latent_dim + 2, self.mlp_widths[0])
                )


@dataclass
class PatchGrid:
    """Grid coordinates, one (u, v) row per output point, in open (0, 1)."""

    coords: np.ndarray

    def rows(self):
        return self.coords.shape[0]


def sample_grid(cfg, latent_count, seed=None, rng=None, dtype=np.float32):
    """Draw latent_count * replicas_per_capsule coordinate pairs.

    Either a seed or an existing numpy Generator may be given. Entries
    lie strictly inside (0, 1); zeros from the generator are redrawn.
    """
    if rng is None:
        rng = np.random.Generator(np.random.PCG64(seed))
    n = latent_count * cfg.replicas_per_capsule
    coords = rng.random((n, 2))
    while True:
        zeros = coords == 0.0
        if not zeros.any():
            break
        coords[zeros] = rng.random(int(zeros.sum()))
    return PatchGrid(coords.astype(dtype))


@dataclass
class Reconstruction:
    """Decoded points plus which capsule produced each one."""

    points: np.ndarray      # (p, 3)
    attribution: np.ndarray  # (p,) capsule index per point

    def patch(self, capsule):
        return self.points[self.attribution == capsule]


class CapsuleDecoder:
    """Shared point MLP over replicated capsules with grid coordinates."""

    def __init__(self, cfg, latent_count, latent_dim, store, rng):
        cfg.validate(latent_dim)
        self.cfg = cfg
        self.latent_count = latent_count
        self.latent_dim = latent_dim
        widths = cfg.widths_for(latent_dim)
        self.mlp = []
        self.mlp_bn = []
        for i in range(len(widths) - 2):
            self.mlp.append(Linear(store, "dec.mlp%d" % i, widths[i], widths[i + 1], rng))
            self.mlp_bn.append(BatchNorm(store, "dec.mlp%d.bn" % i, widths[i + 1]))
        self.out = Linear(store, "dec.out", widths[-2], widths[-1], rng)

    def batchnorms(self):
        return list(self.mlp_bn)

    def attribution(self):
        return np.repeat(
            np.arange(self.latent_count), self.cfg.replicas_per_capsule
        )

    def decode(self, latent, grid, deterministic=False):
        """Decode (batch, latent_count, latent_dim) to (batch, points, 3).

        The same grid is applied to every shape in the batch; row
        j*replicas + r of the output belongs to capsule j.
        """
        latent = as_tensor(latent)
        if latent.ndim != 3 or latent.shape[1] != self.latent_count \
                or latent.shape[2] != self.latent_dim:
            raise ShapeError(
                "decoder: expected (batch, %d, %d) latent, got %r"
                % (self.latent_count, self.latent_dim, latent.shape)
            )
        m = self.cfg.replicas_per_capsule
        total = self.latent_count * m
        if grid.coords.shape != (total, 2):
            raise ShapeError(
                "decoder: grid must be (%d, 2), got %r" % (total, grid.coords.shape)
            )
        b = latent.shape[0]
        reps = ops.repeat_rows(latent, m, axis=1)  # (b, total, d)
        coords = np.broadcast_to(
            grid.coords.astype(latent.dtype, copy=False), (b, total, 2)
        )
        h = ops.concat([reps, Tensor(coords)], axis=2)
        for lin, bn in zip(self.mlp, self.mlp_bn):
            h = ops.relu(bn(lin(h), deterministic=deterministic))
        return ops.tanh(self.out(h))

    def decode_single_capsule(self, latent, capsule, grid):
        """Decode one capsule's patch with its slice of the grid.

        Runs in whatever batchnorm mode the layers are currently in;
        with eval-mode batchnorm this equals the corresponding rows of a
        full decode bit for bit.
        """
        latent = as_tensor(latent)
        if latent.ndim != 2:
            raise ShapeError(
                "decode_single_capsule: expected (count, dim) latent, got %r"
                % (latent.shape,)
            )
        if not 0 <= capsule < self.latent_count:
            raise IndexError(
                "decode_single_capsule: capsule %d out of range [0, %d)"
                % (capsule, self.latent_count)
            )
        m = self.cfg.replicas_per_capsule
        row = latent.data[capsule]
        reps = np.broadcast_to(row, (m, row.shape[0]))
        coords = grid.coords[capsule * m:(capsule + 1) * m].astype(latent.dtype, copy=False)
        h = Tensor(np.concatenate([reps, coords], axis=1))
        for lin, bn in zip(self.mlp, self.mlp_bn):
            h = ops.relu(bn(lin(h)))
        return ops.tanh(self.out(h))
