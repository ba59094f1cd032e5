"""Shared fixtures: miniature model configs and tie-free point clouds."""
import numpy as np
import pytest

from pointcaps.nn.decoder import DecoderConfig
from pointcaps.nn.encoder import EncoderConfig
from pointcaps.nn.model import PointCapsuleAE
from pointcaps.nn.routing import RoutingConfig


def tiny_configs(n_points=16, latent_count=4, latent_dim=6, replicas=4,
                 iterations=3, mode="dynamic-routing"):
    enc = EncoderConfig(
        n_points=n_points, mlp_widths=(3, 6, 8), branch_count=4, branch_width=12
    )
    rod = RoutingConfig(
        latent_count=latent_count, latent_dim=latent_dim,
        iterations=iterations, mode=mode,
    )
    dec = DecoderConfig(replicas_per_capsule=replicas, mlp_widths=(8, 10, 6, 3))
    return enc, rod, dec


def tiny_model(seed=0, deterministic=False, dtype=np.float32, **kwargs):
    enc, rod, dec = tiny_configs(**kwargs)
    return PointCapsuleAE(
        enc, rod, dec, dtype=dtype, seed=seed, deterministic=deterministic
    )


def spaced_cloud(rng, n, lo=-1.0, hi=1.0):
    """Random points with no coordinate near zero and no close pairs,
    so relu/max/nearest-neighbor decisions are stable under perturbation."""
    while True:
        pts = rng.uniform(lo, hi, (n, 3))
        pts = pts[np.abs(pts).min(axis=1) > 1e-2]
        if pts.shape[0] < n:
            continue
        pts = pts[:n]
        d = np.linalg.norm(pts[:, None] - pts[None, :], axis=2)
        np.fill_diagonal(d, np.inf)
        if d.min() > 1e-2:
            return pts


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
