"""Point cloud container, normalization and resampling."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np


@dataclass
class PointCloud:
    """Points with optional per-point part labels and a class index."""

    points: np.ndarray
    labels: Optional[np.ndarray] = None
    category: Optional[int] = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError("point cloud must be (n, 3), got %r" % (pts.shape,))
        if pts.shape[0] == 0:
            raise ValueError("point cloud is empty")
        self.points = pts
        if self.labels is not None:
            lab = np.asarray(self.labels, dtype=np.int64)
            if lab.shape != (pts.shape[0],):
                raise ValueError(
                    "labels must be (%d,), got %r" % (pts.shape[0], lab.shape)
                )
            self.labels = lab
        if self.category is not None:
            self.category = int(self.category)

    def __len__(self):
        return self.points.shape[0]

    def copy(self):
        return PointCloud(
            points=self.points.copy(),
            labels=None if self.labels is None else self.labels.copy(),
            category=self.category,
        )


def normalize(cloud):
    """Center at the centroid and scale the farthest point to radius 1.

    Returns a new cloud; labels and category carry over. Idempotent up
    to float rounding. A degenerate cloud (all points coincident) has no
    scale and is rejected.
    """
    pts = cloud.points
    centered = pts - pts.mean(axis=0)
    radius = float(np.max(np.linalg.norm(centered, axis=1)))
    if radius == 0.0:
        raise ValueError("cannot normalize a degenerate cloud (zero radius)")
    return PointCloud(
        points=centered / radius,
        labels=None if cloud.labels is None else cloud.labels.copy(),
        category=cloud.category,
    )


def resample(cloud, n, seed=0):
    """Return exactly n points: subsample without replacement when the
    cloud is larger, sample with replacement when smaller, reorder never.

    The draw is deterministic in (cloud size, n, seed).
    """
    if n < 1:
        raise ValueError("resample: n must be positive")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, len(cloud), n])))
    size = len(cloud)
    if size == n:
        return cloud.copy()
    if size > n:
        idx = rng.choice(size, size=n, replace=False)
    else:
        idx = rng.choice(size, size=n, replace=True)
    idx.sort()
    return PointCloud(
        points=cloud.points[idx],
        labels=None if cloud.labels is None else cloud.labels[idx],
        category=cloud.category,
    )
