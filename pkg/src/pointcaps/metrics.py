"""Losses and evaluation metrics.

``chamfer`` is the brute-force reference; ``chamfer_fast`` must agree
with it to 1e-9 and only swaps the nearest-neighbor search for a k-d
tree. Both use plain (un-squared) Euclidean distances by default; a
squared variant exists behind a flag and never feeds the tests.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .autodiff import Tensor, ops


@dataclass
class ChamferResult:
    value: float
    term_x_to_y: float
    term_y_to_x: float


def _as_points(x):
    pts = getattr(x, "points", x)
    arr = np.asarray(pts, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise ValueError("chamfer: expected a non-empty (n, d) point set, got %r" % (arr.shape,))
    return arr


def chamfer(x, y, squared=False):
    """Symmetric Chamfer distance via exhaustive pairwise search.

    Accepts arrays or anything with a ``points`` attribute. Each term is
    the mean over one set of the distance to its nearest neighbor in the
    other set.
    """
    xp, yp = _as_points(x), _as_points(y)
    if xp.shape[1] != yp.shape[1]:
        raise ValueError(
            "chamfer: dimensionality differs, %r vs %r" % (xp.shape, yp.shape)
        )
    diff = xp[:, None, :] - yp[None, :, :]
    d2 = np.sum(diff * diff, axis=-1)
    dmat = d2 if squared else np.sqrt(d2)
    t_xy = float(np.mean(np.min(dmat, axis=1)))
    t_yx = float(np.mean(np.min(dmat, axis=0)))
    return ChamferResult(value=t_xy + t_yx, term_x_to_y=t_xy, term_y_to_x=t_yx)


def chamfer_fast(x, y, squared=False):
    """Chamfer distance with k-d tree nearest-neighbor queries.

    Same contract as ``chamfer``; exists so large sets avoid the full
    distance matrix.
    """
    xp, yp = _as_points(x), _as_points(y)
    if xp.shape[1] != yp.shape[1]:
        raise ValueError(
            "chamfer: dimensionality differs, %r vs %r" % (xp.shape, yp.shape)
        )
    d_xy, _ = cKDTree(yp).query(xp, k=1)
    d_yx, _ = cKDTree(xp).query(yp, k=1)
    if squared:
        d_xy = d_xy * d_xy
        d_yx = d_yx * d_yx
    t_xy = float(np.mean(d_xy))
    t_yx = float(np.mean(d_yx))
    return ChamferResult(value=t_xy + t_yx, term_x_to_y=t_xy, term_y_to_x=t_yx)


def chamfer_loss(x, y):
    """Differentiable symmetric Chamfer distance between two tensors."""
    return ops.chamfer_distance(x, y)


def batch_chamfer_loss(recon, target):
    """Mean Chamfer over a batch: recon (b, p, d) tensor, target (b, n, d).

    Built per shape so each pairing gets its own nearest-neighbor
    matching, then averaged.
    """
    recon_t = recon if isinstance(recon, Tensor) else Tensor(recon)
    b = recon_t.shape[0]
    target = np.asarray(target.data if isinstance(target, Tensor) else target)
    if target.ndim != 3 or target.shape[0] != b:
        raise ValueError(
            "batch_chamfer_loss: target must be (%d, n, d), got %r" % (b, target.shape)
        )
    total = None
    for i in range(b):
        term = ops.chamfer_distance(ops.take_index(recon_t, i, axis=0), Tensor(target[i]))
        total = term if total is None else ops.add(total, term)
    return ops.scale(total, 1.0 / b)


def seg_accuracy(pred, gt):
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError("seg_metrics: label shapes differ, %r vs %r" % (pred.shape, gt.shape))
    if pred.size == 0:
        raise ValueError("seg_metrics: empty labels")
    return float(np.mean(pred == gt))


@dataclass
class SegMetrics:
    accuracy: float
    per_part_iou: dict
    mean_iou: float
    mean_convention: str = "parts-present"


def seg_metrics(pred, gt, part_count=None):
    """Point-label accuracy and intersection-over-union per part.

    A part absent from both prediction and ground truth gets IoU 1 in
    the per-part table; the mean runs over parts present in either (the
    convention is recorded on the result).
    """
    pred = np.asarray(pred).astype(np.int64)
    gt = np.asarray(gt).astype(np.int64)
    acc = seg_accuracy(pred, gt)
    if part_count is None:
        part_count = int(max(pred.max(), gt.max())) + 1
    per_part = {}
    present = []
    for part in range(part_count):
        p = pred == part
        g = gt == part
        union = int(np.sum(p | g))
        if union == 0:
            per_part[part] = 1.0
            continue
        inter = int(np.sum(p & g))
        iou = inter / union
        per_part[part] = iou
        present.append(iou)
    if not present:
        raise ValueError("seg_metrics: no part present in either labeling")
    return SegMetrics(
        accuracy=acc,
        per_part_iou=per_part,
        mean_iou=float(np.mean(present)),
    )


def capsule_spread(recon):
    """Mean pairwise distance inside each capsule's patch.

    Returns one value per capsule; single-point patches spread 0. The
    overall mean of this vector is the localization diagnostic reported
    during training.
    """
    points = recon.points
    attribution = recon.attribution
    capsules = np.unique(attribution)
    out = np.zeros(capsules.shape[0], dtype=np.float64)
    for i, c in enumerate(capsules):
        patch = points[attribution == c]
        m = patch.shape[0]
        if m < 2:
            out[i] = 0.0
            continue
        diff = patch[:, None, :] - patch[None, :, :]
        dist = np.sqrt(np.sum(diff * diff, axis=-1))
        iu = np.triu_indices(m, k=1)
        out[i] = float(np.mean(dist[iu]))
    return out
