"""Input validation helpers for the estimator layer."""
from __future__ import annotations

import numpy as np


def check_cloud_array(X, n_points=None, name="X"):
    """Coerce to a float64 (n_shapes, n_points, 3) array of finite values."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3 or arr.shape[-1] != 3:
        raise ValueError(
            "%s must be (n_shapes, n_points, 3), got %r" % (name, arr.shape)
        )
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ValueError("%s is empty" % name)
    if n_points is not None and arr.shape[1] != n_points:
        raise ValueError(
            "%s has %d points per shape, expected %d" % (name, arr.shape[1], n_points)
        )
    if not np.all(np.isfinite(arr)):
        raise ValueError("%s contains non-finite values" % name)
    return arr


def check_latent_array(Z, latent_count, latent_dim, name="Z"):
    """Accept (n, count, dim) or flattened (n, count*dim); return 3D."""
    arr = np.asarray(Z, dtype=np.float64)
    if arr.ndim == 2 and arr.shape[1] == latent_count * latent_dim:
        arr = arr.reshape(arr.shape[0], latent_count, latent_dim)
    if arr.ndim != 3 or arr.shape[1:] != (latent_count, latent_dim):
        raise ValueError(
            "%s must be (n, %d, %d) or (n, %d), got %r"
            % (name, latent_count, latent_dim, latent_count * latent_dim, arr.shape)
        )
    if not np.all(np.isfinite(arr)):
        raise ValueError("%s contains non-finite values" % name)
    return arr


def check_point_labels(y, n_shapes, n_points, name="y"):
    arr = np.asarray(y, dtype=np.int64)
    if arr.shape != (n_shapes, n_points):
        raise ValueError(
            "%s must be (%d, %d) integer labels, got %r"
            % (name, n_shapes, n_points, arr.shape)
        )
    if arr.min() < 0:
        raise ValueError("%s contains negative labels" % name)
    return arr


def check_class_labels(y, n_shapes, name="y"):
    arr = np.asarray(y)
    if arr.shape != (n_shapes,):
        raise ValueError("%s must be (%d,), got %r" % (name, n_shapes, arr.shape))
    return arr
