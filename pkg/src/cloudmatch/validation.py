"""Input validation helpers shared by the estimators and functions."""

import numbers

import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import EmptyCloudError


def check_points(X, name="X", allow_empty=False):
    """Return ``X`` as a finite, C-contiguous float64 array of shape (n, 3)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2 and X.shape[0] == 0:
        if allow_empty and X.shape[1] == 3:
            return np.ascontiguousarray(X)
        raise EmptyCloudError()
    X = check_array(X, dtype=np.float64, order="C", input_name=name)
    if X.shape[1] != 3:
        raise ValueError(f"{name} must have 3 columns, got shape {X.shape}")
    return X


def check_point(p, name="query"):
    p = np.asarray(p, dtype=np.float64).reshape(-1)
    if p.shape != (3,):
        raise ValueError(f"{name} must be a 3-vector, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise ValueError(f"{name} must be finite")
    return p


def check_cloud(X, name="X"):
    """Coerce ``X`` into a :class:`~cloudmatch.geometry.PointCloud`.

    Accepts a PointCloud (returned unchanged), an (n, 3) array of points,
    or an (n, 6) array of points followed by normals.
    """
    from .geometry import PointCloud

    if isinstance(X, PointCloud):
        if len(X) == 0:
            raise EmptyCloudError()
        return X
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2 and X.shape[1] == 6:
        check_array(X, dtype=np.float64, input_name=name)
        return PointCloud(X[:, :3], X[:, 3:])
    return PointCloud(check_points(X, name=name))


def check_positive(value, name, integer=False):
    kind = numbers.Integral if integer else numbers.Real
    if isinstance(value, bool) or not isinstance(value, kind):
        raise TypeError(f"{name} must be {'an integer' if integer else 'a real number'}, got {value!r}")
    if not np.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be positive, got {value!r}")
    return value
