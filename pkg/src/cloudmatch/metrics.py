"""Trimmed, directed distance between two point clouds."""

from dataclasses import dataclass

import numpy as np

from .exceptions import AllPointsTrimmedError
from .neighbors import NearestNeighborIndex
from .validation import check_cloud, check_point, check_positive

DEFAULT_K = 4.0


@dataclass(frozen=True)
class TrimmedDistanceResult:
    distance: float
    median: float
    outlier_count: int
    retained_count: int
    per_point_distances: np.ndarray = None


def _as_index(target):
    if isinstance(target, NearestNeighborIndex):
        return target
    return NearestNeighborIndex(check_cloud(target, name="target"))


def point_to_cloud_distance(p, index):
    """Euclidean distance from ``p`` to the closest indexed point."""
    return _as_index(index).nearest(check_point(p, name="p"))[1]


def trimmed_mean(distances, k=DEFAULT_K):
    """Mean of ``distances`` after dropping entries above ``k`` times their median.

    A zero median disables trimming. Returns ``(mean, median, keep_mask)``;
    the sum runs strictly in index order.
    """
    distances = np.asarray(distances, dtype=np.float64)
    if distances.size == 0:
        raise ValueError("no distances to trim")
    median = float(np.median(distances))
    if median == 0.0:
        keep = np.ones(distances.shape, dtype=bool)
    else:
        keep = ~(distances > k * median)
    retained = distances[keep]
    if retained.size == 0:
        raise AllPointsTrimmedError()
    mean = float(np.cumsum(retained)[-1] / retained.size)
    return mean, median, keep


def trimmed_cloud_distance(source, target_index, k=DEFAULT_K, keep_per_point=False):
    """Directed trimmed distance from ``source`` to the indexed target cloud.

    Every source point's distance to its nearest target point is taken; the
    points farther than ``k`` times the median of those distances are treated
    as lacking a counterpart in the target and left out of the mean.

    Parameters
    ----------
    source : PointCloud or array-like of shape (n, 3)
    target_index : NearestNeighborIndex, PointCloud or array-like
        An index is reused as is; anything else is indexed first.
    k : float, default=4.0
    keep_per_point : bool, default=False
        Store the per-point distances on the result.

    Returns
    -------
    TrimmedDistanceResult
    """
    check_positive(k, "k")
    source = check_cloud(source, name="source")
    index = _as_index(target_index)
    _, dists = index.query(source.points)
    mean, median, keep = trimmed_mean(dists, k)
    retained = int(keep.sum())
    return TrimmedDistanceResult(
        distance=mean,
        median=median,
        outlier_count=len(dists) - retained,
        retained_count=retained,
        per_point_distances=dists if keep_per_point else None,
    )


def symmetric_trimmed_distance(a, b, k=DEFAULT_K):
    forward = trimmed_cloud_distance(a, b, k).distance
    backward = trimmed_cloud_distance(b, a, k).distance
    return (forward + backward) / 2.0
