"""Exact nearest-neighbour search over a fixed point cloud."""

import numpy as np

from . import _kdtree
from .exceptions import EmptyCloudError
from .validation import check_point, check_points


class NearestNeighborIndex:
    """Balanced k-d tree answering exact nearest-neighbour queries.

    The tree splits at the median of the axis with the widest spread.
    Ties between equidistant points resolve to the lowest point index, so
    every answer equals the one a linear scan would give.

    Parameters
    ----------
    cloud : PointCloud or array-like of shape (n_points, 3)
    leaf_size : int, default=8
        Maximum number of points held by a leaf.
    """

    def __init__(self, cloud, leaf_size=_kdtree.LEAF_SIZE):
        from .geometry import PointCloud

        points = cloud.points if isinstance(cloud, PointCloud) else cloud
        points = check_points(points, name="cloud", allow_empty=True)
        if points.shape[0] == 0:
            raise EmptyCloudError()
        if leaf_size < 1:
            raise ValueError("leaf_size must be >= 1")
        self.points = points.copy()
        self.points.setflags(write=False)
        self.leaf_size = int(leaf_size)
        self._tree = _kdtree.build_tree(self.points, self.leaf_size)
        for arr in self._tree:
            arr.setflags(write=False)

    def __len__(self):
        return self.points.shape[0]

    @property
    def n_nodes(self):
        return self._tree[1].shape[0]

    def query(self, queries, return_visits=False):
        """Nearest neighbour of every row of ``queries``.

        Returns
        -------
        indices : ndarray of shape (m,)
        distances : ndarray of shape (m,)
        visits : ndarray of shape (m,), only if ``return_visits``
            Number of tree nodes inspected per query.
        """
        queries = check_points(queries, name="queries", allow_empty=True)
        idx, d2, visits = _kdtree.nearest_batch(self.points, *self._tree, queries)
        if return_visits:
            return idx, np.sqrt(d2), visits
        return idx, np.sqrt(d2)

    def query_k(self, queries, k):
        """The ``k`` nearest neighbours of every query, sorted by distance."""
        k = _check_k(k, len(self))
        queries = check_points(queries, name="queries", allow_empty=True)
        idx, d2 = _kdtree.knn_batch(self.points, *self._tree, queries, k)
        return idx, np.sqrt(d2)

    def nearest(self, query):
        idx, dist = self.query(check_point(query)[None, :])
        return int(idx[0]), float(dist[0])

    def k_nearest(self, query, k):
        idx, dist = self.query_k(check_point(query)[None, :], k)
        return [(int(i), float(d)) for i, d in zip(idx[0], dist[0])]


def _check_k(k, n):
    if isinstance(k, bool) or not isinstance(k, (int, np.integer)) or not 1 <= k <= n:
        raise ValueError("k out of range")
    return int(k)


def build_index(cloud):
    return NearestNeighborIndex(cloud)


def nearest(index, query):
    """Return ``(point_index, distance)`` of the closest indexed point."""
    return index.nearest(query)


def k_nearest(index, query, k):
    return index.k_nearest(query, k)
