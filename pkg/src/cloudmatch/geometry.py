"""Point clouds, similarity transforms and normal estimation."""

from dataclasses import dataclass, field

import numpy as np

from .exceptions import EmptyCloudError
from .validation import check_cloud, check_points

ORTHONORMAL_TOL = 1e-9
UNIT_TOL = 1e-9


def _readonly(a):
    a = np.array(a, dtype=np.float64, copy=True, order="C")
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Ordered 3D points with optional index-aligned unit normals.

    Both arrays are copied and made read-only on construction.
    """

    points: np.ndarray
    normals: np.ndarray = None

    def __post_init__(self):
        points = check_points(self.points, name="points", allow_empty=True)
        object.__setattr__(self, "points", _readonly(points))
        if self.normals is not None:
            normals = np.asarray(self.normals, dtype=np.float64)
            if normals.shape != points.shape:
                raise ValueError(
                    f"normals shape {normals.shape} does not match points shape {points.shape}")
            if not np.all(np.isfinite(normals)):
                raise ValueError("normals must be finite")
            norms = np.linalg.norm(normals, axis=1)
            if np.any(np.abs(norms - 1.0) > UNIT_TOL):
                raise ValueError("normals must have unit length")
            object.__setattr__(self, "normals", _readonly(normals))

    def __len__(self):
        return self.points.shape[0]

    @property
    def has_normals(self):
        return self.normals is not None

    def with_normals(self, normals):
        return PointCloud(self.points, normals)

    def without_normals(self):
        return PointCloud(self.points)

    def subset(self, indices):
        indices = np.asarray(indices)
        normals = None if self.normals is None else self.normals[indices]
        return PointCloud(self.points[indices], normals)

    def diameter(self):
        """Length of the axis-aligned bounding-box diagonal."""
        if len(self) == 0:
            raise EmptyCloudError()
        return float(np.linalg.norm(self.points.max(axis=0) - self.points.min(axis=0)))


@dataclass(frozen=True, eq=False)
class RigidMotion:
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64).reshape(-1)
        if R.shape != (3, 3) or t.shape != (3,):
            raise ValueError("rotation must be 3x3 and translation a 3-vector")
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(t))):
            raise ValueError("rigid motion must be finite")
        if (np.abs(R @ R.T - np.eye(3)).max() > ORTHONORMAL_TOL
                or abs(np.linalg.det(R) - 1.0) > ORTHONORMAL_TOL):
            raise ValueError("rotation must be orthonormal with determinant +1")
        object.__setattr__(self, "rotation", _readonly(R))
        object.__setattr__(self, "translation", _readonly(t))

    @classmethod
    def identity(cls):
        return cls()


@dataclass(frozen=True, eq=False)
class SimilarityTransform:
    """Maps a point ``p`` to ``scale * (R @ p) + T``."""

    scale: float = 1.0
    motion: RigidMotion = field(default_factory=RigidMotion)

    def __post_init__(self):
        scale = float(self.scale)
        if not np.isfinite(scale) or scale <= 0:
            raise ValueError(f"scale must be positive and finite, got {self.scale!r}")
        object.__setattr__(self, "scale", scale)
        if not isinstance(self.motion, RigidMotion):
            raise TypeError("motion must be a RigidMotion")

    @classmethod
    def identity(cls):
        return cls()

    @classmethod
    def from_parts(cls, scale=1.0, rotation=None, translation=None):
        rotation = np.eye(3) if rotation is None else rotation
        translation = np.zeros(3) if translation is None else translation
        return cls(scale, RigidMotion(rotation, translation))

    @property
    def rotation(self):
        return self.motion.rotation

    @property
    def translation(self):
        return self.motion.translation

    def apply(self, points):
        points = np.asarray(points, dtype=np.float64)
        return self.scale * (points @ self.rotation.T) + self.translation

    def inverse(self):
        R_inv = self.rotation.T
        return SimilarityTransform.from_parts(
            1.0 / self.scale, R_inv, -(R_inv @ self.translation) / self.scale)

    def as_matrix(self):
        """Homogeneous 4x4 matrix."""
        M = np.eye(4)
        M[:3, :3] = self.scale * self.rotation
        M[:3, 3] = self.translation
        return M

    def __matmul__(self, other):
        return compose(self, other)


def centroid(cloud):
    cloud = check_cloud(cloud)
    return cloud.points.mean(axis=0)


def apply_transform(t, cloud):
    """Map points by ``t``; normals are rotated only and re-normalised."""
    cloud = check_cloud(cloud)
    points = t.apply(cloud.points)
    normals = None
    if cloud.normals is not None:
        normals = cloud.normals @ t.rotation.T
        normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    return PointCloud(points, normals)


def compose(outer, inner):
    """Transform equivalent to applying ``inner`` first, then ``outer``."""
    R = outer.rotation @ inner.rotation
    t = outer.scale * (outer.rotation @ inner.translation) + outer.translation
    return SimilarityTransform.from_parts(outer.scale * inner.scale, R, t)


def inverse(t):
    return t.inverse()


def rotation_matrix(axis, angle):
    """Rotation by ``angle`` radians about ``axis`` (Rodrigues)."""
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    K = np.array([[0.0, -axis[2], axis[1]],
                  [axis[2], 0.0, -axis[0]],
                  [-axis[1], axis[0], 0.0]])
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


def rotation_angle(R):
    """Angle in radians of the rotation ``R``."""
    c = (np.trace(R) - 1.0) / 2.0
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


def nearest_rotation(M):
    """Closest proper rotation to ``M`` in the Frobenius norm."""
    U, _, Vt = np.linalg.svd(M)
    D = np.eye(3)
    D[2, 2] = np.sign(np.linalg.det(U @ Vt)) or 1.0
    return U @ D @ Vt


def estimate_normals(cloud, neighborhood_size=16, return_diagnostics=False):
    """Estimate unit normals by local principal component analysis.

    Each normal is the least-variance direction of the point's
    ``neighborhood_size`` nearest neighbours (the point included), flipped
    to face away from the cloud centroid. Existing normals are replaced.

    Collinear neighbourhoods have no defined normal; such points get an
    arbitrary unit vector orthogonal to the line and are counted in the
    diagnostics (``{"degenerate": count}``) when ``return_diagnostics``.
    """
    from .neighbors import NearestNeighborIndex

    cloud = check_cloud(cloud)
    k = int(neighborhood_size)
    if k < 3:
        raise ValueError("neighborhood_size must be >= 3")
    if len(cloud) < k:
        raise ValueError(f"cloud has {len(cloud)} points, fewer than neighborhood_size={k}")
    pts = cloud.points
    idx, _ = NearestNeighborIndex(pts).query_k(pts, k)
    nbrs = pts[idx]
    centered = nbrs - nbrs.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered) / k
    evals, evecs = np.linalg.eigh(cov)
    normals = evecs[:, :, 0].copy()

    scale = np.maximum(evals[:, 2], np.finfo(float).tiny)
    degenerate = evals[:, 1] <= 1e-12 * scale
    if np.any(degenerate):
        line = evecs[degenerate, :, 2]
        helper = np.where(np.abs(line[:, [0]]) < 0.9, [[1.0, 0.0, 0.0]], [[0.0, 1.0, 0.0]])
        perp = np.cross(line, helper)
        normals[degenerate] = perp

    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    outward = np.einsum("ij,ij->i", normals, pts - pts.mean(axis=0))
    normals[outward < 0] *= -1.0
    result = PointCloud(pts, normals)
    if return_diagnostics:
        return result, {"degenerate": int(degenerate.sum())}
    return result
