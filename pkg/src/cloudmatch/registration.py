"""Similarity ICP: one-off scale and centroid alignment followed by
sampled point-to-plane iterations with median-based outlier rejection."""

import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import (
    DegenerateGeometryError,
    IllConditionedWarning,
    InsufficientCorrespondencesError,
)
from .geometry import (
    PointCloud,
    RigidMotion,
    SimilarityTransform,
    apply_transform,
    compose,
    estimate_normals,
    nearest_rotation,
)
from .neighbors import NearestNeighborIndex
from .validation import check_cloud, check_positive

MAX_CONDITION = 1e12
DAMPING = 1e-9
MAX_HALVINGS = 8


@dataclass(frozen=True)
class IcpParams:
    sample_size: int = 500
    iterations: int = 15
    outlier_k: float = 4.0
    rng_seed: int = 0
    min_correspondences: int = 6
    early_exit_tol: float = None
    per_point_scale: bool = False

    def __post_init__(self):
        check_positive(self.sample_size, "sample_size", integer=True)
        check_positive(self.iterations, "iterations", integer=True)
        check_positive(self.outlier_k, "outlier_k")
        check_positive(self.min_correspondences, "min_correspondences", integer=True)
        if self.sample_size < self.min_correspondences:
            raise ValueError("sample_size must be >= min_correspondences")
        if isinstance(self.rng_seed, bool) or not 0 <= int(self.rng_seed) < 2**64:
            raise ValueError("rng_seed must be an unsigned 64-bit integer")
        if self.early_exit_tol is not None:
            check_positive(self.early_exit_tol, "early_exit_tol")


@dataclass(frozen=True)
class CorrespondenceSet:
    """Matched pairs: source point, target point, target normal, distance."""

    source: np.ndarray
    target: np.ndarray
    normals: np.ndarray
    distances: np.ndarray = None

    def __post_init__(self):
        src = np.asarray(self.source, dtype=np.float64).reshape(-1, 3)
        tgt = np.asarray(self.target, dtype=np.float64).reshape(-1, 3)
        nrm = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)
        if not (len(src) == len(tgt) == len(nrm)):
            raise ValueError("correspondence arrays must have equal length")
        dist = self.distances
        if dist is None:
            dist = np.linalg.norm(src - tgt, axis=1)
        object.__setattr__(self, "source", src)
        object.__setattr__(self, "target", tgt)
        object.__setattr__(self, "normals", nrm)
        object.__setattr__(self, "distances", np.asarray(dist, dtype=np.float64))

    def __len__(self):
        return len(self.source)

    def subset(self, mask):
        return CorrespondenceSet(self.source[mask], self.target[mask],
                                 self.normals[mask], self.distances[mask])


@dataclass
class IcpResult:
    """Outcome of :func:`align`.

    ``aligned`` is the working source cloud after the last iteration;
    ``fallbacks`` counts iterations where the solver kept the identity.
    """

    transform: SimilarityTransform
    final_error: float
    per_iteration_error: list
    correspondences_used: list
    aligned: PointCloud = None
    fallbacks: int = 0
    ill_conditioned: int = 0
    seed: int = 0
    history: list = field(default_factory=list, repr=False)


def horn_scale(source, destination, per_point=False):
    """Relative scale of two clouds from their centroid-centred spreads.

    Returns ``sqrt(S_d / S_s)`` where ``S`` is the sum of squared distances
    to the centroid. With ``per_point`` each sum is divided by its point
    count, which stops a cloud with fewer points (a partial capture, say)
    from reading as smaller; for equal counts both forms agree.
    """
    src = check_cloud(source, name="source").points
    dst = check_cloud(destination, name="destination").points
    den = np.sum((src - src.mean(axis=0)) ** 2)
    num = np.sum((dst - dst.mean(axis=0)) ** 2)
    if per_point:
        den /= len(src)
        num /= len(dst)
    if den == 0.0:
        raise DegenerateGeometryError("degenerate source cloud")
    if num == 0.0:
        raise DegenerateGeometryError("degenerate destination cloud")
    return float(np.sqrt(num / den))


def point_to_plane_error(motion, correspondences):
    """Sum of squared distances of moved source points to the target tangent planes."""
    c = correspondences
    moved = c.source @ motion.rotation.T + motion.translation
    r = np.einsum("ij,ij->i", moved - c.target, c.normals)
    return float(np.sum(r * r))


def solve_point_to_plane(correspondences, min_correspondences=6, return_info=False):
    """Rigid motion minimising the linearised point-to-plane error.

    Rotations are linearised about the centroid of the source points as
    ``I + [w]x``; the 6x6 normal equations are solved and the rotation part
    is projected onto the nearest proper rotation. A step that would raise
    the error above the identity's is halved up to ``MAX_HALVINGS`` times,
    after which the identity is returned.

    Returns ``motion`` or ``(motion, info)`` where info holds ``condition``,
    ``damped``, ``fallback`` and ``halvings``.
    """
    c = correspondences
    if len(c) < min_correspondences:
        raise InsufficientCorrespondencesError(
            f"insufficient correspondences: {len(c)} < {min_correspondences}")
    center = c.source.mean(axis=0)
    p = c.source - center
    A = np.hstack([np.cross(p, c.normals), c.normals])
    b = np.einsum("ij,ij->i", c.target - c.source, c.normals)
    H = A.T @ A
    g = A.T @ b
    if not (np.all(np.isfinite(H)) and np.all(np.isfinite(g))):
        raise DegenerateGeometryError("degenerate correspondence geometry")

    condition = np.linalg.cond(H)
    damped = not condition <= MAX_CONDITION
    if damped:
        warnings.warn(f"point-to-plane system condition {condition:.3g} exceeds "
                      f"{MAX_CONDITION:.0e}; damping applied", IllConditionedWarning, stacklevel=2)
        H = H + DAMPING * max(1.0, float(np.max(np.diag(H)))) * np.eye(6)
    try:
        x = np.linalg.solve(H, g)
    except np.linalg.LinAlgError as exc:
        raise DegenerateGeometryError("degenerate correspondence geometry") from exc
    if not np.all(np.isfinite(x)):
        raise DegenerateGeometryError("degenerate correspondence geometry")

    baseline = point_to_plane_error(RigidMotion(), c)
    # large rotations break the linearisation; shorten the step before giving up
    for halvings in range(MAX_HALVINGS + 1):
        step = x * 0.5 ** halvings
        motion = _motion_from_step(step, center)
        if point_to_plane_error(motion, c) <= baseline:
            fallback = False
            break
    else:
        motion = RigidMotion()
        fallback = True
    if return_info:
        return motion, {"condition": float(condition), "damped": damped,
                        "fallback": fallback, "halvings": halvings}
    return motion


def _motion_from_step(x, center):
    w = x[:3]
    R = nearest_rotation(np.array([[1.0, -w[2], w[1]],
                                   [w[2], 1.0, -w[0]],
                                   [-w[1], w[0], 1.0]]))
    return RigidMotion(R, center + x[3:] - R @ center)


def _destination_normals(destination, trust_normals, normal_neighbors):
    if destination.has_normals and trust_normals:
        return destination
    return estimate_normals(destination, normal_neighbors)


def align(source, destination, params=None, destination_index=None,
          trust_normals=True, normal_neighbors=16):
    """Register ``source`` onto ``destination`` with a similarity transform.

    The source is scaled once to the destination's spread and its centroid
    moved onto the destination centroid. Each of ``params.iterations``
    rounds then draws a fresh random sample of source points, pairs each with
    its nearest destination point, discards pairs longer than
    ``params.outlier_k`` times the median pair length, and applies the
    point-to-plane optimal rigid motion to the whole working source.

    Parameters
    ----------
    source, destination : PointCloud or array-like
        The destination needs normals; they are estimated from
        ``normal_neighbors`` neighbours when absent or when
        ``trust_normals`` is False.
    params : IcpParams, optional
    destination_index : NearestNeighborIndex, optional
        Prebuilt index over ``destination``'s points.

    Returns
    -------
    IcpResult
    """
    params = IcpParams() if params is None else params
    source = check_cloud(source, name="source")
    destination = _destination_normals(check_cloud(destination, name="destination"),
                                       trust_normals, normal_neighbors)
    index = destination_index or NearestNeighborIndex(destination.points)
    if len(index) != len(destination):
        raise ValueError("destination_index does not match destination")

    src_points = source.points
    dst_points = destination.points
    c_src = src_points.mean(axis=0)
    c_dst = dst_points.mean(axis=0)
    scale = horn_scale(source, destination, params.per_point_scale)
    total = SimilarityTransform.from_parts(scale, np.eye(3), c_dst - scale * c_src)
    working = total.apply(src_points)

    rng = np.random.Generator(np.random.PCG64(int(params.rng_seed)))
    n = len(source)
    m = min(params.sample_size, n)
    errors, used, history = [], [], []
    fallbacks = ill = 0
    for _ in range(params.iterations):
        sample = working[rng.choice(n, size=m, replace=False)]
        nn_idx, dist = index.query(sample)
        median = float(np.median(dist))
        keep = np.ones(m, dtype=bool) if median == 0.0 else ~(dist > params.outlier_k * median)
        n_kept = int(keep.sum())
        if n_kept < params.min_correspondences:
            raise InsufficientCorrespondencesError(
                f"insufficient correspondences: {n_kept} < {params.min_correspondences}")
        corr = CorrespondenceSet(sample[keep], dst_points[nn_idx[keep]],
                                 destination.normals[nn_idx[keep]], dist[keep])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", IllConditionedWarning)
            motion, info = solve_point_to_plane(corr, params.min_correspondences, return_info=True)
        fallbacks += info["fallback"]
        ill += info["damped"]
        step = SimilarityTransform(1.0, motion)
        working = step.apply(working)
        total = compose(step, total)
        err = point_to_plane_error(motion, corr)
        history.append({"median": median, "kept": n_kept, **info, "error": err})
        prev = errors[-1] if errors else None
        errors.append(err)
        used.append(n_kept)
        if (params.early_exit_tol is not None and prev is not None and prev > 0
                and abs(prev - err) <= params.early_exit_tol * prev):
            break

    return IcpResult(
        transform=total,
        final_error=errors[-1],
        per_iteration_error=errors,
        correspondences_used=used,
        aligned=PointCloud(working),
        fallbacks=fallbacks,
        ill_conditioned=ill,
        seed=int(params.rng_seed),
        history=history,
    )


class SimilarityICP(TransformerMixin, BaseEstimator):
    """Estimator that learns the similarity transform taking one cloud onto another.

    ``fit(X, y)`` registers the source ``X`` onto the destination ``y``;
    ``transform`` then maps any points by the learned transform, so
    ``fit_transform(X, y)`` returns the aligned source points.

    Parameters
    ----------
    sample_size : int, default=500
        Source points drawn per iteration.
    iterations : int, default=15
    outlier_k : float, default=4.0
        Pairs longer than ``outlier_k`` times the median pair length are
        ignored in an iteration.
    random_state : int, default=0
        Seed of the per-fit sampling generator.
    min_correspondences : int, default=6
    tol : float or None, default=None
        Relative error change that ends the loop early; None runs every
        iteration.
    normal_neighbors : int, default=16
    trust_normals : bool, default=True
        Use destination normals when present instead of re-estimating them.
    per_point_scale : bool, default=False
        Compare mean rather than total squared spread when estimating scale.

    Attributes
    ----------
    transform_ : SimilarityTransform
    scale_, rotation_, translation_ : float, ndarray, ndarray
    per_iteration_error_ : list of float
    final_error_ : float
    n_iter_ : int
    result_ : IcpResult
    """

    def __init__(self, sample_size=500, iterations=15, outlier_k=4.0, random_state=0,
                 min_correspondences=6, tol=None, normal_neighbors=16, trust_normals=True,
                 per_point_scale=False):
        self.sample_size = sample_size
        self.iterations = iterations
        self.outlier_k = outlier_k
        self.random_state = random_state
        self.min_correspondences = min_correspondences
        self.tol = tol
        self.normal_neighbors = normal_neighbors
        self.trust_normals = trust_normals
        self.per_point_scale = per_point_scale

    def _params(self):
        return IcpParams(
            sample_size=self.sample_size,
            iterations=self.iterations,
            outlier_k=self.outlier_k,
            rng_seed=0 if self.random_state is None else self.random_state,
            min_correspondences=self.min_correspondences,
            early_exit_tol=self.tol,
            per_point_scale=self.per_point_scale,
        )

    def fit(self, X, y, destination_index=None):
        if y is None:
            raise ValueError("SimilarityICP.fit requires a destination cloud y")
        result = align(X, y, self._params(), destination_index=destination_index,
                       trust_normals=self.trust_normals, normal_neighbors=self.normal_neighbors)
        self.result_ = result
        self.transform_ = result.transform
        self.scale_ = result.transform.scale
        self.rotation_ = result.transform.rotation
        self.translation_ = result.transform.translation
        self.per_iteration_error_ = result.per_iteration_error
        self.final_error_ = result.final_error
        self.n_iter_ = len(result.per_iteration_error)
        return self

    def transform(self, X):
        check_is_fitted(self, "transform_")
        if isinstance(X, PointCloud):
            return apply_transform(self.transform_, X)
        return self.transform_.apply(check_cloud(X).points)

    def inverse_transform(self, X):
        check_is_fitted(self, "transform_")
        inv = self.transform_.inverse()
        if isinstance(X, PointCloud):
            return apply_transform(inv, X)
        return inv.apply(check_cloud(X).points)

    def fit_transform(self, X, y=None, **fit_params):
        return self.fit(X, y, **fit_params).transform(X)
