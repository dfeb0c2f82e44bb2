"""Gallery/probe matching, verification (FAR/FRR/EER) and closed-set
identification (CMC).

Scores are distances: lower means more similar. A verification attempt is
one probe/gallery comparison, accepted when its score is <= the threshold;
FAR divides false accepts by the number of impostor pairs and FRR false
rejects by the number of genuine pairs.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .geometry import PointCloud, apply_transform, estimate_normals
from .metrics import DEFAULT_K, symmetric_trimmed_distance, trimmed_cloud_distance
from .neighbors import NearestNeighborIndex
from .registration import IcpParams, align
from .validation import check_cloud

log = logging.getLogger(__name__)

ERROR_SCORE = float(np.finfo(np.float64).max)


@dataclass(eq=False)
class GalleryEntry:
    """Enrolled face model with its search index.

    Models without normals get estimated ones so they can serve as ICP
    destinations.
    """

    identity: str
    model: PointCloud
    index: NearestNeighborIndex = None
    normal_neighbors: int = 16

    def __post_init__(self):
        if not isinstance(self.identity, str) or not self.identity:
            raise ValueError("gallery identity must be a non-empty string")
        model = check_cloud(self.model, name="model")
        if not model.has_normals:
            model = estimate_normals(model, self.normal_neighbors)
        self.model = model
        if self.index is None:
            self.index = NearestNeighborIndex(model.points)


class Probe(NamedTuple):
    label: str
    identity: str
    cloud: PointCloud


@dataclass
class ScoreMatrix:
    probe_labels: list
    probe_identities: list
    gallery_identities: list
    scores: np.ndarray
    failed: list = field(default_factory=list)

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        shape = (len(self.probe_labels), len(self.gallery_identities))
        if self.scores.shape != shape:
            raise ValueError(f"scores shape {self.scores.shape} does not match {shape}")
        if len(self.probe_identities) != shape[0]:
            raise ValueError("probe_identities length does not match probe count")
        if not np.all(np.isfinite(self.scores)) or np.any(self.scores < 0):
            raise ValueError("scores must be finite and non-negative")
        if len(set(self.gallery_identities)) != len(self.gallery_identities):
            raise ValueError("gallery identities must be unique")


@dataclass
class VerificationReport:
    thresholds: np.ndarray
    far: np.ndarray
    frr: np.ndarray
    eer: float
    eer_threshold: float

    def roc(self):
        """(FAR, FRR) pairs along the sweep."""
        return list(zip(self.far.tolist(), self.frr.tolist()))


@dataclass
class CmcCurve:
    rank_rates: np.ndarray

    def rate(self, rank):
        return float(self.rank_rates[rank - 1])


def pair_seed(base_seed, probe_index, gallery_index):
    """Seed for one probe/gallery comparison.

    Mixes the three integers through numpy's ``SeedSequence`` and takes the
    first 64-bit word, so any cell can be recomputed independently.
    """
    seq = np.random.SeedSequence([int(base_seed), int(probe_index), int(gallery_index)])
    return int(seq.generate_state(1, np.uint64)[0])


def match_probe(probe, entry, icp=None, k=DEFAULT_K, symmetric=False, return_alignment=False):
    """Align ``probe`` onto ``entry.model`` and return the trimmed distance."""
    icp = IcpParams() if icp is None else icp
    probe = check_cloud(probe, name="probe")
    result = align(probe, entry.model, icp, destination_index=entry.index)
    aligned = apply_transform(result.transform, probe)
    if symmetric:
        score = symmetric_trimmed_distance(aligned, entry.model, k)
    else:
        score = trimmed_cloud_distance(aligned, entry.index, k).distance
    if return_alignment:
        return score, result
    return score


def _as_probe(i, item):
    if isinstance(item, Probe):
        return item
    if len(item) == 3:
        return Probe(*item)
    identity, cloud = item
    return Probe(f"probe{i}", identity, cloud)


def _score_cell(probe, entry, icp, k, symmetric):
    try:
        return match_probe(probe, entry, icp, k, symmetric), None
    except (ValueError, ArithmeticError, RuntimeError, np.linalg.LinAlgError) as exc:
        return ERROR_SCORE, f"{type(exc).__name__}: {exc}"


def score_all(probes, gallery, icp=None, k=DEFAULT_K, symmetric=False, n_jobs=1):
    """Dense probe x gallery score matrix.

    Every cell aligns with its own seed from :func:`pair_seed`, so the
    result does not depend on evaluation order or ``n_jobs``. Cells whose
    alignment or scoring fails get :data:`ERROR_SCORE` and are listed in
    ``ScoreMatrix.failed`` as ``(row, column, message)``.

    Parameters
    ----------
    probes : sequence of Probe, (label, identity, cloud) or (identity, cloud)
    gallery : sequence of GalleryEntry
    icp : IcpParams, optional
        ``icp.rng_seed`` is the base seed.
    """
    icp = IcpParams() if icp is None else icp
    probes = [_as_probe(i, p) for i, p in enumerate(probes)]
    if not probes or not gallery:
        raise ValueError("score_all needs at least one probe and one gallery entry")
    cells = [(i, j) for i in range(len(probes)) for j in range(len(gallery))]

    def params_for(i, j):
        return replace(icp, rng_seed=pair_seed(icp.rng_seed, i, j))

    jobs = ((probes[i].cloud, gallery[j], params_for(i, j), k, symmetric) for i, j in cells)
    if n_jobs == 1:
        outputs = [_score_cell(*job) for job in jobs]
    else:
        from joblib import Parallel, delayed

        outputs = Parallel(n_jobs=n_jobs)(delayed(_score_cell)(*job) for job in jobs)

    scores = np.empty((len(probes), len(gallery)))
    failed = []
    for (i, j), (score, err) in zip(cells, outputs):
        scores[i, j] = score
        if err is not None:
            log.warning("probe %s vs %s failed: %s", probes[i].label, gallery[j].identity, err)
            failed.append((i, j, err))
    return ScoreMatrix(
        probe_labels=[p.label for p in probes],
        probe_identities=[p.identity for p in probes],
        gallery_identities=[e.identity for e in gallery],
        scores=scores,
        failed=failed,
    )


def _truth_vector(scores, ground_truth):
    if ground_truth is None:
        truth = list(scores.probe_identities)
    else:
        truth = [ground_truth[label] for label in scores.probe_labels]
    gallery = set(scores.gallery_identities)
    missing = sorted({t for t in truth if t not in gallery})
    if missing:
        raise ValueError(f"probe identities not enrolled in the gallery: {missing}")
    return truth


def genuine_mask(scores, ground_truth=None):
    truth = _truth_vector(scores, ground_truth)
    return np.array([[t == g for g in scores.gallery_identities] for t in truth], dtype=bool)


def threshold_sweep(lo, hi, count):
    if count < 1:
        raise ValueError("count must be >= 1")
    if count > 1 and not hi > lo:
        raise ValueError("sweep needs max > min")
    return np.linspace(lo, hi, int(count))


def _equal_error(thresholds, far, frr):
    diff = far - frr
    crossing = np.flatnonzero(diff >= 0)
    if crossing.size:
        i = int(crossing[0])
        if diff[i] == 0:
            return float(far[i]), float(thresholds[i])
        if i > 0:
            t = -diff[i - 1] / (diff[i] - diff[i - 1])
            eer = far[i - 1] + t * (far[i] - far[i - 1])
            theta = thresholds[i - 1] + t * (thresholds[i] - thresholds[i - 1])
            return float(eer), float(theta)
    i = int(np.argmin(np.abs(diff)))
    return float((far[i] + frr[i]) / 2), float(thresholds[i])


def verification_report(scores, ground_truth=None, thresholds=None):
    """FAR and FRR over an ascending threshold sweep, plus the equal error rate.

    The EER is read where FAR - FRR changes sign, interpolating linearly
    between the two bracketing sweep points; without a sign change it falls
    back to the sweep point with the smallest ``|FAR - FRR|``.

    Parameters
    ----------
    scores : ScoreMatrix
    ground_truth : mapping of probe label to identity, optional
        Defaults to the identities stored on ``scores``.
    thresholds : array-like, ascending
    """
    genuine = genuine_mask(scores, ground_truth)
    if thresholds is None:
        raise ValueError("thresholds are required")
    thresholds = np.asarray(thresholds, dtype=np.float64).reshape(-1)
    if thresholds.size == 0:
        raise ValueError("thresholds must be non-empty")
    if np.any(np.diff(thresholds) < 0):
        raise ValueError("thresholds must be ascending")
    gen = np.sort(scores.scores[genuine])
    imp = np.sort(scores.scores[~genuine])
    if gen.size == 0 or imp.size == 0:
        raise ValueError("degenerate ground truth")
    accepted_imp = np.searchsorted(imp, thresholds, side="right")
    accepted_gen = np.searchsorted(gen, thresholds, side="right")
    far = accepted_imp / imp.size
    frr = (gen.size - accepted_gen) / gen.size
    eer, eer_threshold = _equal_error(thresholds, far, frr)
    return VerificationReport(thresholds, far, frr, eer, eer_threshold)


def true_match_ranks(scores, ground_truth=None):
    """1-based rank of the true identity in each probe's sorted gallery list."""
    truth = _truth_vector(scores, ground_truth)
    column = {g: j for j, g in enumerate(scores.gallery_identities)}
    order = np.argsort(scores.scores, axis=1, kind="stable")
    return np.array([int(np.flatnonzero(order[i] == column[t])[0]) + 1
                     for i, t in enumerate(truth)], dtype=np.int64)


def cmc_curve(scores, ground_truth=None):
    """Recognition rate at every rank 1..gallery size (ties by gallery order)."""
    ranks = true_match_ranks(scores, ground_truth)
    n_gallery = len(scores.gallery_identities)
    counts = np.array([np.count_nonzero(ranks <= n) for n in range(1, n_gallery + 1)])
    return CmcCurve(counts / len(ranks))


class FaceMatcher(ClassifierMixin, BaseEstimator):
    """Closed-set face identifier over an enrolled gallery of point clouds.

    ``fit`` enrols one model per identity; ``decision_function`` returns the
    probe x gallery distance matrix and ``predict`` the closest identity.

    Parameters
    ----------
    sample_size, iterations, outlier_k, min_correspondences :
        Alignment settings, see :class:`~cloudmatch.registration.IcpParams`.
    k : float, default=4.0
        Trimming factor of the cloud distance.
    symmetric : bool, default=False
        Average both directed distances instead of probe -> gallery only.
    random_state : int, default=0
    n_jobs : int, default=1
    """

    def __init__(self, sample_size=500, iterations=15, outlier_k=4.0, min_correspondences=6,
                 k=DEFAULT_K, symmetric=False, random_state=0, n_jobs=1):
        self.sample_size = sample_size
        self.iterations = iterations
        self.outlier_k = outlier_k
        self.min_correspondences = min_correspondences
        self.k = k
        self.symmetric = symmetric
        self.random_state = random_state
        self.n_jobs = n_jobs

    def _icp(self):
        return IcpParams(self.sample_size, self.iterations, self.outlier_k,
                         self.random_state or 0, self.min_correspondences)

    def fit(self, X, y):
        if len(X) != len(y):
            raise ValueError("X and y must have the same length")
        self.gallery_ = [GalleryEntry(str(identity), check_cloud(model))
                         for model, identity in zip(X, y)]
        self.classes_ = np.array([e.identity for e in self.gallery_])
        if len(set(self.classes_)) != len(self.classes_):
            raise ValueError("gallery identities must be unique")
        return self

    def score_matrix(self, X, identities=None):
        check_is_fitted(self, "gallery_")
        identities = [None] * len(X) if identities is None else list(identities)
        probes = [Probe(f"probe{i}", ident, cloud) for i, (ident, cloud) in enumerate(zip(identities, X))]
        return score_all(probes, self.gallery_, self._icp(), self.k, self.symmetric, self.n_jobs)

    def decision_function(self, X):
        return self.score_matrix(X).scores

    def predict(self, X):
        return self.classes_[np.argmin(self.decision_function(X), axis=1)]

    def rank(self, X):
        """Gallery identities ordered from best to worst match, per probe."""
        scores = self.decision_function(X)
        return self.classes_[np.argsort(scores, axis=1, kind="stable")]
