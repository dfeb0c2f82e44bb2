"""Similarity registration and trimmed-distance matching of 3D face point clouds."""

from .biometrics import (
    FaceMatcher,
    GalleryEntry,
    Probe,
    ScoreMatrix,
    cmc_curve,
    match_probe,
    score_all,
    threshold_sweep,
    verification_report,
)
from .geometry import (
    PointCloud,
    RigidMotion,
    SimilarityTransform,
    apply_transform,
    centroid,
    compose,
    estimate_normals,
    inverse,
    rotation_matrix,
)
from .io import read_cloud, write_cloud
from .metrics import symmetric_trimmed_distance, trimmed_cloud_distance
from .neighbors import NearestNeighborIndex, build_index
from .registration import IcpParams, SimilarityICP, align, horn_scale, solve_point_to_plane

__version__ = "0.1.0"

__all__ = [
    "FaceMatcher",
    "GalleryEntry",
    "IcpParams",
    "NearestNeighborIndex",
    "PointCloud",
    "Probe",
    "RigidMotion",
    "ScoreMatrix",
    "SimilarityICP",
    "SimilarityTransform",
    "align",
    "apply_transform",
    "build_index",
    "centroid",
    "cmc_curve",
    "compose",
    "estimate_normals",
    "horn_scale",
    "inverse",
    "match_probe",
    "read_cloud",
    "rotation_matrix",
    "score_all",
    "solve_point_to_plane",
    "symmetric_trimmed_distance",
    "threshold_sweep",
    "trimmed_cloud_distance",
    "verification_report",
    "write_cloud",
]
