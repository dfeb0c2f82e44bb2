"""Synthetic face-like oriented point clouds with ground-truth transforms.

A head is a closed star-shaped surface ``x(u) = rho(u) * u`` over unit
directions ``u`` (+z forward, +y up). ``rho`` is an ellipsoid radius
modulated by anisotropic Gaussian bumps on the front standing in for nose,
brows, eye sockets, cheeks and chin, so normals are analytic.
"""

from dataclasses import dataclass, field

import numpy as np

from .exceptions import EmptyCloudError
from .geometry import PointCloud, SimilarityTransform, apply_transform, rotation_matrix

HEAD_CAP_DEG = 180.0
_FEATURE_DEPTH_WIDTH = 0.3

# (name, base amplitude, centre xy, widths xy) of each facial feature in
# direction space; the centre's z follows from the unit sphere
_FEATURES = (
    ("nose", 0.22, (0.0, -0.02), (0.07, 0.20)),
    ("brow_l", 0.06, (-0.30, 0.32), (0.16, 0.06)),
    ("brow_r", 0.06, (0.30, 0.32), (0.16, 0.06)),
    ("eye_l", -0.07, (-0.30, 0.14), (0.11, 0.07)),
    ("eye_r", -0.07, (0.30, 0.14), (0.11, 0.07)),
    ("cheek_l", 0.06, (-0.42, -0.20), (0.16, 0.14)),
    ("cheek_r", 0.06, (0.42, -0.20), (0.16, 0.14)),
    ("chin", 0.08, (0.0, -0.62), (0.18, 0.10)),
)
# broad bumps at random places over the whole skull
N_SKULL_BUMPS = 6
SKULL_BUMP_AMPLITUDE = 0.05
SKULL_BUMP_WIDTH = 0.45
# relative spread of identity parameters around the base face
AXIS_JITTER = 0.12
AMPLITUDE_JITTER = 0.5
POSITION_JITTER = 0.06
WIDTH_JITTER = 0.25

BUMP_PARAMS = 7
N_SHAPE_PARAMS = 3 + BUMP_PARAMS * (len(_FEATURES) + N_SKULL_BUMPS)


def _seed_rng(*words):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(w) for w in words])))


def default_shape_params(seed):
    """Per-identity head shape drawn deterministically from ``seed``.

    Layout: three ellipsoid semi-axes (x, y, z) followed by one block per
    bump: amplitude, centre (x, y, z), widths (x, y, z). Facial features come
    first, then the skull bumps.
    """
    rng = _seed_rng(seed, 0x5EED)
    axes = np.array([0.75, 1.0, 0.85]) * (1.0 + AXIS_JITTER * rng.standard_normal(3))
    params = [*axes]
    for _, amp, (cx, cy), (wx, wy) in _FEATURES:
        cx = cx + POSITION_JITTER * rng.standard_normal()
        cy = cy + POSITION_JITTER * rng.standard_normal()
        params += [
            amp * (1.0 + AMPLITUDE_JITTER * rng.standard_normal()),
            cx, cy, np.sqrt(max(1.0 - cx * cx - cy * cy, 0.0)),
            wx * np.exp(WIDTH_JITTER * rng.standard_normal()),
            wy * np.exp(WIDTH_JITTER * rng.standard_normal()),
            _FEATURE_DEPTH_WIDTH,
        ]
    for _ in range(N_SKULL_BUMPS):
        centre = rng.standard_normal(3)
        centre /= np.linalg.norm(centre)
        params += [SKULL_BUMP_AMPLITUDE * rng.standard_normal(), *centre, *[SKULL_BUMP_WIDTH] * 3]
    return tuple(float(v) for v in params)


@dataclass(frozen=True)
class SyntheticIdentity:
    seed: int
    shape_params: tuple = None

    def __post_init__(self):
        params = self.shape_params
        if params is None:
            params = default_shape_params(self.seed)
        params = tuple(float(v) for v in params)
        if len(params) < 3 or (len(params) - 3) % BUMP_PARAMS:
            raise ValueError(f"shape_params needs 3 + {BUMP_PARAMS}*n values, got {len(params)}")
        if min(params[:3]) <= 0:
            raise ValueError("ellipsoid semi-axes must be positive")
        widths = np.asarray(params[3:]).reshape(-1, BUMP_PARAMS)[:, 4:]
        if np.any(widths <= 0):
            raise ValueError("bump widths must be positive")
        object.__setattr__(self, "shape_params", params)

    def radius(self, u):
        """Surface radius along unit directions ``u`` and its gradient."""
        p = np.asarray(self.shape_params)
        inv_axes2 = 1.0 / p[:3] ** 2
        q = (u * u) @ inv_axes2
        rho_e = q ** -0.5
        grad_e = -(rho_e ** 3)[:, None] * (u * inv_axes2)
        bump = np.ones(len(u))
        grad_b = np.zeros_like(u)
        for amp, cx, cy, cz, wx, wy, wz in p[3:].reshape(-1, BUMP_PARAMS):
            d = (u - (cx, cy, cz)) / (wx, wy, wz)
            g = amp * np.exp(-0.5 * np.einsum("ij,ij->i", d, d))
            bump += g
            grad_b -= g[:, None] * d / (wx, wy, wz)
        rho = rho_e * bump
        grad = grad_e * bump[:, None] + rho_e[:, None] * grad_b
        return rho, grad

    def surface(self, u):
        """Points and outward unit normals of the surface along directions ``u``."""
        rho, grad = self.radius(u)
        tangential = grad - np.einsum("ij,ij->i", grad, u)[:, None] * u
        normals = u - tangential / rho[:, None]
        normals /= np.linalg.norm(normals, axis=1, keepdims=True)
        return rho[:, None] * u, normals


def sample_directions(rng, n, cap_deg=HEAD_CAP_DEG):
    """Area-uniform unit vectors within ``cap_deg`` of +z (180 covers the sphere)."""
    z = rng.uniform(np.cos(np.radians(cap_deg)), 1.0, n)
    phi = rng.uniform(0.0, 2.0 * np.pi, n)
    r = np.sqrt(1.0 - z * z)
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


def generate_identity_cloud(identity, point_count, sampling_seed=None):
    """Sample ``point_count`` oriented points of ``identity``'s face.

    ``sampling_seed`` defaults to the identity seed; two calls with the same
    arguments give identical clouds.
    """
    if point_count < 100:
        raise ValueError("point_count must be >= 100")
    seed = identity.seed if sampling_seed is None else sampling_seed
    rng = _seed_rng(seed, 0xC10D)
    points, normals = identity.surface(sample_directions(rng, int(point_count)))
    return PointCloud(points, normals)


def random_similarity(rng, scale_range=(0.7, 1.4), max_rotation_deg=30.0, max_translation=0.5):
    """Random scale, rotation about a uniform axis and translation."""
    scale = rng.uniform(*scale_range)
    axis = rng.standard_normal(3)
    angle = np.radians(rng.uniform(0.0, max_rotation_deg))
    translation = rng.uniform(-max_translation, max_translation, 3)
    return SimilarityTransform.from_parts(scale, rotation_matrix(axis, angle), translation)


@dataclass(frozen=True)
class CaptureParams:
    point_count: int = 20000
    noise_sigma: float = 0.0
    crop_fraction: float = 0.0
    true_transform: SimilarityTransform = field(default_factory=SimilarityTransform)
    capture_seed: int = 0

    def __post_init__(self):
        if self.point_count < 100:
            raise ValueError("point_count must be >= 100")
        if not self.noise_sigma >= 0:
            raise ValueError("noise_sigma must be non-negative")
        if not 0.0 <= self.crop_fraction < 1.0:
            raise ValueError("crop_fraction must lie in [0, 1)")


def capture(identity, params):
    """Simulate one reconstructed face model of ``identity``.

    The face is resampled with ``capture_seed``, the points beyond a random
    plane (a ``crop_fraction`` share of them) are removed, Gaussian noise of
    ``noise_sigma`` times the cloud diameter is added and finally
    ``true_transform`` is applied. Normals stay analytic.

    Returns
    -------
    cloud : PointCloud
    true_transform : SimilarityTransform
        Maps the model frame onto the capture.
    """
    clean = generate_identity_cloud(identity, params.point_count, params.capture_seed)
    rng = _seed_rng(params.capture_seed, 0xCA97)
    points, normals = clean.points, clean.normals
    diameter = clean.diameter()

    n_remove = int(round(params.crop_fraction * len(points)))
    if n_remove:
        direction = rng.standard_normal(3)
        depth = (points - points.mean(axis=0)) @ direction
        keep = np.sort(np.argsort(depth, kind="stable")[: len(points) - n_remove])
        points, normals = points[keep], normals[keep]
    if len(points) == 0:
        raise EmptyCloudError("empty capture")
    if params.noise_sigma > 0:
        points = points + rng.normal(0.0, params.noise_sigma * diameter, points.shape)
    cloud = apply_transform(params.true_transform, PointCloud(points, normals))
    return cloud, params.true_transform


@dataclass(frozen=True)
class BenchmarkParams:
    """Template applied to every capture of a synthetic benchmark.

    Probes are drawn at a random scale from ``scale_range``; enrolled models
    use ``gallery_scale_range`` so that distances, which are measured in
    gallery units, share one unit across the gallery.
    """

    point_count: int = 20000
    noise_sigma: float = 0.003
    crop_fraction: float = 0.05
    scale_range: tuple = (0.7, 1.4)
    max_rotation_deg: float = 15.0
    max_translation: float = 0.5
    gallery_scale_range: tuple = (1.0, 1.0)


@dataclass
class Benchmark:
    gallery: list
    probes: list
    ground_truth: dict
    transforms: dict


def build_benchmark(identities, captures_per_identity, params=None, master_seed=0):
    """Synthetic gallery/probe split: first capture of each identity is
    enrolled, the remaining ones become probes.

    Probes are :class:`~cloudmatch.biometrics.Probe` records labelled
    ``"<identity>_c<j>"``; ``ground_truth`` maps probe labels to identities
    and ``transforms`` maps every capture label to its true transform.
    """
    from .biometrics import GalleryEntry, Probe

    if identities < 2 or captures_per_identity < 2:
        raise ValueError("need at least 2 identities and 2 captures per identity")
    params = BenchmarkParams() if params is None else params
    gallery, probes, truth, transforms = [], [], {}, {}
    for i in range(identities):
        name = f"id{i:03d}"
        ident = SyntheticIdentity(int(np.random.SeedSequence([master_seed, i]).generate_state(1, np.uint64)[0]))
        for j in range(captures_per_identity):
            rng = _seed_rng(master_seed, i, j)
            cap = CaptureParams(
                point_count=params.point_count,
                noise_sigma=params.noise_sigma,
                crop_fraction=params.crop_fraction,
                true_transform=random_similarity(
                    rng, params.gallery_scale_range if j == 0 else params.scale_range,
                    params.max_rotation_deg, params.max_translation),
                capture_seed=int(rng.integers(0, 2**63)),
            )
            cloud, true_t = capture(ident, cap)
            label = f"{name}_c{j}"
            transforms[label] = true_t
            if j == 0:
                gallery.append(GalleryEntry(name, cloud))
            else:
                probes.append(Probe(label, name, cloud))
                truth[label] = name
    return Benchmark(gallery, probes, truth, transforms)
