"""Acceptance criteria 1-10.

Each ``test_criterion_NN_*`` prints a one-line verdict with its measured
numbers; the session summary repeats one PASS/FAIL line per criterion.
Run alone with ``python3 -m pytest tests/test_acceptance.py -v -s``.
"""

import time
import warnings

import numpy as np
import pytest

import oracles
from cloudmatch.biometrics import ERROR_SCORE, ScoreMatrix, cmc_curve, score_all, true_match_ranks, verification_report
from cloudmatch.cli import main
from cloudmatch.exceptions import IllConditionedWarning
from cloudmatch.geometry import RigidMotion, SimilarityTransform, rotation_angle, rotation_matrix
from cloudmatch.metrics import trimmed_cloud_distance
from cloudmatch.neighbors import build_index
from cloudmatch.registration import CorrespondenceSet, IcpParams, align, point_to_plane_error, solve_point_to_plane
from cloudmatch.synth import (
    BenchmarkParams,
    CaptureParams,
    SyntheticIdentity,
    build_benchmark,
    capture,
    generate_identity_cloud,
    random_similarity,
)


def verdict(n, ok, detail):
    print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, detail


def test_criterion_01_metric_oracle_equivalence():
    g = np.random.default_rng(101)
    start = time.perf_counter()
    mismatches = 0
    for _ in range(200):
        a = g.uniform(-1, 1, (g.integers(1, 51), 3))
        b = g.uniform(-1, 1, (g.integers(1, 51), 3))
        res = trimmed_cloud_distance(a, b, 4)
        mismatches += (res.distance, res.median, res.outlier_count, res.retained_count) \
            != oracles.trimmed_distance(a, b, 4)
    elapsed = time.perf_counter() - start
    verdict(1, mismatches == 0 and elapsed < 10, f"{mismatches} mismatches in 200 pairs, {elapsed:.2f} s")


def test_criterion_02_self_distance_and_invariance():
    g = np.random.default_rng(202)
    self_bad = rigid_bad = scale_bad = 0
    worst_rigid = worst_scale = 0.0
    for _ in range(100):
        a = g.uniform(-1, 1, (g.integers(5, 300), 3))
        b = a[: max(1, len(a) // 2)] + g.normal(0, 0.05, (max(1, len(a) // 2), 3))
        self_bad += trimmed_cloud_distance(a, a).distance != 0.0

        R = rotation_matrix(g.standard_normal(3), g.uniform(0, np.pi))
        t = g.uniform(-1, 1, 3)
        d = trimmed_cloud_distance(b, a).distance
        d_rigid = trimmed_cloud_distance(b @ R.T + t, a @ R.T + t).distance
        worst_rigid = max(worst_rigid, abs(d_rigid - d))
        rigid_bad += abs(d_rigid - d) >= 1e-9

        s = g.uniform(0.1, 10)
        d_scaled = trimmed_cloud_distance(s * b, s * a).distance
        rel = abs(d_scaled - s * d) / (s * d)
        worst_scale = max(worst_scale, rel)
        scale_bad += rel > 1e-9
    ok = self_bad == rigid_bad == scale_bad == 0
    verdict(2, ok, f"self {self_bad}, rigid {rigid_bad} (worst {worst_rigid:.1e}), "
                   f"scale {scale_bad} (worst rel {worst_scale:.1e}) failures of 100 each")


def test_criterion_03_nn_index_equivalence():
    g = np.random.default_rng(303)
    pts = np.vstack([g.uniform(-1, 1, (4000, 3)), g.integers(-5, 6, (1000, 3)) / 5.0])
    queries = np.vstack([g.uniform(-1.2, 1.2, (900, 3)), g.integers(-5, 6, (100, 3)) / 5.0])
    idx, dist = build_index(pts).query(queries)
    # vectorised linear scan: argmin returns the first (lowest) index on ties
    d = pts[None, :, :] - queries[:, None, :]
    d2 = d[..., 0] * d[..., 0] + d[..., 1] * d[..., 1] + d[..., 2] * d[..., 2]
    scan_idx = np.argmin(d2, axis=1)
    scan_dist = np.sqrt(d2[np.arange(len(queries)), scan_idx])
    bad = int(np.sum((idx != scan_idx) | (dist != scan_dist)))
    verdict(3, bad == 0, f"{bad} of 1000 queries differ from the linear scan")


def _recovery_trials(noise, crop, n_trials=100):
    rot_err, scale_err, iters = [], [], []
    for trial in range(n_trials):
        g = np.random.default_rng([7, trial])
        ident = SyntheticIdentity(int(g.integers(2**32)))
        destination = generate_identity_cloud(ident, 20_000)
        truth = random_similarity(g, (0.7, 1.4), 30.0, 0.5)
        source, _ = capture(ident, CaptureParams(20_000, noise, crop, truth, int(g.integers(2**32))))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", IllConditionedWarning)
            res = align(source, destination, IcpParams(rng_seed=trial))
        est = res.transform
        # est maps the capture back to the model frame, so est * truth should be the identity
        scale_err.append(abs(est.scale * truth.scale - 1.0))
        rot_err.append(np.degrees(rotation_angle(est.rotation @ truth.rotation)))
        iters.append(len(res.per_iteration_error))
    return np.array(rot_err), np.array(scale_err), np.array(iters)


def test_criterion_04_noise_free_recovery():
    start = time.perf_counter()
    rot, scale, iters = _recovery_trials(0.0, 0.0)
    elapsed = time.perf_counter() - start
    passed = int(np.sum((rot <= 1.0) & (scale <= 0.01)))
    ok = passed >= 95 and iters.max() <= 15 and elapsed < 120
    verdict(4, ok, f"{passed}/100 within 1% scale and 1 deg, max iterations {iters.max()}, "
                   f"worst scale {scale.max():.4f}, worst rotation {rot.max():.2f} deg, {elapsed:.1f} s")


def test_criterion_05_noisy_partial_recovery():
    rot, scale, _ = _recovery_trials(0.005, 0.2)
    passed = int(np.sum((rot <= 3.0) & (scale <= 0.03)))
    verdict(5, passed >= 90, f"{passed}/100 within 3% scale and 3 deg "
                             f"(scale ok {int(np.sum(scale <= 0.03))}, rotation ok {int(np.sum(rot <= 3.0))}, "
                             f"median scale error {np.median(scale):.4f})")


def _random_correspondences(g):
    n = int(g.integers(6, 200))
    kind = g.integers(0, 4)
    source = g.uniform(-1, 1, (n, 3)) * g.uniform(0.01, 100)
    normals = g.standard_normal((n, 3))
    if kind == 1:
        normals[:] = normals[0]
    elif kind == 2:
        source[:, 2] = 0.0
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    angle = g.uniform(0, np.pi) if kind == 3 else g.uniform(0, 0.3)
    R = rotation_matrix(g.standard_normal(3), angle)
    target = source @ R.T + g.normal(0, g.uniform(0, 2), 3) + g.normal(0, g.uniform(0, 0.5), (n, 3))
    return CorrespondenceSet(source, target, normals)


def test_criterion_06_solver_contract():
    g = np.random.default_rng(606)
    violations = fallbacks = 0
    for _ in range(1000):
        corr = _random_correspondences(g)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", IllConditionedWarning)
            motion, info = solve_point_to_plane(corr, return_info=True)
        fallbacks += info["fallback"]
        violations += point_to_plane_error(motion, corr) > point_to_plane_error(RigidMotion(), corr)
    verdict(6, violations == 0, f"{violations} increases in 1000 fuzzed sets ({fallbacks} identity fallbacks)")


def _random_matrix(g, max_probes, max_gallery, max_value):
    n_probe, n_gallery = int(g.integers(2, max_probes + 1)), int(g.integers(2, max_gallery + 1))
    scores = g.integers(0, max_value, (n_probe, n_gallery)).astype(float)
    if g.random() < 0.5:
        scores = scores + g.random((n_probe, n_gallery))
    truth = g.integers(0, n_gallery, n_probe)
    gallery = [f"g{j}" for j in range(n_gallery)]
    labels = [f"p{i}" for i in range(n_probe)]
    return ScoreMatrix(labels, [gallery[t] for t in truth], gallery, scores), truth


def test_criterion_07_verification_report():
    g = np.random.default_rng(707)
    bad = 0
    for _ in range(200):
        scores, truth = _random_matrix(g, 50, 50, 10)
        thresholds = np.linspace(-0.5, 11, int(g.integers(2, 80)))
        rep = verification_report(scores, thresholds=thresholds)
        genuine = [[j == t for j in range(scores.scores.shape[1])] for t in truth]
        far, frr = oracles.far_frr(scores.scores.tolist(), genuine, thresholds.tolist())
        eer = oracles.equal_error(thresholds.tolist(), far, frr)
        monotone = np.all(np.diff(rep.far) >= 0) and np.all(np.diff(rep.frr) <= 0)
        bad += not (monotone and rep.far.tolist() == far and rep.frr.tolist() == frr
                    and (rep.eer, rep.eer_threshold) == eer)
    verdict(7, bad == 0, f"{bad} of 200 random matrices disagree with the recount")


def test_criterion_08_cmc():
    g = np.random.default_rng(808)
    bad = 0
    for _ in range(50):
        scores, truth = _random_matrix(g, 100, 100, 4)
        rates = cmc_curve(scores).rank_rates
        ranks = true_match_ranks(scores).tolist()
        bad += not (np.all(np.diff(rates) >= 0) and rates[-1] == 1.0
                    and ranks == oracles.true_ranks(scores.scores.tolist(), truth.tolist()))
    verdict(8, bad == 0, f"{bad} of 50 random tied matrices fail")


@pytest.mark.slow
def test_criterion_09_end_to_end_benchmark():
    start = time.perf_counter()
    bench = build_benchmark(27, 3, BenchmarkParams(), master_seed=2024)
    assert len(bench.gallery) == 27 and len(bench.probes) == 54
    scores = score_all(bench.probes, bench.gallery, IcpParams(rng_seed=1))
    finite = scores.scores[scores.scores < ERROR_SCORE]
    thresholds = np.linspace(0.0, finite.max(), 2001)
    rep = verification_report(scores, bench.ground_truth, thresholds)
    rank1 = cmc_curve(scores, bench.ground_truth).rate(1)
    elapsed = time.perf_counter() - start
    ok = rank1 >= 0.90 and rep.eer <= 0.05 and elapsed < 1800
    verdict(9, ok, f"rank-1 {rank1:.3f}, EER {rep.eer:.4f}, {len(scores.failed)} failed cells, {elapsed:.0f} s")


def _cli_outputs(root, tag, monkeypatch, capsys):
    """Run every subcommand once and collect what it wrote."""
    out = {}
    bench = root / f"bench_{tag}"
    monkeypatch.setenv("CLOUDMATCH_SEED", "31")
    assert main(["synth", "--identities", "3", "--captures", "2", "--points", "1200", "--out", str(bench)]) == 0
    monkeypatch.delenv("CLOUDMATCH_SEED")
    for path in sorted(bench.rglob("*")):
        if path.is_file():
            out[str(path.relative_to(bench))] = path.read_bytes()
    capsys.readouterr()

    gallery, probes = bench / "gallery", bench / "probes"
    ev = root / f"eval_{tag}"
    assert main(["eval", "--gallery", str(gallery), "--probes", str(probes), "--truth", str(bench / "truth.csv"),
                 "--sweep", "0,0.2,41", "--seed", "5", "--out", str(ev)]) == 0
    for name in ("roc.csv", "cmc.csv", "scores.csv"):
        out[f"eval/{name}"] = (ev / name).read_bytes()
    out["eval/stdout"] = capsys.readouterr().out

    probe = str(probes / "id001_c1.ply")
    assert main(["match", probe, "--gallery", str(gallery), "--seed", "5"]) == 0
    out["match/stdout"] = capsys.readouterr().out
    assert main(["distance", probe, str(gallery / "id001.ply")]) == 0
    out["distance/stdout"] = capsys.readouterr().out
    assert main(["align", probe, str(gallery / "id001.ply"), "--seed", "5",
                 "--out", str(root / f"t_{tag}.json")]) == 0
    out["align/json"] = (root / f"t_{tag}.json").read_bytes()
    capsys.readouterr()
    return out


def test_criterion_10_cli_determinism(tmp_path, monkeypatch, capsys):
    first = _cli_outputs(tmp_path, "a", monkeypatch, capsys)
    second = _cli_outputs(tmp_path, "b", monkeypatch, capsys)
    differing = sorted(k for k in first if first[k] != second.get(k))
    with capsys.disabled():
        verdict(10, not differing and first.keys() == second.keys(),
                f"{len(first)} outputs compared, differing: {differing or 'none'}")
