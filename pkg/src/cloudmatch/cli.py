"""Command-line entry point: ``cloudmatch <command> ...``.

Exit codes: 0 on success, 1 when the pipeline fails, 2 on usage errors.
"""

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import io as cio
from .biometrics import GalleryEntry, Probe, cmc_curve, score_all, threshold_sweep, verification_report
from .geometry import apply_transform
from .metrics import symmetric_trimmed_distance, trimmed_cloud_distance
from .registration import IcpParams, align
from .synth import BenchmarkParams, build_benchmark

SEED_ENV = "CLOUDMATCH_SEED"


class UsageError(Exception):
    pass


def _fmt(x):
    # shortest repr that round-trips, identical on every platform
    return repr(float(x))


def _seed(args):
    if args.seed is not None:
        seed = args.seed
    elif os.environ.get(SEED_ENV):
        try:
            seed = int(os.environ[SEED_ENV])
        except ValueError:
            raise UsageError(f"{SEED_ENV} must be an integer, got {os.environ[SEED_ENV]!r}") from None
    else:
        seed = 0
    if not 0 <= seed < 2**64:
        raise UsageError("seed must be a 64-bit unsigned integer")
    print(f"seed: {seed}", file=sys.stderr)
    return seed


def _icp_params(args, seed):
    return IcpParams(sample_size=args.sample_size, iterations=args.iterations,
                     outlier_k=args.outlier_k, rng_seed=seed)


def _ply_files(directory):
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"not a directory: {directory}")
    files = sorted(directory.glob("*.ply"))
    if not files:
        raise ValueError(f"no .ply files in {directory}")
    return files


def _load_gallery(directory):
    return [GalleryEntry(path.stem, cio.read_cloud(path)) for path in _ply_files(directory)]


def _sweep(text):
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected min,max,count")
    try:
        lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise argparse.ArgumentTypeError("expected min,max,count with numeric values") from None
    if count < 2 or not hi > lo:
        raise argparse.ArgumentTypeError("sweep needs max > min and count >= 2")
    return lo, hi, count


def _nonneg_int(text):
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError("must be non-negative")
    return value


def cmd_align(args):
    seed = _seed(args)
    source = cio.read_cloud(args.src)
    destination = cio.read_cloud(args.dst)
    result = align(source, destination, _icp_params(args, seed))
    data = cio.transform_to_dict(result.transform, result.per_iteration_error, seed)
    if args.out:
        cio.write_transform(args.out, result.transform, result.per_iteration_error, seed)
    else:
        print(json.dumps(data, indent=2))
    if args.aligned:
        cio.write_cloud(apply_transform(result.transform, source), args.aligned)
    return 0


def cmd_distance(args):
    a = cio.read_cloud(args.a)
    b = cio.read_cloud(args.b)
    if args.symmetric:
        print("distance")
        print(_fmt(symmetric_trimmed_distance(a, b, args.k)))
        return 0
    res = trimmed_cloud_distance(a, b, args.k)
    print("distance,median,outlier_count,retained_count")
    print(f"{_fmt(res.distance)},{_fmt(res.median)},{res.outlier_count},{res.retained_count}")
    return 0


def cmd_match(args):
    seed = _seed(args)
    probe = Probe(Path(args.probe).stem, "", cio.read_cloud(args.probe))
    gallery = _load_gallery(args.gallery)
    matrix = score_all([probe], gallery, _icp_params(args, seed), args.k, args.symmetric, args.jobs)
    row = matrix.scores[0]
    print("rank,identity,score")
    for rank, j in enumerate(np.argsort(row, kind="stable"), start=1):
        print(f"{rank},{matrix.gallery_identities[j]},{_fmt(row[j])}")
    for _, j, err in matrix.failed:
        print(f"warning: {matrix.gallery_identities[j]}: {err}", file=sys.stderr)
    return 0


def cmd_eval(args):
    seed = _seed(args)
    gallery = _load_gallery(args.gallery)
    truth = cio.read_truth(args.truth)
    probes = []
    for path in _ply_files(args.probes):
        if path.stem not in truth:
            raise ValueError(f"{args.truth}: no identity for probe {path.stem!r}")
        probes.append(Probe(path.stem, truth[path.stem], cio.read_cloud(path)))
    matrix = score_all(probes, gallery, _icp_params(args, seed), args.k, args.symmetric, args.jobs)
    report = verification_report(matrix, thresholds=threshold_sweep(*args.sweep))
    cmc = cmc_curve(matrix)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cio.write_csv(out / "roc.csv", ["theta", "far", "frr"],
                  [[_fmt(t), _fmt(a), _fmt(r)] for t, a, r in zip(report.thresholds, report.far, report.frr)])
    cio.write_csv(out / "cmc.csv", ["rank", "rate"],
                  [[i, _fmt(r)] for i, r in enumerate(cmc.rank_rates, start=1)])
    cio.write_csv(out / "scores.csv", ["probe_id", *matrix.gallery_identities],
                  [[label, *map(_fmt, row)] for label, row in zip(matrix.probe_labels, matrix.scores)])
    cio.RunConfig(sample_size=args.sample_size, iterations=args.iterations, outlier_k=args.outlier_k,
                  k=args.k, seed=seed, symmetric=args.symmetric,
                  inputs={"gallery": str(args.gallery), "probes": str(args.probes), "truth": str(args.truth)},
                  output=str(out), sweep=args.sweep).save(out / "config.json")
    for i, j, err in matrix.failed:
        print(f"warning: {matrix.probe_labels[i]} vs {matrix.gallery_identities[j]}: {err}", file=sys.stderr)
    print(f"eer,{_fmt(report.eer)}")
    print(f"eer_threshold,{_fmt(report.eer_threshold)}")
    print(f"rank1,{_fmt(cmc.rate(1))}")
    return 0


def cmd_synth(args):
    seed = _seed(args)
    params = BenchmarkParams(point_count=args.points, noise_sigma=args.noise, crop_fraction=args.crop)
    bench = build_benchmark(args.identities, args.captures, params, seed)
    out = Path(args.out)
    (out / "gallery").mkdir(parents=True, exist_ok=True)
    (out / "probes").mkdir(parents=True, exist_ok=True)
    for entry in bench.gallery:
        cio.write_cloud(entry.model, out / "gallery" / f"{entry.identity}.ply")
    for probe in bench.probes:
        cio.write_cloud(probe.cloud, out / "probes" / f"{probe.label}.ply")
    cio.write_csv(out / "truth.csv", ["probe_id", "identity"],
                  [[p.label, bench.ground_truth[p.label]] for p in bench.probes])
    print(f"wrote {len(bench.gallery)} gallery and {len(bench.probes)} probe clouds to {out}")
    return 0


def _add_icp(parser):
    parser.add_argument("--sample-size", type=int, default=500)
    parser.add_argument("--iterations", type=int, default=15)
    parser.add_argument("--outlier-k", type=float, default=4.0)
    parser.add_argument("--seed", type=_nonneg_int, default=None,
                        help=f"random seed (default: ${SEED_ENV}, else 0)")


def _add_scoring(parser):
    parser.add_argument("--k", type=float, default=4.0, help="trimming factor of the cloud distance")
    parser.add_argument("--symmetric", action="store_true")
    parser.add_argument("--jobs", type=int, default=1, help="parallel matrix cells")


def build_parser():
    parser = argparse.ArgumentParser(prog="cloudmatch",
                                     description="Register, compare and evaluate 3D face point clouds.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("align", help="register src onto dst with a similarity transform")
    p.add_argument("src")
    p.add_argument("dst")
    _add_icp(p)
    p.add_argument("--out", help="transform JSON (default: stdout)")
    p.add_argument("--aligned", help="write the transformed source cloud here")
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("distance", help="trimmed distance from a to b")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--k", type=float, default=4.0)
    p.add_argument("--symmetric", action="store_true")
    p.set_defaults(func=cmd_distance)

    p = sub.add_parser("match", help="rank gallery identities for one probe")
    p.add_argument("probe")
    p.add_argument("--gallery", required=True)
    _add_icp(p)
    _add_scoring(p)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("eval", help="score probes against a gallery and write ROC/CMC")
    p.add_argument("--gallery", required=True)
    p.add_argument("--probes", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--sweep", type=_sweep, required=True, help="min,max,count")
    p.add_argument("--out", default=".")
    _add_icp(p)
    _add_scoring(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="write a synthetic gallery/probe benchmark")
    p.add_argument("--identities", type=int, required=True)
    p.add_argument("--captures", type=int, required=True)
    p.add_argument("--seed", type=_nonneg_int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--points", type=int, default=BenchmarkParams.point_count)
    p.add_argument("--noise", type=float, default=BenchmarkParams.noise_sigma)
    p.add_argument("--crop", type=float, default=BenchmarkParams.crop_fraction)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"cloudmatch: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, RuntimeError, ArithmeticError) as exc:
        print(f"cloudmatch {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
