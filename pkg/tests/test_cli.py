import csv
import json
import subprocess
import sys

import numpy as np
import pytest

import oracles
from cloudmatch.cli import main
from cloudmatch.io import read_cloud, read_truth


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def bench(tmp_path_factory):
    out = tmp_path_factory.mktemp("bench")
    assert main(["synth", "--identities", "3", "--captures", "3", "--seed", "11",
                 "--points", "1500", "--out", str(out)]) == 0
    return out


def test_synth_layout(bench):
    assert sorted(p.name for p in (bench / "gallery").iterdir()) == ["id000.ply", "id001.ply", "id002.ply"]
    assert len(list((bench / "probes").glob("*.ply"))) == 6
    assert (bench / "truth.csv").read_text().splitlines() == [
        "probe_id,identity",
        "id000_c1,id000", "id000_c2,id000",
        "id001_c1,id001", "id001_c2,id001",
        "id002_c1,id002", "id002_c2,id002",
    ]


def test_distance_self(bench, capsys):
    path = str(bench / "gallery" / "id000.ply")
    code, out, _ = run(["distance", path, path], capsys)
    n = len(read_cloud(path))
    assert code == 0
    assert out == f"distance,median,outlier_count,retained_count\n0.0,0.0,0,{n}\n"


def test_distance_symmetric(bench, capsys):
    a, b = str(bench / "gallery" / "id000.ply"), str(bench / "gallery" / "id001.ply")
    _, out1, _ = run(["distance", a, b, "--symmetric"], capsys)
    _, out2, _ = run(["distance", b, a, "--symmetric"], capsys)
    assert out1.splitlines()[0] == "distance"
    assert float(out1.splitlines()[1]) == pytest.approx(float(out2.splitlines()[1]), abs=1e-12)


def test_align_writes_transform_and_cloud(bench, tmp_path, capsys):
    src, dst = bench / "probes" / "id001_c1.ply", bench / "gallery" / "id001.ply"
    code, _, err = run(["align", str(src), str(dst), "--seed", "4", "--iterations", "10",
                        "--out", str(tmp_path / "t.json"), "--aligned", str(tmp_path / "a.ply")], capsys)
    assert code == 0 and "seed: 4" in err
    data = json.loads((tmp_path / "t.json").read_text())
    assert list(data) == ["scale", "rotation", "translation", "per_iteration_error", "seed"]
    assert len(data["rotation"]) == 9 and len(data["per_iteration_error"]) == 10 and data["seed"] == 4
    assert len(read_cloud(tmp_path / "a.ply")) == len(read_cloud(src))


def test_align_bad_path(tmp_path, capsys):
    missing = tmp_path / "does_not_exist.ply"
    code, _, err = run(["align", str(missing), str(missing)], capsys)
    assert code == 1 and "does_not_exist.ply" in err


def test_malformed_input(tmp_path, capsys):
    bad = tmp_path / "bad.ply"
    bad.write_text("ply\nformat ascii 1.0\nelement vertex 0\nend_header\n")
    code, _, err = run(["distance", str(bad), str(bad)], capsys)
    assert code == 1 and "bad.ply" in err and "line 3" in err


@pytest.mark.parametrize("argv", [["align", "--bogus"], ["frobnicate"], [],
                                  ["eval", "--gallery", "g", "--probes", "p", "--truth", "t", "--sweep", "1,0,3"]])
def test_usage_errors(argv, capsys):
    with pytest.raises(SystemExit) as info:
        main(argv)
    assert info.value.code == 2
    assert "usage:" in capsys.readouterr().err


def test_bad_env_seed(bench, monkeypatch, capsys):
    monkeypatch.setenv("CLOUDMATCH_SEED", "abc")
    code, _, err = run(["match", str(bench / "probes" / "id000_c1.ply"), "--gallery", str(bench / "gallery")], capsys)
    assert code == 2 and "CLOUDMATCH_SEED" in err


def test_match_ranks_gallery(bench, capsys):
    code, out, err = run(["match", str(bench / "probes" / "id002_c1.ply"),
                          "--gallery", str(bench / "gallery"), "--seed", "3"], capsys)
    rows = list(csv.reader(out.splitlines()))
    assert code == 0 and "seed: 3" in err
    assert rows[0] == ["rank", "identity", "score"]
    assert [r[0] for r in rows[1:]] == ["1", "2", "3"]
    assert sorted(r[1] for r in rows[1:]) == ["id000", "id001", "id002"]
    scores = [float(r[2]) for r in rows[1:]]
    assert scores == sorted(scores)


def test_seed_flag_beats_env(bench, monkeypatch, capsys):
    monkeypatch.setenv("CLOUDMATCH_SEED", "8")
    argv = ["match", str(bench / "probes" / "id002_c1.ply"), "--gallery", str(bench / "gallery")]
    _, from_env, err = run(argv, capsys)
    assert "seed: 8" in err
    _, from_flag, err = run(argv + ["--seed", "5"], capsys)
    assert "seed: 5" in err
    monkeypatch.delenv("CLOUDMATCH_SEED")
    _, explicit, _ = run(argv + ["--seed", "8"], capsys)
    assert from_env == explicit


def test_eval_outputs(bench, tmp_path, capsys):
    code, out, _ = run(["eval", "--gallery", str(bench / "gallery"), "--probes", str(bench / "probes"),
                        "--truth", str(bench / "truth.csv"), "--sweep", "0,0.1,21", "--seed", "1",
                        "--out", str(tmp_path)], capsys)
    assert code == 0 and out.startswith("eer,")
    roc = list(csv.reader((tmp_path / "roc.csv").read_text().splitlines()))
    cmc = list(csv.reader((tmp_path / "cmc.csv").read_text().splitlines()))
    assert roc[0] == ["theta", "far", "frr"] and cmc[0] == ["rank", "rate"]
    far = [float(r[1]) for r in roc[1:]]
    assert len(far) == 21 and far == sorted(far)
    assert [r[0] for r in cmc[1:]] == ["1", "2", "3"] and float(cmc[-1][1]) == 1.0

    # recount the ROC from the emitted score matrix
    rows = list(csv.reader((tmp_path / "scores.csv").read_text().splitlines()))
    gallery = rows[0][1:]
    truth = read_truth(bench / "truth.csv")
    scores = [[float(v) for v in r[1:]] for r in rows[1:]]
    genuine = [[g == truth[r[0]] for g in gallery] for r in rows[1:]]
    thetas = [float(r[0]) for r in roc[1:]]
    far_ref, frr_ref = oracles.far_frr(scores, genuine, thetas)
    assert far == far_ref and [float(r[2]) for r in roc[1:]] == frr_ref
    assert json.loads((tmp_path / "config.json").read_text())["seed"] == 1


def test_eval_missing_truth_entry(bench, tmp_path, capsys):
    truth = tmp_path / "truth.csv"
    truth.write_text("probe_id,identity\nid000_c1,id000\n")
    code, _, err = run(["eval", "--gallery", str(bench / "gallery"), "--probes", str(bench / "probes"),
                        "--truth", str(truth), "--sweep", "0,1,3", "--out", str(tmp_path)], capsys)
    assert code == 1 and "truth.csv" in err


def test_console_entry_point(bench):
    path = str(bench / "gallery" / "id000.ply")
    proc = subprocess.run([sys.executable, "-m", "cloudmatch.cli", "distance", path, path],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("distance,")
