import csv
import json

import numpy as np
import pytest

from mups import __version__
from mups.cli import EXIT_DATA, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, resolve_workers, run
from mups.data import read_normals
from mups.errors import ConfigError
from mups.fv import read_dump


@pytest.fixture
def plane_dir(tmp_path, grid_plane):
    np.savetxt(tmp_path / "flat.xyz", grid_plane)
    np.savetxt(tmp_path / "flat.normals", np.tile([0.0, 0.0, 1.0], (len(grid_plane), 1)))
    return tmp_path


def test_estimate_pca_on_plane(plane_dir):
    out = plane_dir / "flat_pred.normals"
    assert run(["estimate", "--input", str(plane_dir), "--name", "flat", "--method", "pca",
                "--k", "18", "--out", str(out)]) == EXIT_OK
    n = read_normals(out)
    assert n.shape == (441, 3)
    np.testing.assert_array_equal(n, np.tile([0.0, 0.0, 1.0], (441, 1)))
    manifest = json.loads((plane_dir / "flat_pred.normals.manifest.json").read_text())
    assert manifest["version"] == __version__ and manifest["config"]["k"] == 18 and manifest["seed"] == 0


def test_features_header(tmp_path):
    pts = np.random.default_rng(0).uniform(-1, 1, size=(100, 3))
    np.savetxt(tmp_path / "blob.xyz", pts)
    out = tmp_path / "blob.mups"
    # radii large enough that no 100-point ball is degenerate
    assert run(["features", "--input", str(tmp_path), "--name", "blob", "--m", "4",
                "--scales", "0.3,0.4,0.5", "--tmax", "32", "--out", str(out)]) == EXIT_OK
    header, feats = read_dump(out)
    assert (header.n, header.m, header.count) == (3, 4, 100)
    assert feats.shape == (100, 60, 4, 4, 4)
    assert len(np.loadtxt(out.with_suffix(".queries"))) == 100


def test_features_spec_scales_on_small_fixture(tmp_path):
    pts = np.random.default_rng(0).uniform(-1, 1, size=(100, 3))
    np.savetxt(tmp_path / "blob.xyz", pts)
    out = tmp_path / "blob.mups"
    assert run(["features", "--input", str(tmp_path), "--name", "blob", "--m", "4",
                "--scales", "0.01,0.03,0.05", "--out", str(out)]) == EXIT_OK
    header, _ = read_dump(out)
    assert (header.n, header.m) == (3, 4)
    manifest = json.loads((tmp_path / "blob.mups.manifest.json").read_text())
    assert manifest["count"] + manifest["dropped"] == 100


def test_features_are_replayable(plane_dir):
    args = ["features", "--input", str(plane_dir), "--name", "flat", "--m", "2",
            "--scales", "0.1,0.2", "--tmax", "16", "--seed", "3"]
    assert run(args + ["--out", str(plane_dir / "a.mups")]) == EXIT_OK
    assert run(args + ["--out", str(plane_dir / "b.mups")]) == EXIT_OK
    assert (plane_dir / "a.mups").read_bytes() == (plane_dir / "b.mups").read_bytes()


def test_synth_then_eval(tmp_path):
    d = tmp_path / "data"
    assert run(["synth", "--shape", "plane", "--count", "3000", "--queries", "100",
                "--name", "p", "--out", str(d)]) == EXIT_OK
    rep = tmp_path / "rep"
    assert run(["eval", "--methods", "pca_small", "--data", str(d), "--shapes", "p",
                "--out", str(rep)]) == EXIT_OK
    rows = list(csv.DictReader(open(rep / "report.csv")))
    assert rows[0]["method"] == "pca_small" and float(rows[0]["rms_deg"]) < 1e-6
    assert (rep / "report.json").exists() and (rep / "manifest.json").exists()


def test_eval_predictions_file(plane_dir):
    pred = plane_dir / "p.normals"
    np.savetxt(pred, np.tile([0.0, 0.0, -1.0], (441, 1)))
    assert run(["eval", "--predictions", str(pred), "--data", str(plane_dir), "--shapes", "flat",
                "--out", str(plane_dir / "rep")]) == EXIT_OK
    row = next(csv.DictReader(open(plane_dir / "rep" / "report.csv")))
    assert float(row["rms_deg"]) == 0.0 and float(row["pgp5"]) == 1.0


def test_train_writes_checkpoint_and_loss_log(tmp_path):
    out = tmp_path / "model"
    assert run(["train", "--out", str(out), "--patches", "40", "--expert-epochs", "1",
                "--head-epochs", "1", "--joint-epochs", "1", "--preset", "tiny",
                "--m", "2", "--tmax", "32", "--batch-size", "8"]) == EXIT_OK
    log = list(csv.DictReader(open(out / "loss_log.csv")))
    assert [int(r["epoch"]) for r in log] == [0, 1, 2]
    assert all(0 <= float(r["loss"]) <= 1 for r in log)
    assert (out / "config.json").exists() and (out / "manifest.json").exists()
    assert (out / "standardization.json").exists()


def test_bench_csv(tmp_path):
    out = tmp_path / "bench.csv"
    assert run(["bench", "--m", "1,2", "--tmax", "16,32", "--points", "5000", "--queries", "5",
                "--scales", "0.1", "--repeats", "1", "--out", str(out)]) == EXIT_OK
    rows = list(csv.DictReader(open(out)))
    assert [(int(r["m"]), int(r["t_max"])) for r in rows] == [(1, 16), (1, 32), (2, 16), (2, 32)]
    manifest = json.loads((tmp_path / "bench.csv.manifest.json").read_text())
    assert "r2" in manifest


def test_exit_codes(tmp_path, plane_dir, capsys):
    assert run([]) == EXIT_USAGE
    assert run(["nonsense"]) == EXIT_USAGE
    assert run(["estimate", "--input", str(plane_dir), "--name", "flat", "--k", "2",
                "--out", str(tmp_path / "x")]) == EXIT_USAGE
    assert run(["features", "--input", str(plane_dir), "--name", "flat", "--scales", "0.5,0.1",
                "--out", str(tmp_path / "x")]) == EXIT_USAGE
    assert run(["estimate", "--input", str(tmp_path), "--name", "missing",
                "--out", str(tmp_path / "x")]) == EXIT_DATA
    (tmp_path / "bad.xyz").write_text("0 0 0\n1 nan 0\n")
    assert run(["estimate", "--input", str(tmp_path), "--name", "bad",
                "--out", str(tmp_path / "x")]) == EXIT_DATA
    err = capsys.readouterr().err
    assert "missing" in err


def test_numeric_failure_exit_code(plane_dir, monkeypatch):
    from mups import cli
    from mups.errors import NumericError

    def boom(args):
        raise NumericError("non-finite gradient")

    monkeypatch.setattr(cli, "cmd_estimate", boom)
    monkeypatch.setattr(cli, "build_parser", _patched_parser(cli, boom))
    assert run(["estimate", "--input", str(plane_dir), "--name", "flat", "--out", "x"]) == EXIT_NUMERIC


def _patched_parser(cli, func):
    original = cli.build_parser

    def build():
        p = original()
        p._subparsers._group_actions[0].choices["estimate"].set_defaults(func=func)
        return p

    return build


def test_worker_override(monkeypatch):
    monkeypatch.delenv("NESTI_THREADS", raising=False)
    assert resolve_workers(3) == 3
    monkeypatch.setenv("NESTI_THREADS", "2")
    assert resolve_workers(5) == 2
    monkeypatch.setenv("NESTI_THREADS", "two")
    with pytest.raises(ConfigError):
        resolve_workers(1)
