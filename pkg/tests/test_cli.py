import json

import numpy as np
import pytest

from edgeview import io as eio
from edgeview.cli import main

SMALL = {
    "phantom": {"preset": "blocks", "dims": [2, 40, 40]},
    "acquisition": {"initial_angles": 3, "n_views": 2},
    "recon": {"beta": 1e5, "max_iter": 20},
}


@pytest.fixture
def cfg_path(tmp_path):
    p = tmp_path / "exp.json"
    p.write_text(json.dumps(SMALL))
    return p


def _manifest(d):
    return json.loads((d / "manifest.json").read_text())


def test_run_writes_all_outputs(tmp_path, cfg_path):
    out = tmp_path / "run"
    assert main(["run", "--config", str(cfg_path), "--out", str(out), "--set", "selection.gamma=0.5"]) == 0
    m = _manifest(out)
    assert m["status"] == "complete"
    assert m["tool"]["name"] == "edgeview"
    assert m["config"]["selection"]["gamma"] == 0.5
    for rel in m["artifacts"]:
        assert (out / rel).exists(), rel
    for need in ("trace.csv", "timings.csv", "angles.txt", "final.raw", "scores/step_001.csv",
                 "volumes/step_000.raw", "final_png/slice_000.png"):
        assert need in m["artifacts"]
    assert m["image_normalization"]["final_png"][1] > 0
    rows = eio.read_csv(out / "trace.csv")
    assert [r["step"] for r in rows] == ["0", "1", "2"]
    assert list(rows[0]) == ["step", "angle", "n_views", "nrmse"]
    angles = (out / "angles.txt").read_text().split()
    assert len(angles) == 5 and angles[:3] == ["0.0", "60.0", "120.0"]
    score = eio.read_csv(out / "scores/step_001.csv")
    thetas = [float(r["theta"]) for r in score]
    assert thetas == sorted(thetas) and len(thetas) == 177
    assert eio.read_volume(out / "final.raw").shape == (2, 40, 40)


def test_rerun_from_manifest_is_identical(tmp_path, cfg_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--config", str(cfg_path), "--out", str(a), "--seed", "4"]) == 0
    assert main(["run", "--config", str(a / "manifest.json"), "--out", str(b)]) == 0
    assert (a / "trace.csv").read_bytes() == (b / "trace.csv").read_bytes()
    assert _manifest(b)["config"]["measurement"]["seed"] == 4


def test_compare(tmp_path, cfg_path):
    out = tmp_path / "cmp"
    assert main(["compare", "--config", str(cfg_path), "--out", str(out), "--set", "output.snapshots=false"]) == 0
    m = _manifest(out)
    assert set(m["comparison"]) == {"adaptive", "golden"}
    rows = eio.read_csv(out / "comparison.csv")
    assert [r["n_views"] for r in rows] == ["3", "4", "5"]
    assert (out / "golden/trace.csv").exists() and (out / "adaptive/angles.txt").exists()
    assert not any(a.startswith("adaptive/volumes") for a in m["artifacts"])


def test_phantom_and_score(tmp_path, cfg_path):
    ph = tmp_path / "ph"
    assert main(["phantom", "--config", str(cfg_path), "--out", str(ph)]) == 0
    vol = eio.read_volume(ph / "phantom.raw")
    assert set(np.unique(vol).round(6)) == {0.0, 0.01}
    sc = tmp_path / "sc"
    assert main(["score", str(ph / "phantom.raw"), "--out", str(sc), "--angles", "0,90"]) == 0
    f = eio.read_csv(sc / "f_curve.csv")
    h = eio.read_csv(sc / "h_curve.csv")
    assert len(f) == len(h) == 180
    assert max(float(r["f"]) for r in f) == 1.0
    assert float(h[0]["h"]) == 0.0 and float(h[90]["h"]) == 0.0


@pytest.mark.parametrize(
    "argv",
    [
        ["run"],
        ["run", "--config", "does-not-exist.json", "--out", "x"],
        ["run", "--config", "{cfg}", "--out", "x", "--set", "recon.bogus=1"],
        ["run", "--config", "{cfg}", "--out", "x", "--set", "noequals"],
        ["run", "--config", "{bad}", "--out", "x"],
        ["score", "missing.raw", "--out", "x"],
        ["frobnicate"],
    ],
)
def test_usage_errors_exit_1(tmp_path, cfg_path, argv, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"phantom": \n')
    argv = [a.format(cfg=cfg_path, bad=bad) for a in argv]
    assert main(argv) == 1
    assert "error" in capsys.readouterr().err


def test_parse_error_reports_line(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{\n  "recon": {"beta": }\n}\n')
    assert main(["run", "--config", str(bad), "--out", str(tmp_path / "o")]) == 1
    assert "bad.json:2:" in capsys.readouterr().err


def test_unreadable_volume_exits_2(tmp_path):
    p = tmp_path / "v.raw"
    p.write_bytes(b"junk")
    assert main(["score", str(p), "--out", str(tmp_path / "s")]) == 2


def test_runtime_failure_marks_manifest(tmp_path):
    cfg = dict(SMALL, phantom={"path": str(tmp_path / "nothing.raw"), "dims": [2, 40, 40]})
    p = tmp_path / "exp.json"
    p.write_text(json.dumps(cfg))
    out = tmp_path / "o"
    assert main(["run", "--config", str(p), "--out", str(out)]) in (1, 2)
    m = _manifest(out)
    assert m["status"] == "failed" and m["partial"] is True


def test_version(capsys):
    assert main(["--version"]) == 0
    assert "edgeview" in capsys.readouterr().out
