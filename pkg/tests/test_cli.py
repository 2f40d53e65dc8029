import csv
import json

import numpy as np
import pytest

from ovs.cli import main
from ovs.io import read_canvases, read_sequence, write_sequence
from ovs.synth import make_panorama


@pytest.fixture(scope="module")
def static_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("static")
    write_sequence(d, [make_panorama(160, 120, seed=3)] * 5)
    return d


def test_missing_input_is_usage_error(tmp_path, capsys):
    assert main(["stabilize", "--input", str(tmp_path / "nope"), "--out", str(tmp_path)]) == 2
    assert "not a directory" in capsys.readouterr().err


def test_unknown_subcommand():
    assert main(["teleport"]) == 2


def test_empty_input_is_usage_error(tmp_path):
    (tmp_path / "empty").mkdir()
    assert main(["expand", "--input", str(tmp_path / "empty"), "--out", str(tmp_path / "o")]) == 2


def test_processing_error_exit_code(tmp_path, capsys):
    cfg = tmp_path / "bad.toml"
    cfg.write_text("bogus.key = 1\n")
    d = tmp_path / "in"
    write_sequence(d, [np.zeros((8, 8, 3))] * 2)
    assert main(["expand", "--input", str(d), "--out", str(tmp_path / "o"),
                 "--config", str(cfg)]) == 1
    err = capsys.readouterr().err.strip().splitlines()
    assert err[-1].startswith("ovs: error: unknown_key:")


def test_stabilize_off_on_static_video(static_dir, tmp_path):
    out = tmp_path / "out"
    assert main(["stabilize", "--input", str(static_dir), "--out", str(out), "--ovs", "off",
                 "--window", "3"]) == 0
    for a, b in zip(read_sequence(static_dir), read_sequence(out)):
        assert np.array_equal(a, b)
    report = json.loads((out / "report.json").read_text())
    assert report["hole_pixels"] == 0 and report["config"]["stabilizer"]["window"] == 3


def test_expand_writes_canvases(static_dir, tmp_path):
    out = tmp_path / "exp"
    assert main(["expand", "--input", str(static_dir), "--out", str(out), "--iterations", "1",
                 "--mode", "coarse"]) == 0
    canvases = read_canvases(out, 20)
    assert len(canvases) == 5 and canvases[0].image.shape == (160, 200, 3)
    report = json.loads((out / "report.json").read_text())
    assert report["config"]["expand"]["mode"] == "coarse_only" and report["pad"] == 20


def test_synth_then_eval(tmp_path):
    syn = tmp_path / "syn"
    assert main(["synth", "--out", str(syn), "--frames", "4", "--width", "160", "--height", "120",
                 "--amplitude", "5", "--jitter", "2", "--emit-gt"]) == 0
    traj = json.loads((syn / "trajectory.json").read_text())
    assert traj["pad"] == 20 and len(traj["trajectory"]) == 4
    assert len(read_sequence(syn / "frames")) == 4
    assert len(read_canvases(syn / "gt", 20)) == 4

    report = tmp_path / "r" / "eval.json"
    assert main(["eval", "--input", str(syn / "frames"), "--output", str(syn / "frames"),
                 "--report", str(report), "--gt", str(syn / "gt"),
                 "--expanded", str(syn / "gt")]) == 0
    r = json.loads(report.read_text())
    assert r["cropping"] == pytest.approx(1.0, abs=0.01)
    assert r["distortion"] == pytest.approx(1.0, abs=0.01)
    assert r["stability"] is None and "too_short" in r["stability_reason"]
    assert r["L_M"] == 0.0 and r["psnr"] == 99.0
    assert {"L_I", "L_G", "L", "ssim", "config"} <= set(r)


def test_ablate_report_shape(tmp_path):
    out = tmp_path / "abl"
    assert main(["ablate", "--out", str(out), "--scale", "0.25", "--frames", "5",
                 "--sweep", "0,1"]) == 0
    report = json.loads((out / "report.json").read_text())
    assert [r["mode"] for r in report["modes"]] == ["baseline", "coarse_only", "fine_only",
                                                     "full"]
    assert [r["iterations"] for r in report["iterations"]] == [0, 1]
    assert "config" in report
    with open(out / "modes.csv") as fh:
        assert len(list(csv.DictReader(fh))) == 4
    assert (out / "crop_vs_iterations.svg").read_text().lstrip().startswith("<?xml")
    assert len(read_sequence(out / "frames")) == 5


def test_ablate_bad_sweep(tmp_path):
    assert main(["ablate", "--out", str(tmp_path), "--sweep", "a,b"]) == 2
