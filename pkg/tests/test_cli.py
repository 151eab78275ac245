import json

import numpy as np
import pytest

from depthdeblur import io
from depthdeblur.cli import EXIT_INVALID, EXIT_MISSING, EXIT_OK, main


@pytest.fixture(scope="module")
def bundle(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "b"
    assert main(["synth", "--procedural", "--seed", "3", "--size", "32", "--out", str(out)]) == EXIT_OK
    return out


def test_synth_writes_bundle(bundle):
    for name in (io.BLURRY, io.DEPTH, io.INTRINSICS, io.MANIFEST, io.CLEAN, io.TRUE_POSE, io.TRUE_FLOW):
        assert (bundle / name).is_file()
    m = json.loads((bundle / io.MANIFEST).read_text())
    assert m["seed"] == 3 and len(m["true_pose"]) == 6


def test_synth_manifest_regenerates_identically(bundle, tmp_path):
    assert main(["synth", "--manifest", str(bundle / io.MANIFEST), "--out", str(tmp_path / "r")]) == EXIT_OK
    assert (tmp_path / "r" / io.BLURRY).read_bytes() == (bundle / io.BLURRY).read_bytes()


def test_synth_from_files(bundle, tmp_path):
    args = ["synth", "--clean", str(bundle / io.CLEAN), "--depth", str(bundle / io.DEPTH), "--seed", "1",
            "--out", str(tmp_path / "f")]
    assert main(args) == EXIT_OK
    assert main(["synth", "--manifest", str(tmp_path / "f" / io.MANIFEST), "--out", str(tmp_path / "g")]) == EXIT_OK
    assert (tmp_path / "f" / io.BLURRY).read_bytes() == (tmp_path / "g" / io.BLURRY).read_bytes()


def test_fixed_pose_deblur_eval_render(bundle, tmp_path, capsys):
    out = tmp_path / "res"
    rc = main(["deblur", str(bundle), "--out", str(out), "--pose", str(bundle / io.TRUE_POSE), "--levels", "2"])
    assert rc == EXIT_OK
    for name in (io.LATENT, io.POSE, io.FLOW, io.ENERGY, io.STATUS):
        assert (out / name).is_file()
    assert json.loads((out / io.STATUS).read_text())["converged"] is True
    assert io.read_pose(out / io.POSE) == io.read_pose(bundle / io.TRUE_POSE)
    capsys.readouterr()
    assert main(["eval", str(out), "--bundle", str(bundle), "--report", str(tmp_path / "r.json")]) == EXIT_OK
    text = capsys.readouterr().out
    assert "psnr=" in text and "flow_error_pct=0.000000" in text
    assert json.loads((tmp_path / "r.json").read_text())["flow_error_pct"] == 0.0
    assert main(["render-seq", str(out), "--bundle", str(bundle), "--frames", "3", "--out", str(tmp_path / "fr")]) == 0
    assert len(list((tmp_path / "fr").glob("frame_*.png"))) == 3


def test_config_file_and_flag_precedence(bundle, tmp_path):
    from depthdeblur.cli import _params, build_parser
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"mu4": 0.1, "alternations": 2}))
    args = build_parser().parse_args(["deblur", str(bundle), "--out", "x", "--config", str(cfg), "--mu4", "0.2"])
    energy, solver = _params(args)
    assert energy.mu4 == 0.2 and solver.alternations == 2 and energy.mu1 == -20.0


def test_exit_codes(bundle, tmp_path, monkeypatch):
    assert main(["deblur", str(tmp_path / "none"), "--out", str(tmp_path / "o")]) == EXIT_MISSING
    assert main(["render-seq", str(tmp_path), "--bundle", str(bundle), "--frames", "1", "--out", "x"]) == EXIT_INVALID
    assert main(["deblur"]) == EXIT_INVALID
    assert main(["deblur", str(bundle), "--out", str(tmp_path / "o"), "--mu1", "1.0"]) == EXIT_INVALID
    monkeypatch.setenv("DEPTHDEBLUR_THREADS", "zero")
    assert main(["deblur", str(bundle), "--out", str(tmp_path / "o")]) == EXIT_INVALID


def test_eval_dimension_mismatch_and_missing_truth(bundle, tmp_path):
    res = tmp_path / "res"
    res.mkdir()
    io.write_png16(res / io.LATENT, np.zeros((10, 10, 3)))
    assert main(["eval", str(res), "--bundle", str(bundle)]) == EXIT_INVALID
    assert main(["eval", str(res), "--bundle", str(tmp_path)]) == EXIT_MISSING


def test_batch_glob(bundle, tmp_path):
    out = tmp_path / "batch"
    rc = main(["deblur", "--glob", str(bundle.parent / "b*"), "--out", str(out),
               "--pose", str(bundle / io.TRUE_POSE), "--levels", "1"])
    assert rc == EXIT_OK and (out / bundle.name / io.LATENT).is_file()
