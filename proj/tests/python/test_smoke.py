import math
import os
import subprocess

import numpy as np
import pytest

import cif


def test_synth_render_matches_masks():
    scene, gaussians, deform, owner = cif.synth("blobs2", seed=0)
    assert scene.instances == 2
    assert len(owner) == len(gaussians)
    out = cif.render(gaussians, deform, scene.cameras[scene.camera_index(3)], scene.time(3))
    assert out["color"].shape == (48, 48, 3)
    assert np.array_equal(out["panoptic"], scene.mask(3))
    mass = out["marginals"].sum(axis=2) + out["residual"]
    assert np.abs(mass - 1.0).max() < 1e-9


def test_metrics():
    gt = np.array([[1, 0], [1, 0]])
    pred = np.array([[1, 1], [0, 0]])
    report = cif.evaluate([pred], [gt])
    assert report["miou"] == pytest.approx(1 / 3)
    assert report["macc_pix"] == 0.5
    assert cif.evaluate([gt], [gt])["miou"] == 1.0


def test_resampling_helpers():
    weak, strong, budget = cif.sampling_plan(np.array([0.1, 0.2, 0.2]), 0.01, 0.5)
    assert np.allclose(strong, [0.2, 0.4, 0.4])
    assert np.allclose(weak, [0.5, 0.25, 0.25])
    assert budget == 2
    assert cif.volume_conserving(0.75, 1) == pytest.approx(0.5)


def test_panoptic_ties():
    marginals = np.array([[[0.4, 0.4]]])
    residual = np.array([[0.2]])
    assert cif.panoptic_map(marginals, residual).tolist() == [[1]]


def test_errors_carry_codes(tmp_path):
    with pytest.raises(cif.Error, match="missing-manifest"):
        cif.load_scene(tmp_path)


def test_scene_and_checkpoint_round_trip(tmp_path):
    scene, gaussians, deform, _ = cif.synth("blob1-static")
    cif.write_scene(tmp_path / "scene", scene)
    loaded = cif.load_scene(tmp_path / "scene")
    assert len(loaded) == 4
    assert np.array_equal(loaded.rgb(0), scene.rgb(0))

    cli = os.environ.get("CIF_CLI")
    if cli is None:
        pytest.skip("CLI path not provided")
    subprocess.run([cli, "synth", "--preset", "blob1-static", "--out", str(tmp_path / "s"),
                    "--gt-ckpt", str(tmp_path / "gt.ckpt")], check=True, capture_output=True)
    ckpt = cif.load_checkpoint(tmp_path / "gt.ckpt")
    report = cif.score(ckpt, cif.load_scene(tmp_path / "s"))
    assert report["miou"] == 1.0
    assert math.isfinite(report["psnr"])
