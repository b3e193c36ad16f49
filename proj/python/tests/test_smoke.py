import math

import numpy as np
import pytest

import hdrsplat


@pytest.fixture(scope="module")
def scene(tmp_path_factory):
    root = tmp_path_factory.mktemp("scene")
    hdrsplat.generate_scene(root, seed=5, gaussians=10, size=12, views=6)
    return hdrsplat.load_scene(root)


def test_metrics():
    a = np.full((16, 16, 3), 0.5)
    assert hdrsplat.psnr(a, a) == math.inf
    assert hdrsplat.psnr(a, a + 0.1) == pytest.approx(20.0, abs=1e-12)
    assert hdrsplat.ssim(a + 0.1, a + 0.1) == pytest.approx(1.0, abs=1e-12)
    y = hdrsplat.mu_law(np.array([[[0.0, 0.5, 1.0]]]))
    assert y[0, 0, 0] == 0.0
    assert y[0, 0, 2] == 1.0
    assert hdrsplat.reference_crf(0.25) == pytest.approx(0.25 ** (1 / 2.2))


def test_scale_factor_and_spearman():
    assert hdrsplat.scale_factor([1, 1, 1], [1, 1, 1]) == 1.5
    assert hdrsplat.spearman([1, 2, 3, 4], [10, 20, 30, 40]) == pytest.approx(1.0)


def test_bad_image_shape():
    with pytest.raises(ValueError):
        hdrsplat.psnr(np.zeros((4, 4)), np.zeros((4, 4)))


def test_scene_views(scene):
    assert scene.n_poses == 6
    assert scene.n_train_views == 12
    assert scene.n_test_views == 10
    v = scene.view("train", 0)
    assert v["ldr"].shape == (12, 12, 3)
    assert 0.0 <= v["ldr"].min() and v["ldr"].max() <= 1.0


def test_missing_scene(tmp_path):
    with pytest.raises(OSError):
        hdrsplat.load_scene(tmp_path / "nope")


def test_unknown_config_key():
    with pytest.raises(ValueError):
        hdrsplat.config_text({"bogus": "1"})
    assert "max_iterations = 7" in hdrsplat.config_text({"max_iterations": "7"})


def test_train_render_evaluate(scene, tmp_path):
    out = tmp_path / "model.bin"
    report = hdrsplat.train(scene, out, {"max_iterations": "30", "eval_every": "0", "densify_start": "1000",
                                         "densify_stop": "1000"})
    assert len(report["loss"]) == 30
    assert all(math.isfinite(v) for v in report["loss"])
    ck = hdrsplat.load_checkpoint(out)
    assert ck.iteration == 30
    images = ck.render(scene, 0, 2.0)
    assert len(images) == 7
    assert np.allclose(images["i_hdr_scaled"], 2.0 * images["i_hdr"], rtol=0, atol=0)
    summary = ck.evaluate(scene, "test")
    assert math.isfinite(summary["oe_psnr"]) and summary["ne_count"] == 4


def test_gradcheck_subsample():
    r = hdrsplat.gradcheck(max_per_param=2)
    assert r["passed"], r
