import numpy as np
import pytest

from defectlab.core import DefectKind, SeededRng
from defectlab.model import TrainConfig, localize, predict
from defectlab.model.network import init_model
from defectlab.raster import Raster


def constant_score_model(column, scores):
    """Model whose every head decodes (approximately) a fixed score,
    regardless of input: zero weights, a large bias on the target class."""
    model = init_model(column, SeededRng(0), train_config=TrainConfig().snapshot())
    for key, arr in model.params.items():
        if key.startswith(("w1", "w2", "head")) and key.endswith("_w"):
            model.params[key] = np.zeros_like(arr)
    model.params["w1"] = np.zeros_like(model.params["w1"])
    model.params["w2"] = np.zeros_like(model.params["w2"])
    for defect in model.defects:
        k = model.params[f"head_{defect.value}_w"].shape[0]
        model.params[f"head_{defect.value}_w"] = np.zeros((k, 64))
        bias = np.zeros(k)
        target = scores[defect]
        if defect is DefectKind.OVER_UNDER_SATURATION:
            cls = int(round((target + 1.0) * 10))
        else:
            cls = int(round(target * 10))
        bias[cls] = 60.0
        model.params[f"head_{defect.value}_b"] = bias
    return model


def test_fusion_equal_weight_average():
    hol = constant_score_model("holistic", {d: 0.4 for d in DefectKind})
    pat = constant_score_model("patch", {d: 0.6 for d in DefectKind})
    img = Raster(np.random.default_rng(0).uniform(size=(128, 128, 3)))
    result = predict(hol, pat, img, k_patches=4, rng=SeededRng(1))
    assert result.scores[DefectKind.NOISE].value == pytest.approx(0.5, abs=1e-6)
    # Composition comes from the holistic column alone.
    assert result.scores[DefectKind.BAD_COMPOSITION].value == pytest.approx(0.4, abs=1e-6)
    assert not result.warnings


def test_small_image_falls_back_to_holistic():
    hol = constant_score_model("holistic", {d: 0.4 for d in DefectKind})
    pat = constant_score_model("patch", {d: 0.6 for d in DefectKind})
    img = Raster(np.random.default_rng(0).uniform(size=(64, 64, 3)))
    result = predict(hol, pat, img, k_patches=4, rng=SeededRng(1))
    assert result.patch is None
    assert result.warnings
    assert result.scores[DefectKind.NOISE].value == pytest.approx(0.4, abs=1e-6)


def test_predict_deterministic():
    hol = constant_score_model("holistic", {d: 0.3 for d in DefectKind})
    pat = constant_score_model("patch", {d: 0.7 for d in DefectKind})
    img = Raster(np.random.default_rng(2).uniform(size=(128, 128, 3)))
    a = predict(hol, pat, img, k_patches=6, rng=SeededRng(9))
    b = predict(hol, pat, img, k_patches=6, rng=SeededRng(9))
    assert {d: s.value for d, s in a.scores.items()} == {
        d: s.value for d, s in b.scores.items()
    }


class TestLocalize:
    def test_heat_map_dimensions(self):
        pat = constant_score_model("patch", {d: 0.5 for d in DefectKind})
        img = Raster(np.random.default_rng(3).uniform(size=(130, 200, 3)))
        heat = localize(pat, img, DefectKind.UNDESIRED_BLUR, stride=48)
        assert (heat.width, heat.height) == (200, 130)
        assert np.all(heat.data >= 0.0) and np.all(heat.data <= 1.0)

    def test_composition_unsupported(self):
        pat = constant_score_model("patch", {d: 0.5 for d in DefectKind})
        img = Raster(np.zeros((128, 128, 3)))
        with pytest.raises(ValueError, match="composition"):
            localize(pat, img, DefectKind.BAD_COMPOSITION)

    def test_too_small_image(self):
        pat = constant_score_model("patch", {d: 0.5 for d in DefectKind})
        with pytest.raises(ValueError, match="smaller"):
            localize(pat, Raster(np.zeros((64, 64, 3))), DefectKind.NOISE)

    def test_constant_model_gives_flat_map(self):
        pat = constant_score_model("patch", {d: 0.8 for d in DefectKind})
        img = Raster(np.random.default_rng(4).uniform(size=(128, 160, 3)))
        heat = localize(pat, img, DefectKind.NOISE)
        assert np.allclose(heat.data, 0.8, atol=1e-6)
