import json

import numpy as np
import pytest

from defectlab.core import DefectKind, SeededRng, class_to_score
from defectlab.raster import Raster, load, to_luma
from defectlab.synth import (
    SEQUENCE_KINDS,
    HazeParams,
    SynthManifest,
    SynthSpec,
    apply_defect,
    build_synth_dataset,
    generate_base_corpus,
    sequence_defect,
    sequence_levels,
)


@pytest.fixture(scope="module")
def small_corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("bases")
    rng = SeededRng(99)
    return generate_base_corpus(str(out), 4, size=112, rng=rng)


def test_sequence_kind_mapping():
    assert sequence_defect("exposure-under") is DefectKind.BAD_EXPOSURE
    assert sequence_defect("exposure-over") is DefectKind.BAD_EXPOSURE
    assert sequence_levels("saturation") == 21
    assert sequence_levels("noise") == 11
    with pytest.raises(ValueError):
        sequence_defect("vignette")


def test_spec_validation():
    SynthSpec("noise", 10)
    with pytest.raises(ValueError):
        SynthSpec("noise", 11)
    with pytest.raises(ValueError):
        SynthSpec("saturation", 21)
    assert SynthSpec("saturation", 10).is_identity
    assert SynthSpec("saturation", 0).severity == -1.0
    assert SynthSpec("blur", 5).severity == pytest.approx(0.5)


def test_haze_params_validation():
    HazeParams((0.9, 0.9, 0.9), 0.5)
    with pytest.raises(ValueError):
        HazeParams((0.5, 0.9, 0.9), 0.5)
    with pytest.raises(ValueError):
        HazeParams((0.9, 0.9, 0.9), 0.0)


class TestGenerateBaseCorpus:
    def test_deterministic_bytes(self, tmp_path):
        rng = SeededRng(5)
        a = generate_base_corpus(str(tmp_path / "a"), 2, size=96, rng=rng)
        b = generate_base_corpus(str(tmp_path / "b"), 2, size=96, rng=rng)
        for ra, rb in zip(a, b):
            assert open(ra.path, "rb").read() == open(rb.path, "rb").read()

    def test_luma_constraints(self, small_corpus):
        for ref in small_corpus:
            luma = to_luma(load(ref.path)).data
            assert 0.35 <= luma.mean() <= 0.65
            assert 0.12 <= luma.std() <= 0.30

    def test_distinct_ids(self, tmp_path):
        refs = generate_base_corpus(str(tmp_path / "c"), 12, size=64, rng=SeededRng(1))
        assert len({r.image_id for r in refs}) == 12


class TestApplyDefect:
    def test_identity_levels_bit_exact(self, small_corpus):
        base = load(small_corpus[0].path)
        rng = SeededRng(3)
        for kind in SEQUENCE_KINDS:
            level = 10 if kind == "saturation" else 0
            out = apply_defect(base, SynthSpec(kind, level), rng)
            assert np.array_equal(out.data, base.data), kind

    def test_underexposure_closed_form(self):
        gray = Raster(np.full((32, 32, 3), 0.5))
        out = apply_defect(gray, SynthSpec("exposure-under", 10), SeededRng(0))
        assert np.allclose(out.data, 0.5 * 2.0**-3)
        out5 = apply_defect(gray, SynthSpec("exposure-under", 5), SeededRng(0))
        assert np.allclose(out5.data, 0.5 * 2.0**-1.5)

    def test_overexposure_gain(self):
        gray = Raster(np.full((8, 8, 3), 0.1))
        out = apply_defect(gray, SynthSpec("exposure-over", 10), SeededRng(0))
        assert np.allclose(out.data, 0.8)

    def test_haze_formula(self):
        gray = Raster(np.full((16, 16, 3), 0.5))
        spec = SynthSpec("haze", 5, params={"haze": HazeParams((1.0, 1.0, 1.0), 0.5)})
        out = apply_defect(gray, spec, SeededRng(0))
        assert np.allclose(out.data, 0.75)

    def test_saturation_extreme_is_grayscale(self, small_corpus):
        base = load(small_corpus[1].path)
        out = apply_defect(base, SynthSpec("saturation", 0), SeededRng(0))
        assert np.allclose(out.data[..., 0], out.data[..., 1], atol=2e-7)
        assert np.allclose(out.data[..., 1], out.data[..., 2], atol=2e-7)

    def test_white_balance_direction(self):
        gray = Raster(np.full((8, 8, 3), 0.5))
        warm = apply_defect(
            gray, SynthSpec("white-balance", 10, params={"direction": "warm"}), SeededRng(0)
        )
        assert warm.data[0, 0, 0] == pytest.approx(0.8)
        assert warm.data[0, 0, 1] == pytest.approx(0.5)
        assert warm.data[0, 0, 2] == pytest.approx(0.3)

    def test_blur_kernel_too_large(self):
        tiny = Raster(np.full((12, 12, 3), 0.5))
        with pytest.raises(ValueError):
            apply_defect(tiny, SynthSpec("blur", 10, params={"angle": 0.0}), SeededRng(0))

    def test_composition_moves_subject_off_center(self, small_corpus):
        base = load(small_corpus[2].path)
        out = apply_defect(base, SynthSpec("composition", 10), SeededRng(0))
        assert (out.width, out.height) == (base.width, base.height)
        assert not np.array_equal(out.data, base.data)

    def test_noise_monotone_std_on_constant(self):
        gray = Raster(np.full((64, 64, 3), 0.5))
        stds = []
        for level in range(11):
            out = apply_defect(gray, SynthSpec("noise", level), SeededRng(17).derive("n", level))
            stds.append(float((out.data - gray.data).std()))
        assert all(a < b for a, b in zip(stds, stds[1:]))

    def test_blur_monotone_laplacian(self, small_corpus):
        base = load(small_corpus[3].path)
        energies = []
        for level in range(11):
            out = apply_defect(
                base, SynthSpec("blur", level, params={"angle": 0.7}), SeededRng(0)
            )
            luma = to_luma(out).data
            lap = (
                luma[:-2, 1:-1] + luma[2:, 1:-1] + luma[1:-1, :-2] + luma[1:-1, 2:]
                - 4 * luma[1:-1, 1:-1]
            )
            energies.append(float(np.abs(lap).mean()))
        assert all(a > b for a, b in zip(energies, energies[1:]))

    def test_haze_monotone_dark_channel(self, small_corpus):
        from scipy.ndimage import minimum_filter

        base = load(small_corpus[0].path)
        means = []
        for level in range(11):
            out = apply_defect(
                base,
                SynthSpec("haze", level, params={"airlight": (0.95, 0.95, 0.95)}),
                SeededRng(0),
            )
            dark = minimum_filter(out.data.min(axis=2), size=15, mode="nearest")
            means.append(float(dark.mean()))
        assert all(a < b for a, b in zip(means[1:], means[2:])) and means[0] < means[1]


class TestBuildSynthDataset:
    def test_manifest_rows_and_scores(self, small_corpus, tmp_path):
        manifest = build_synth_dataset(
            small_corpus[:2], ["noise"], SeededRng(4), str(tmp_path / "d1")
        )
        assert len(manifest.rows) == 22
        for row in manifest.rows:
            assert row.score == class_to_score(DefectKind.NOISE, row.level)

    def test_manifest_deterministic(self, small_corpus, tmp_path):
        m1 = build_synth_dataset(
            small_corpus[:2], ["haze"], SeededRng(4), str(tmp_path / "d2")
        )
        m2 = build_synth_dataset(
            small_corpus[:2], ["haze"], SeededRng(4), str(tmp_path / "d3")
        )
        rows1 = [(r.image_id, r.level, r.score) for r in m1.rows]
        rows2 = [(r.image_id, r.level, r.score) for r in m2.rows]
        assert rows1 == rows2
        img1 = open(m1.rows[5].path, "rb").read()
        img2 = open(m2.rows[5].path, "rb").read()
        assert img1 == img2

    def test_manifest_json_schema(self, small_corpus, tmp_path):
        manifest = build_synth_dataset(
            small_corpus[:1], ["saturation"], SeededRng(4), str(tmp_path / "d4")
        )
        payload = json.loads(open(str(tmp_path / "d4" / "manifest.json")).read())
        row = payload["rows"][0]
        assert set(row) == {"image_id", "base_id", "path", "defect", "level", "score"}
        back = SynthManifest.load(str(tmp_path / "d4" / "manifest.json"))
        assert len(back.rows) == 21

    def test_empty_corpus_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            build_synth_dataset([], ["noise"], SeededRng(0), str(tmp_path / "d5"))
