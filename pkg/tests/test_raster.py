import numpy as np
import pytest

from defectlab.raster import (
    DecodeError,
    GrayRaster,
    Raster,
    convolve,
    crop,
    hsl_to_rgb,
    load,
    resize_bilinear,
    rgb_to_hsl,
    save,
    to_luma,
)


def test_raster_clamps_and_validates():
    r = Raster(np.array([[[1.5, -0.2, 0.5]]]))
    assert r.data[0, 0].tolist() == [1.0, 0.0, 0.5]
    with pytest.raises(ValueError):
        Raster(np.full((2, 2, 3), np.nan))
    with pytest.raises(ValueError):
        Raster(np.zeros((2, 2)))


def test_png_round_trip_gray(tmp_path):
    path = str(tmp_path / "gray.png")
    img = Raster(np.full((8, 8, 3), 128 / 255.0))
    save(img, path)
    back = load(path)
    assert np.array_equal(back.data, img.data)


def test_load_single_red_pixel(tmp_path):
    path = str(tmp_path / "red.png")
    save(Raster(np.array([[[1.0, 0.0, 0.0]]])), path)
    back = load(path)
    assert back.data.tolist() == [[[1.0, 0.0, 0.0]]]


def test_load_truncated_file(tmp_path):
    path = str(tmp_path / "broken.png")
    good = str(tmp_path / "good.png")
    save(Raster(np.zeros((16, 16, 3))), good)
    with open(good, "rb") as fh:
        blob = fh.read()
    with open(path, "wb") as fh:
        fh.write(blob[: len(blob) // 3])
    with pytest.raises(DecodeError):
        load(path)


def test_load_unsupported_extension(tmp_path):
    path = tmp_path / "x.tiff"
    path.write_bytes(b"II*\x00")
    with pytest.raises(DecodeError):
        load(str(path))


def test_save_rejects_jpeg():
    with pytest.raises(DecodeError):
        save(Raster(np.zeros((4, 4, 3))), "/tmp/out.jpg")


def test_save_round_half_up(tmp_path):
    # 0.5/255 quantizes up to 1.
    path = str(tmp_path / "q.png")
    value = 0.5 / 255.0
    save(Raster(np.full((4, 4, 3), value)), path)
    assert np.allclose(load(path).data, 1 / 255.0)


def test_resize_identity_and_constant():
    rng = np.random.default_rng(0)
    r = Raster(rng.uniform(size=(9, 7, 3)))
    assert np.array_equal(resize_bilinear(r, 7, 9).data, r.data)
    const = Raster(np.full((8, 8, 3), 0.37))
    out = resize_bilinear(const, 4, 4)
    assert np.allclose(out.data, 0.37)


def test_resize_ramp_matches_closed_form():
    # Horizontal ramp x/(w-1); downsampling by 2 samples at half-pixel centers.
    w = 16
    ramp = np.linspace(0.0, 1.0, w)
    img = Raster(np.repeat(ramp[None, :, None], 8, axis=0).repeat(3, axis=2))
    out = resize_bilinear(img, w // 2, 8)
    scale = w / (w // 2)
    for j in range(w // 2):
        src = (j + 0.5) * scale - 0.5
        x0 = int(np.floor(src))
        frac = src - x0
        expected = ramp[x0] * (1 - frac) + ramp[min(x0 + 1, w - 1)] * frac
        assert out.data[3, j, 0] == pytest.approx(expected, abs=1e-12)


def test_resize_bad_dims():
    r = Raster(np.zeros((4, 4, 3)))
    with pytest.raises(ValueError):
        resize_bilinear(r, 0, 4)


def test_crop_bounds():
    r = Raster(np.random.default_rng(1).uniform(size=(10, 12, 3)))
    c = crop(r, 2, 3, 5, 4)
    assert (c.width, c.height) == (5, 4)
    assert np.array_equal(c.data, r.data[3:7, 2:7])
    with pytest.raises(ValueError):
        crop(r, 8, 0, 5, 5)
    with pytest.raises(ValueError):
        crop(r, -1, 0, 4, 4)


def test_convolve_identity_and_box():
    g = GrayRaster(np.random.default_rng(2).uniform(size=(8, 8)))
    out = convolve(g, np.array([[1.0]]))
    assert np.allclose(out.data, g.data)
    box = convolve(g, np.full((3, 3), 1 / 9))
    assert box.data.min() >= g.data.min() - 1e-12
    assert box.data.max() <= g.data.max() + 1e-12


def test_convolve_flips_kernel():
    g = GrayRaster(np.zeros((5, 5)))
    g.data[2, 2] = 1.0
    kernel = np.zeros((3, 3))
    kernel[0, 1] = 1.0  # mass above center: true convolution shifts the impulse up
    out = convolve(g, kernel).data
    assert out[1, 2] == 1.0
    assert out.sum() == 1.0


def test_convolve_edge_replication():
    g = GrayRaster(np.ones((4, 4)))
    out = convolve(g, np.full((3, 3), 1 / 9))
    assert np.allclose(out.data, 1.0)


def test_convolve_errors():
    g = GrayRaster(np.zeros((4, 4)))
    with pytest.raises(ValueError):
        convolve(g, np.ones((2, 2)))
    with pytest.raises(ValueError):
        convolve(g, np.ones((5, 5)))


def test_to_luma():
    assert to_luma(Raster(np.ones((2, 2, 3)))).data[0, 0] == pytest.approx(1.0)
    r = Raster(np.zeros((1, 1, 3)))
    r.data[0, 0] = [1.0, 0.0, 0.0]
    assert to_luma(r).data[0, 0] == pytest.approx(0.299)


def test_hsl_round_trip():
    assert np.allclose(
        hsl_to_rgb(rgb_to_hsl(np.array([0.2, 0.4, 0.6]))), [0.2, 0.4, 0.6], atol=1e-6
    )
    rng = np.random.default_rng(3)
    rgb = rng.uniform(size=(32, 32, 3))
    assert np.allclose(hsl_to_rgb(rgb_to_hsl(rgb)), rgb, atol=1e-6)


def test_hsl_known_values():
    gray = rgb_to_hsl(np.array([0.5, 0.5, 0.5]))
    assert gray[1] == 0.0 and gray[2] == pytest.approx(0.5)
    red = rgb_to_hsl(np.array([1.0, 0.0, 0.0]))
    assert red[0] == pytest.approx(0.0) and red[1] == pytest.approx(1.0)
    blue = rgb_to_hsl(np.array([0.0, 0.0, 1.0]))
    assert blue[0] == pytest.approx(2 / 3)


def test_operations_preserve_clamp():
    rng = np.random.default_rng(4)
    r = Raster(rng.uniform(size=(12, 12, 3)))
    for out in (resize_bilinear(r, 5, 9), crop(r, 1, 1, 8, 8)):
        assert out.data.min() >= 0.0 and out.data.max() <= 1.0
