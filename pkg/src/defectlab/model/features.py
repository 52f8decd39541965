"""The 134-dimensional hand-crafted feature vector.

One extractor serves both input regimes: holistic (input resized to
224x224 internally) and patch (input must arrive at the patch size,
original resolution). Aspect ratio and log-area are taken from the
raster as passed in, before any internal resize.

Internals run in float32 for throughput; the pipeline is pure and
deterministic, so identical images always produce identical vectors.
"""

from __future__ import annotations

from functools import lru_cache

import cv2
import numpy as np
from scipy.fft import rfft2
from scipy.ndimage import minimum_filter1d

from ..raster import Raster

cv2.setNumThreads(0)  # keep the pipeline single-threaded and bit-stable

__all__ = ["FEATURE_DIM", "FEATURE_VERSION", "HOLISTIC_SIZE", "extract_features", "feature_names"]

FEATURE_DIM = 134
FEATURE_VERSION = 1
HOLISTIC_SIZE = 224

_CLIP_EPS = 1.0 / 510.0  # half an 8-bit quantization step
_EDGE_THRESHOLD = 0.1
_RESERVED = 11


def feature_names() -> list[str]:
    """Ordered feature labels, for reports and debugging."""
    names: list[str] = []
    names += [f"luma_hist_{i}" for i in range(32)]
    names += [f"mean_{c}" for c in "rgb"] + [f"std_{c}" for c in "rgb"]
    names += [f"sat_hist_{i}" for i in range(16)]
    names += [f"hue_hist_{i}" for i in range(16)]
    names += ["dark_mean", "dark_p10", "dark_p90"]
    names += [f"grad_hist_{i}" for i in range(16)]
    names += ["lap_mean", "noise_sigma"]
    names += [f"fft_band_{i}" for i in range(8)]
    names += ["edge_density"]
    names += [f"cell_energy_{i}" for i in range(9)]
    names += ["luma_p1", "luma_p5", "luma_p50", "luma_p95", "luma_p99"]
    names += ["clip_lo", "clip_hi"]
    names += ["chroma_rg", "chroma_bg"]
    names += ["sat_mean", "sat_std"]
    names += ["aspect", "log_area"]
    names += ["contrast"]
    names += [f"reserved_{i}" for i in range(_RESERVED)]
    assert len(names) == FEATURE_DIM
    return names


@lru_cache(maxsize=16)
def _gather_axis(in_size: int, out_size: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    pos = (np.arange(out_size, dtype=np.float64) + 0.5) * (in_size / out_size) - 0.5
    pos = np.clip(pos, 0.0, in_size - 1.0)
    i0 = np.floor(pos).astype(np.intp)
    i1 = np.minimum(i0 + 1, in_size - 1)
    return i0, i1, (pos - i0).astype(np.float32)


def _resize32_reference(arr: np.ndarray, size: int) -> np.ndarray:
    """Pure-numpy half-pixel bilinear resize; the readable counterpart of
    the cv2 fast path below (they agree to float32 epsilon)."""
    h, w = arr.shape[:2]
    if (h, w) == (size, size):
        return arr
    y0, y1, wy = _gather_axis(h, size)
    x0, x1, wx = _gather_axis(w, size)
    rows = arr[y0] * (1.0 - wy)[:, None, None] + arr[y1] * wy[:, None, None]
    return rows[:, x0] * (1.0 - wx)[None, :, None] + rows[:, x1] * wx[None, :, None]


def _resize32(arr: np.ndarray, size: int) -> np.ndarray:
    """Half-pixel-centered bilinear resize of an (h, w, 3) float32 array."""
    if arr.shape[:2] == (size, size):
        return arr
    return cv2.resize(arr, (size, size), interpolation=cv2.INTER_LINEAR)


def _hist(values: np.ndarray, bins: int) -> np.ndarray:
    """Normalized histogram of values assumed to lie in [0, 1]."""
    idx = np.minimum((values.ravel() * bins).astype(np.intp), bins - 1)
    counts = np.bincount(idx, minlength=bins).astype(np.float64)
    return counts / max(values.size, 1)


@lru_cache(maxsize=8)
def _fft_band_index(h: int, w: int, bands: int = 8) -> np.ndarray:
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.rfftfreq(w)[None, :]
    radius = np.sqrt(fy * fy + fx * fx)
    idx = np.minimum((radius / radius.max() * bands).astype(np.intp), bands - 1)
    return idx.ravel()


def _fft_bands(luma: np.ndarray) -> np.ndarray:
    spectrum = rfft2(luma - np.float32(luma.mean(dtype=np.float64)))
    power = (spectrum.real.astype(np.float64) ** 2 + spectrum.imag.astype(np.float64) ** 2).ravel()
    idx = _fft_band_index(*luma.shape)
    energy = np.bincount(idx, weights=power, minlength=8)
    total = energy.sum()
    return energy / total if total > 0 else np.zeros(8)


def _immerkaer_sigma(luma: np.ndarray) -> float:
    h, w = luma.shape
    if h < 3 or w < 3:
        return 0.0
    d = luma[:-2, :] - 2.0 * luma[1:-1, :] + luma[2:, :]
    e = d[:, :-2] - 2.0 * d[:, 1:-1] + d[:, 2:]
    total = float(np.abs(e).sum(dtype=np.float64))
    return float(np.sqrt(np.pi / 2.0) * total / (6.0 * (w - 2) * (h - 2)))


def _laplacian_mean(luma: np.ndarray) -> float:
    padded = np.pad(luma, 1, mode="edge")
    lap = (
        padded[:-2, 1:-1] + padded[2:, 1:-1] + padded[1:-1, :-2] + padded[1:-1, 2:]
        - 4.0 * luma
    )
    return float(np.abs(lap).mean(dtype=np.float64))


@lru_cache(maxsize=8)
def _cell_cuts(size: int, cells: int = 3) -> np.ndarray:
    return np.linspace(0, size, cells + 1).astype(int)


def _cell_energy(grad_mag: np.ndarray, cells: int = 3) -> np.ndarray:
    h, w = grad_mag.shape
    ys, xs = _cell_cuts(h, cells), _cell_cuts(w, cells)
    out = np.empty(cells * cells)
    k = 0
    for i in range(cells):
        rows = grad_mag[ys[i] : ys[i + 1]]
        for j in range(cells):
            block = rows[:, xs[j] : xs[j + 1]]
            out[k] = block.mean(dtype=np.float64) if block.size else 0.0
            k += 1
    return out


def _mean_std(channel: np.ndarray) -> tuple[float, float]:
    flat = channel.ravel()
    m = float(flat.mean(dtype=np.float64))
    msq = float(np.einsum("i,i->", flat, flat, dtype=np.float64)) / flat.size
    return m, float(np.sqrt(max(msq - m * m, 0.0)))


def _grad_mag(luma: np.ndarray) -> np.ndarray:
    """Central-difference gradient magnitude with one-sided edges."""
    gx = np.empty_like(luma)
    gx[:, 1:-1] = 0.5 * (luma[:, 2:] - luma[:, :-2])
    gx[:, 0] = luma[:, 1] - luma[:, 0]
    gx[:, -1] = luma[:, -1] - luma[:, -2]
    gy = np.empty_like(luma)
    gy[1:-1, :] = 0.5 * (luma[2:, :] - luma[:-2, :])
    gy[0, :] = luma[1, :] - luma[0, :]
    gy[-1, :] = luma[-1, :] - luma[-2, :]
    return np.sqrt(gx * gx + gy * gy)


def extract_features(raster: Raster, mode: str, patch_size: int = 96) -> np.ndarray:
    """Compute the 134-dim feature vector for one image.

    ``mode`` is "holistic" (input resized to 224x224 internally) or
    "patch" (input must already be patch_size x patch_size). Histograms
    sum to 1; FFT band energies are fractions of total AC power.
    """
    if mode not in ("holistic", "patch"):
        raise ValueError(f"mode must be 'holistic' or 'patch', got {mode!r}")
    aspect = raster.width / raster.height
    log_area = float(np.log(raster.width * raster.height))

    arr = raster.data.astype(np.float32)
    if mode == "holistic":
        # Statistics run on a stride-2 subsample of the resized input;
        # corpus images are upsampled to 224 so the subsample keeps all
        # original content while quartering the per-pixel work.
        arr = np.ascontiguousarray(_resize32(arr, HOLISTIC_SIZE)[::2, ::2])
    elif (raster.width, raster.height) != (patch_size, patch_size):
        raise ValueError(
            f"patch mode requires {patch_size}x{patch_size} input, "
            f"got {raster.width}x{raster.height}"
        )

    r = np.ascontiguousarray(arr[..., 0])
    g = np.ascontiguousarray(arr[..., 1])
    b = np.ascontiguousarray(arr[..., 2])
    luma = 0.299 * r + 0.587 * g + 0.114 * b

    cmax = np.maximum(np.maximum(r, g), b)
    cmin = np.minimum(np.minimum(r, g), b)
    delta = cmax - cmin
    light = 0.5 * (cmax + cmin)
    chromatic = delta > 0
    sat = np.where(
        chromatic,
        delta / np.maximum(1.0 - np.abs(2.0 * light - 1.0), 1e-6),
        0.0,
    ).astype(np.float32)
    np.clip(sat, 0.0, 1.0, out=sat)
    safe_delta = np.where(chromatic, delta, 1.0)
    hue6 = np.where(
        cmax == r,
        np.mod((g - b) / safe_delta, 6.0),
        np.where(cmax == g, (b - r) / safe_delta + 2.0, (r - g) / safe_delta + 4.0),
    )
    hue = np.where(chromatic, hue6 / 6.0, 0.0).astype(np.float32)

    grad_mag = _grad_mag(luma)

    dark = minimum_filter1d(cmin, 15, axis=0, mode="nearest")
    dark = minimum_filter1d(dark, 15, axis=1, mode="nearest")

    n_px = luma.size
    chan_sum = np.einsum("ijk->k", arr, dtype=np.float64)
    chan_sq = np.einsum("ijk,ijk->k", arr, arr, dtype=np.float64)
    chan_mean = chan_sum / n_px
    chan_std = np.sqrt(np.maximum(chan_sq / n_px - chan_mean**2, 0.0))

    out = np.empty(FEATURE_DIM)
    pos = 0
    out[pos : pos + 32] = _hist(luma, 32); pos += 32
    out[pos : pos + 3] = chan_mean; pos += 3
    out[pos : pos + 3] = chan_std; pos += 3
    out[pos : pos + 16] = _hist(sat, 16); pos += 16
    out[pos : pos + 16] = _hist(hue, 16); pos += 16
    dark_p10, dark_p90 = np.percentile(dark, [10, 90])
    out[pos : pos + 3] = (dark.mean(dtype=np.float64), dark_p10, dark_p90); pos += 3
    out[pos : pos + 16] = _hist(np.minimum(grad_mag, 1.0), 16); pos += 16
    out[pos] = _laplacian_mean(luma); pos += 1
    out[pos] = _immerkaer_sigma(luma); pos += 1
    out[pos : pos + 8] = _fft_bands(luma); pos += 8
    out[pos] = float((grad_mag > _EDGE_THRESHOLD).mean(dtype=np.float64)); pos += 1
    out[pos : pos + 9] = _cell_energy(grad_mag); pos += 9
    out[pos : pos + 5] = np.percentile(luma, [1, 5, 50, 95, 99]); pos += 5
    out[pos] = float((luma <= _CLIP_EPS).mean(dtype=np.float64)); pos += 1
    out[pos] = float((luma >= 1.0 - _CLIP_EPS).mean(dtype=np.float64)); pos += 1
    out[pos] = float(chan_mean[0] - chan_mean[1]); pos += 1
    out[pos] = float(chan_mean[2] - chan_mean[1]); pos += 1
    sat_mean, sat_std = _mean_std(sat)
    out[pos] = sat_mean; pos += 1
    out[pos] = sat_std; pos += 1
    out[pos] = aspect; pos += 1
    out[pos] = log_area; pos += 1
    luma_mean = float(luma.mean(dtype=np.float64))
    out[pos] = float(_mean_std(luma)[1] / max(luma_mean, 1e-6)); pos += 1
    out[pos : pos + _RESERVED] = 0.0; pos += _RESERVED
    assert pos == FEATURE_DIM

    if not np.all(np.isfinite(out)):
        raise ValueError("non-finite feature value")
    return out
