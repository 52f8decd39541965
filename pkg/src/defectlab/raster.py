"""Image containers and pixel primitives: PNG/JPEG I/O, bilinear resize,
crop, edge-replicated convolution, luma, and RGB/HSL conversion.

Rasters hold row-major float64 samples in [0, 1]; every operation returns
a clamped result. The working space is the stored (display-referred) RGB,
no gamma linearization.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from PIL import Image, UnidentifiedImageError

__all__ = [
    "Raster",
    "GrayRaster",
    "DecodeError",
    "load",
    "save",
    "resize_bilinear",
    "crop",
    "convolve",
    "to_luma",
    "rgb_to_hsl",
    "hsl_to_rgb",
]


class DecodeError(Exception):
    """Raised when an image file cannot be read or has an unsupported format."""


@dataclass
class Raster:
    """RGB image, data shaped (height, width, 3), samples in [0, 1]."""

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"raster data must be (h, w, 3), got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("raster contains non-finite samples")
        self.data = np.clip(arr, 0.0, 1.0)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass
class GrayRaster:
    """Single-channel image, data shaped (height, width), finite samples."""

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"gray raster data must be (h, w), got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("gray raster contains non-finite samples")
        self.data = arr

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


_LOAD_FORMATS = {".png", ".jpg", ".jpeg"}


def load(path: str) -> Raster:
    """Decode a PNG or JPEG file; 8-bit values map to [0, 1] via /255."""
    suffix = "." + str(path).rsplit(".", 1)[-1].lower() if "." in str(path) else ""
    if suffix not in _LOAD_FORMATS:
        raise DecodeError(f"unsupported image format: {path}")
    try:
        with Image.open(path) as img:
            rgb = img.convert("RGB")
            arr = np.asarray(rgb, dtype=np.float64) / 255.0
    except (OSError, UnidentifiedImageError, ValueError) as exc:
        raise DecodeError(f"cannot decode {path}: {exc}") from exc
    return Raster(arr)


def save(raster: Raster, path: str) -> None:
    """Encode as PNG (lossless); samples map to 8 bit with round-half-up."""
    if not str(path).lower().endswith(".png"):
        raise DecodeError(f"only PNG encoding is supported, got: {path}")
    quantized = np.floor(raster.data * 255.0 + 0.5).astype(np.uint8)
    Image.fromarray(quantized, mode="RGB").save(path, format="PNG", compress_level=1)


@lru_cache(maxsize=64)
def _resize_axis(in_size: int, out_size: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Half-pixel-centered source indices and weights for one axis."""
    pos = (np.arange(out_size, dtype=np.float64) + 0.5) * (in_size / out_size) - 0.5
    pos = np.clip(pos, 0.0, in_size - 1.0)
    i0 = np.floor(pos).astype(np.intp)
    i1 = np.minimum(i0 + 1, in_size - 1)
    w1 = pos - i0
    return i0, i1, w1


def _resize_array(data: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    in_h, in_w = data.shape[:2]
    if (in_w, in_h) == (out_w, out_h):
        return data.copy()
    y0, y1, wy = _resize_axis(in_h, out_h)
    x0, x1, wx = _resize_axis(in_w, out_w)
    wy_col = wy.reshape(-1, *([1] * (data.ndim - 1)))
    rows = data[y0] * (1.0 - wy_col) + data[y1] * wy_col
    if data.ndim == 3:
        out = rows[:, x0] * (1.0 - wx)[None, :, None] + rows[:, x1] * wx[None, :, None]
    else:
        out = rows[:, x0] * (1.0 - wx)[None, :] + rows[:, x1] * wx[None, :]
    return out


def resize_bilinear(raster: Raster, out_w: int, out_h: int) -> Raster:
    """Bilinear resize with half-pixel-centered sampling."""
    if out_w < 1 or out_h < 1:
        raise ValueError(f"resize dimensions must be >= 1, got {out_w}x{out_h}")
    return Raster(_resize_array(raster.data, out_w, out_h))


def crop(raster: Raster, x: int, y: int, w: int, h: int) -> Raster:
    """Crop the rectangle [x, x+w) x [y, y+h); must lie inside the raster."""
    if w < 1 or h < 1:
        raise ValueError(f"crop size must be >= 1, got {w}x{h}")
    if x < 0 or y < 0 or x + w > raster.width or y + h > raster.height:
        raise ValueError(
            f"crop {w}x{h}+{x}+{y} outside {raster.width}x{raster.height} raster"
        )
    return Raster(raster.data[y : y + h, x : x + w].copy())


def convolve(gray: GrayRaster, kernel: np.ndarray) -> GrayRaster:
    """2-D convolution with edge replication at the borders.

    The kernel must be odd-sized in both dimensions.
    """
    k = np.asarray(kernel, dtype=np.float64)
    if k.ndim != 2 or k.shape[0] % 2 == 0 or k.shape[1] % 2 == 0:
        raise ValueError(f"kernel must be odd-sized 2-D, got shape {k.shape}")
    kh, kw = k.shape
    if kh > gray.height or kw > gray.width:
        raise ValueError(
            f"kernel {kh}x{kw} larger than image {gray.height}x{gray.width}"
        )
    ry, rx = kh // 2, kw // 2
    padded = np.pad(gray.data, ((ry, ry), (rx, rx)), mode="edge")
    out = np.zeros_like(gray.data)
    # True convolution: kernel is flipped relative to the sample window.
    for dy in range(kh):
        for dx in range(kw):
            weight = k[kh - 1 - dy, kw - 1 - dx]
            if weight != 0.0:
                out += weight * padded[dy : dy + gray.height, dx : dx + gray.width]
    return GrayRaster(out)


_LUMA = np.array([0.299, 0.587, 0.114])


def to_luma(raster: Raster) -> GrayRaster:
    """Rec. 601 luma: 0.299 R + 0.587 G + 0.114 B."""
    return GrayRaster(raster.data @ _LUMA)


def rgb_to_hsl(rgb: np.ndarray) -> np.ndarray:
    """Vectorized RGB -> HSL on an (..., 3) array; H in [0, 1)."""
    rgb = np.asarray(rgb, dtype=np.float64)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    cmax = rgb.max(axis=-1)
    cmin = rgb.min(axis=-1)
    delta = cmax - cmin
    light = (cmax + cmin) / 2.0

    sat = np.zeros_like(light)
    chromatic = delta > 0
    denom = 1.0 - np.abs(2.0 * light - 1.0)
    np.divide(delta, denom, out=sat, where=chromatic & (denom > 0))

    hue = np.zeros_like(light)
    with np.errstate(invalid="ignore", divide="ignore"):
        hr = np.mod((g - b) / delta, 6.0)
        hg = (b - r) / delta + 2.0
        hb = (r - g) / delta + 4.0
    hue = np.where(cmax == r, hr, hue)
    hue = np.where((cmax == g) & (g != r), hg, hue)
    hue = np.where((cmax == b) & (b != r) & (b != g), hb, hue)
    hue = np.where(chromatic, hue / 6.0, 0.0)

    return np.stack([hue, np.clip(sat, 0.0, 1.0), light], axis=-1)


def hsl_to_rgb(hsl: np.ndarray) -> np.ndarray:
    """Vectorized HSL -> RGB on an (..., 3) array."""
    hsl = np.asarray(hsl, dtype=np.float64)
    h, s, light = hsl[..., 0], hsl[..., 1], hsl[..., 2]
    c = (1.0 - np.abs(2.0 * light - 1.0)) * s
    hp = np.mod(h, 1.0) * 6.0
    x = c * (1.0 - np.abs(np.mod(hp, 2.0) - 1.0))
    zero = np.zeros_like(c)

    sector = np.floor(hp).astype(np.int64) % 6
    r = np.select([sector == 0, sector == 1, sector == 2, sector == 3, sector == 4], [c, x, zero, zero, x], c)
    g = np.select([sector == 0, sector == 1, sector == 2, sector == 3, sector == 4], [x, c, c, x, zero], zero)
    b = np.select([sector == 0, sector == 1, sector == 2, sector == 3, sector == 4], [zero, zero, x, c, c], x)

    m = light - c / 2.0
    return np.clip(np.stack([r + m, g + m, b + m], axis=-1), 0.0, 1.0)
