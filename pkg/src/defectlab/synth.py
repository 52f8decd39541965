"""Graded synthetic defect sequences and procedural defect-free base images.

Each sequence kind maps one defect to a parametric transform whose
severity grows with the level index; level 0 (center level 10 for
saturation) is the bit-exact identity. Ground-truth scores sit on the
same class grid the annotation pipeline produces, so synthetic levels
align with severity classes.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .core import DefectKind, ImageRef, SeededRng, class_count, class_to_score
from .raster import (
    GrayRaster,
    Raster,
    convolve,
    crop,
    hsl_to_rgb,
    resize_bilinear,
    rgb_to_hsl,
    save,
    to_luma,
)

__all__ = [
    "SEQUENCE_KINDS",
    "sequence_defect",
    "sequence_levels",
    "SynthSpec",
    "HazeParams",
    "SynthRow",
    "SynthManifest",
    "generate_base_corpus",
    "apply_defect",
    "build_synth_dataset",
]


# Sequence names double as manifest/CLI tokens. Exposure gets two
# sequences (under / over), everything else one.
SEQUENCE_KINDS: tuple[str, ...] = (
    "exposure-under",
    "exposure-over",
    "white-balance",
    "saturation",
    "noise",
    "haze",
    "blur",
    "composition",
)

_SEQ_TO_DEFECT: dict[str, DefectKind] = {
    "exposure-under": DefectKind.BAD_EXPOSURE,
    "exposure-over": DefectKind.BAD_EXPOSURE,
    "white-balance": DefectKind.BAD_WHITE_BALANCE,
    "saturation": DefectKind.OVER_UNDER_SATURATION,
    "noise": DefectKind.NOISE,
    "haze": DefectKind.HAZE,
    "blur": DefectKind.UNDESIRED_BLUR,
    "composition": DefectKind.BAD_COMPOSITION,
}


def sequence_defect(kind: str) -> DefectKind:
    try:
        return _SEQ_TO_DEFECT[kind]
    except KeyError:
        raise ValueError(f"unknown sequence kind {kind!r}; choose from {SEQUENCE_KINDS}") from None


def sequence_levels(kind: str) -> int:
    """11 levels for every sequence except saturation's 21."""
    return class_count(sequence_defect(kind))


@dataclass(frozen=True)
class HazeParams:
    """Atmospheric scattering parameters: per-channel airlight and transmission."""

    airlight: tuple[float, float, float]
    transmission: float

    def __post_init__(self) -> None:
        if not all(0.7 <= a <= 1.0 for a in self.airlight):
            raise ValueError(f"airlight channels must lie in [0.7, 1.0], got {self.airlight}")
        if not 0.0 < self.transmission <= 1.0:
            raise ValueError(f"transmission must lie in (0, 1], got {self.transmission}")


@dataclass(frozen=True)
class SynthSpec:
    """One defective rendering: sequence kind, level, and optional fixed
    per-image parameters (drawn from the rng when absent)."""

    kind: str
    level: int
    params: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        count = sequence_levels(self.kind)
        if not 0 <= self.level < count:
            raise ValueError(f"level {self.level} out of range [0, {count}) for {self.kind}")

    @property
    def defect(self) -> DefectKind:
        return sequence_defect(self.kind)

    @property
    def level_count(self) -> int:
        return sequence_levels(self.kind)

    @property
    def severity(self) -> float:
        """Signed severity s: level/(count-1), or (level-10)/10 for saturation."""
        if self.kind == "saturation":
            return (self.level - 10) / 10.0
        return self.level / (self.level_count - 1)

    @property
    def is_identity(self) -> bool:
        return self.level == (10 if self.kind == "saturation" else 0)


@dataclass(frozen=True)
class SynthRow:
    image_id: str
    base_id: str
    path: str
    defect: str  # sequence kind token
    level: int
    score: float

    @property
    def kind(self) -> DefectKind:
        return sequence_defect(self.defect)


@dataclass
class SynthManifest:
    rows: list[SynthRow]
    provenance: dict = field(default_factory=dict)

    def to_json(self) -> str:
        payload = {
            "provenance": self.provenance,
            "rows": [
                {
                    "image_id": r.image_id,
                    "base_id": r.base_id,
                    "path": r.path,
                    "defect": r.defect,
                    "level": r.level,
                    "score": r.score,
                }
                for r in self.rows
            ],
        }
        return json.dumps(payload, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "SynthManifest":
        payload = json.loads(text)
        rows = [SynthRow(**row) for row in payload["rows"]]
        return cls(rows=rows, provenance=payload.get("provenance", {}))

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path: str) -> "SynthManifest":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(fh.read())


# ---------------------------------------------------------------------------
# Procedural base images


def _value_noise(gen: np.random.Generator, size: int, cell: int) -> np.ndarray:
    """One octave of bilinearly upsampled random grid noise in [-1, 1]."""
    nodes = max(2, size // cell + 2)
    grid = gen.uniform(-1.0, 1.0, size=(nodes, nodes))
    ys = np.linspace(0, nodes - 1.001, size)
    xs = np.linspace(0, nodes - 1.001, size)
    y0 = ys.astype(np.intp)
    x0 = xs.astype(np.intp)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    top = grid[y0][:, x0] * (1 - wx) + grid[y0][:, x0 + 1] * wx
    bot = grid[y0 + 1][:, x0] * (1 - wx) + grid[y0 + 1][:, x0 + 1] * wx
    return top * (1 - wy) + bot * wy


_ANCHORS = ((0.5, 0.5), (1 / 3, 1 / 3), (2 / 3, 1 / 3), (1 / 3, 2 / 3), (2 / 3, 2 / 3))


def _paint_shape(img: np.ndarray, gen: np.random.Generator, size: int) -> None:
    """Blend one ellipse or rectangle anchored at the center or a thirds point."""
    cx, cy = _ANCHORS[gen.integers(len(_ANCHORS))]
    cx, cy = cx * size, cy * size
    half_w = gen.uniform(0.08, 0.22) * size
    half_h = gen.uniform(0.08, 0.22) * size
    color = gen.uniform(0.1, 0.9, size=3)
    yy, xx = np.mgrid[0:size, 0:size]
    if gen.integers(2) == 0:
        mask = ((xx - cx) / half_w) ** 2 + ((yy - cy) / half_h) ** 2 <= 1.0
    else:
        mask = (np.abs(xx - cx) <= half_w) & (np.abs(yy - cy) <= half_h)
    alpha = gen.uniform(0.65, 0.95)
    img[mask] = (1 - alpha) * img[mask] + alpha * color


def _normalize_luma(img: np.ndarray, target_mean: float, target_std: float) -> np.ndarray:
    """Affinely retarget luma statistics, iterating to absorb clamping."""
    out = img
    for _ in range(4):
        luma = out @ np.array([0.299, 0.587, 0.114])
        mean, std = float(luma.mean()), float(luma.std())
        if abs(mean - target_mean) < 5e-3 and abs(std - target_std) < 5e-3:
            break
        gain = target_std / max(std, 1e-6)
        out = np.clip((out - mean) * gain + target_mean, 0.0, 1.0)
    return out


def generate_base_corpus(
    out_dir: str,
    count: int,
    size: int = 128,
    rng: SeededRng = SeededRng(0),
) -> list[ImageRef]:
    """Write ``count`` procedural defect-free images and return their refs.

    Images mix smooth gradients, multi-octave textures, and shapes anchored
    at the center or thirds points; luma mean lands in [0.35, 0.65] and
    luma std in [0.12, 0.3].
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    os.makedirs(out_dir, exist_ok=True)
    width = len(str(max(count - 1, 1)))
    refs = []
    for i in range(count):
        gen = rng.derive("base-image", i).generator()

        # Smooth two-color gradient background with mild chroma.
        theta = gen.uniform(0, 2 * np.pi)
        yy, xx = np.mgrid[0:size, 0:size]
        ramp = (np.cos(theta) * xx + np.sin(theta) * yy) / size
        ramp = (ramp - ramp.min()) / max(ramp.max() - ramp.min(), 1e-9)
        gray = gen.uniform(0.3, 0.7, size=(2, 1))
        chroma = gen.uniform(-0.12, 0.12, size=(2, 3))
        c0, c1 = np.clip(gray + chroma, 0.05, 0.95)
        img = ramp[..., None] * c1 + (1 - ramp[..., None]) * c0

        # Texture octaves, coarse to fine; the finest keeps edges crisp.
        amplitude = gen.uniform(0.1, 0.2)
        for cell in (size // 4, size // 8, size // 16, 4, 2):
            if cell < 1:
                continue
            img += (amplitude * _value_noise(gen, size, cell))[..., None]
            amplitude *= 0.55
        img = np.clip(img, 0.0, 1.0)

        for _ in range(int(gen.integers(1, 4))):
            _paint_shape(img, gen, size)

        img = _normalize_luma(
            img, float(gen.uniform(0.42, 0.58)), float(gen.uniform(0.15, 0.24))
        )

        image_id = f"base-{i:0{width}d}"
        path = os.path.join(out_dir, image_id + ".png")
        save(Raster(img), path)
        refs.append(ImageRef(image_id=image_id, path=path, width=size, height=size))
    return refs


# ---------------------------------------------------------------------------
# Defect transforms


def _line_kernel(length: int, angle: float) -> np.ndarray:
    """Unit-sum motion-blur kernel: a line of ``length`` px through the center."""
    if length == 1:
        return np.array([[1.0]])
    kernel = np.zeros((length, length))
    center = (length - 1) / 2.0
    cos_a, sin_a = np.cos(angle), np.sin(angle)
    for step in range(length):
        offset = step - center
        x = center + offset * cos_a
        y = center + offset * sin_a
        x0, y0 = int(np.floor(x)), int(np.floor(y))
        fx, fy = x - x0, y - y0
        for dy, wy in ((0, 1 - fy), (1, fy)):
            for dx, wx in ((0, 1 - fx), (1, fx)):
                yy, xx = y0 + dy, x0 + dx
                if 0 <= yy < length and 0 <= xx < length and wy * wx > 0:
                    kernel[yy, xx] += wy * wx
    return kernel / kernel.sum()


def _grid_energy(luma: np.ndarray, cells: int = 3) -> np.ndarray:
    """Mean squared gradient magnitude per cell of a cells x cells grid."""
    gy, gx = np.gradient(luma)
    energy = gx * gx + gy * gy
    h, w = energy.shape
    out = np.zeros((cells, cells))
    ys = np.linspace(0, h, cells + 1).astype(int)
    xs = np.linspace(0, w, cells + 1).astype(int)
    for i in range(cells):
        for j in range(cells):
            block = energy[ys[i] : ys[i + 1], xs[j] : xs[j + 1]]
            out[i, j] = block.mean() if block.size else 0.0
    return out


def _offcenter_crop_origin(subject: float, span: int, window: int) -> int:
    """Window origin pushing ``subject`` toward a window edge, staying in frame."""
    margin = max(1, round(0.1 * window))
    near_left = min(max(round(subject - margin), 0), span - window)
    near_right = min(max(round(subject - window + margin), 0), span - window)
    # Pick whichever candidate leaves the subject more eccentric in the crop.
    ecc_left = abs((subject - near_left) - window / 2.0)
    ecc_right = abs((subject - near_right) - window / 2.0)
    return near_left if ecc_left >= ecc_right else near_right


def apply_defect(raster: Raster, spec: SynthSpec, rng: SeededRng) -> Raster:
    """Render one severity level of one defect sequence.

    Per-image parameters (blur angle, haze airlight, channel-shift
    direction) come from ``spec.params`` when present, otherwise from
    ``rng``; pass fixed params to keep a whole level sequence coherent.
    """
    if spec.is_identity:
        return Raster(raster.data.copy())
    s = spec.severity
    gen = rng.generator()
    data = raster.data

    if spec.kind == "exposure-under":
        return Raster(data * 2.0 ** (-3.0 * s))
    if spec.kind == "exposure-over":
        return Raster(data * 2.0 ** (3.0 * s))

    if spec.kind == "saturation":
        factor = 1.0 + 1.5 * s if s > 0 else 1.0 + s
        hsl = rgb_to_hsl(data)
        hsl[..., 1] = np.clip(hsl[..., 1] * factor, 0.0, 1.0)
        return Raster(hsl_to_rgb(hsl))

    if spec.kind == "noise":
        sigma = 0.25 * s
        return Raster(data + gen.normal(0.0, sigma, size=data.shape))

    if spec.kind == "blur":
        length = 1 + round(20 * s)
        if length > min(raster.width, raster.height):
            raise ValueError(
                f"blur kernel {length}px exceeds image {raster.width}x{raster.height}"
            )
        angle = spec.params.get("angle")
        if angle is None:
            angle = float(gen.uniform(0.0, np.pi))
        kernel = _line_kernel(length, float(angle))
        out = np.stack(
            [convolve(GrayRaster(data[..., c]), kernel).data for c in range(3)], axis=-1
        )
        return Raster(out)

    if spec.kind == "haze":
        params = spec.params.get("haze")
        if isinstance(params, HazeParams):
            airlight = np.asarray(params.airlight)
            t = params.transmission
        else:
            fixed = spec.params.get("airlight")
            airlight = np.asarray(fixed) if fixed is not None else gen.uniform(0.85, 1.0, size=3)
            t = 1.0 - 0.85 * s
        return Raster(data * t + airlight * (1.0 - t))

    if spec.kind == "white-balance":
        direction = spec.params.get("direction")
        if direction is None:
            direction = "warm" if gen.integers(2) == 0 else "cool"
        boost, cut = 1.0 + 0.6 * s, 1.0 - 0.4 * s
        gains = np.array([boost, 1.0, cut]) if direction == "warm" else np.array([cut, 1.0, boost])
        return Raster(data * gains)

    if spec.kind == "composition":
        w, h = raster.width, raster.height
        frac = 1.0 - 0.3 * s
        cw, ch = max(8, round(frac * w)), max(8, round(frac * h))
        energy = _grid_energy(to_luma(raster).data)
        cell = np.unravel_index(int(np.argmax(energy)), energy.shape)
        subject_y = (cell[0] + 0.5) * h / 3.0
        subject_x = (cell[1] + 0.5) * w / 3.0
        x0 = _offcenter_crop_origin(subject_x, w, cw)
        y0 = _offcenter_crop_origin(subject_y, h, ch)
        window = crop(raster, x0, y0, cw, ch)
        return resize_bilinear(window, w, h)

    raise ValueError(f"unhandled sequence kind {spec.kind!r}")


def build_synth_dataset(
    base_corpus: Sequence[ImageRef],
    defects: Iterable[str],
    rng: SeededRng,
    out_dir: str,
    provenance: Optional[dict] = None,
) -> SynthManifest:
    """Render one full level sequence per base image per sequence kind.

    Writes PNGs under ``out_dir/images`` and the manifest JSON to
    ``out_dir/manifest.json``; rows are sorted by (base, defect, level).
    """
    from .raster import load  # local import to keep module load light

    kinds = list(defects)
    for kind in kinds:
        sequence_defect(kind)  # validates
    if not base_corpus:
        raise ValueError("base corpus is empty")

    image_dir = os.path.join(out_dir, "images")
    os.makedirs(image_dir, exist_ok=True)
    rows = []
    for base in sorted(base_corpus, key=lambda r: r.image_id):
        base_raster = load(base.path)
        for kind in kinds:
            seq_rng = rng.derive(f"sequence:{kind}:{base.image_id}")
            params = _draw_sequence_params(kind, seq_rng)
            for level in range(sequence_levels(kind)):
                spec = SynthSpec(kind=kind, level=level, params=params)
                rendered = apply_defect(base_raster, spec, seq_rng.derive("noise", level))
                image_id = f"{base.image_id}__{kind}__L{level:02d}"
                path = os.path.join(image_dir, image_id + ".png")
                save(rendered, path)
                rows.append(
                    SynthRow(
                        image_id=image_id,
                        base_id=base.image_id,
                        path=path,
                        defect=kind,
                        level=level,
                        score=class_to_score(sequence_defect(kind), level),
                    )
                )
    rows.sort(key=lambda r: (r.base_id, r.defect, r.level))
    manifest = SynthManifest(rows=rows, provenance=provenance or {})
    manifest.save(os.path.join(out_dir, "manifest.json"))
    return manifest


def _draw_sequence_params(kind: str, rng: SeededRng) -> dict:
    gen = rng.derive("params").generator()
    if kind == "blur":
        return {"angle": float(gen.uniform(0.0, np.pi))}
    if kind == "haze":
        airlight = tuple(float(v) for v in gen.uniform(0.85, 1.0, size=3))
        return {"airlight": airlight}
    if kind == "white-balance":
        return {"direction": "warm" if gen.integers(2) == 0 else "cool"}
    return {}
