"""Prediction with holistic+patch score fusion, and dense patch scoring
for defect localization heat maps."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..core import DefectKind, SeededRng, SeverityScore
from ..raster import GrayRaster, Raster, crop
from .features import extract_features
from .infogain import ClassProbabilities, decode_score
from .network import DefectModel

__all__ = ["PredictionResult", "predict", "localize"]


@dataclass
class PredictionResult:
    """Fused per-defect severity scores plus the per-column components."""

    scores: dict[DefectKind, SeverityScore]
    holistic: dict[DefectKind, float]
    patch: Optional[dict[DefectKind, float]]
    warnings: list[str] = field(default_factory=list)


def _decode_batch(model: DefectModel, features: np.ndarray) -> dict[DefectKind, np.ndarray]:
    """Decoded scores per defect for a feature batch, shape (N,) each."""
    probs = model.forward(features)
    out = {}
    for defect, p in probs.items():
        out[defect] = np.array(
            [decode_score(ClassProbabilities(defect, row)).value for row in p]
        )
    return out


def predict(
    holistic_model: DefectModel,
    patch_model: DefectModel,
    raster: Raster,
    k_patches: Optional[int] = None,
    rng: SeededRng = SeededRng(0),
) -> PredictionResult:
    """Seven severity scores for one image.

    Six defects fuse the holistic score with the mean over K random
    patches by an equal-weight average; composition uses the holistic
    column only. Images smaller than the patch size fall back to
    holistic-only with a warning flag.
    """
    if holistic_model.format_version != patch_model.format_version:
        raise ValueError("holistic and patch models have mismatched format versions")
    if k_patches is None:
        k_patches = int(patch_model.train_config.get("test_patches", 10))
    ps = int(patch_model.train_config.get("patch_size", 96))

    hol = _decode_batch(holistic_model, extract_features(raster, "holistic")[None, :])
    holistic_scores = {d: float(v[0]) for d, v in hol.items()}

    warnings: list[str] = []
    patch_scores: Optional[dict[DefectKind, float]] = None
    if raster.width < ps or raster.height < ps:
        warnings.append(
            f"image {raster.width}x{raster.height} smaller than patch size {ps}; "
            "holistic-only prediction"
        )
    else:
        gen = rng.derive("predict-patches").generator()
        feats = []
        for _ in range(k_patches):
            x0 = int(gen.integers(0, raster.width - ps + 1))
            y0 = int(gen.integers(0, raster.height - ps + 1))
            feats.append(extract_features(crop(raster, x0, y0, ps, ps), "patch", patch_size=ps))
        decoded = _decode_batch(patch_model, np.vstack(feats))
        patch_scores = {d: float(v.mean()) for d, v in decoded.items()}

    fused = {}
    for defect in DefectKind:
        if defect is DefectKind.BAD_COMPOSITION or patch_scores is None:
            value = holistic_scores[defect]
        else:
            value = 0.5 * (holistic_scores[defect] + patch_scores[defect])
        fused[defect] = SeverityScore(defect, value)
    return PredictionResult(
        scores=fused, holistic=holistic_scores, patch=patch_scores, warnings=warnings
    )


def _axis_positions(span: int, window: int, stride: int) -> list[int]:
    positions = list(range(0, span - window + 1, stride))
    if positions[-1] != span - window:
        positions.append(span - window)
    return positions


def _interp_axis(centers: np.ndarray, values: np.ndarray, out_size: int) -> np.ndarray:
    """Linear interpolation of grid values onto pixel coordinates, with
    constant extrapolation beyond the outermost centers. Interpolates
    along the last axis."""
    coords = np.arange(out_size, dtype=np.float64)
    flat = values.reshape(-1, values.shape[-1])
    out = np.empty((flat.shape[0], out_size))
    for i, row in enumerate(flat):
        out[i] = np.interp(coords, centers, row)
    return out.reshape(*values.shape[:-1], out_size)


def localize(
    patch_model: DefectModel,
    raster: Raster,
    defect: DefectKind,
    stride: Optional[int] = None,
) -> GrayRaster:
    """Dense sliding-window severity heat map, bilinearly upsampled to the
    input dimensions. Composition is holistic-only and unsupported here."""
    if defect is DefectKind.BAD_COMPOSITION:
        raise ValueError("composition is predicted from the whole image; no heat map")
    if defect not in patch_model.defects:
        raise ValueError(f"patch model has no head for {defect.value}")
    ps = int(patch_model.train_config.get("patch_size", 96))
    if raster.width < ps or raster.height < ps:
        raise ValueError(
            f"image {raster.width}x{raster.height} smaller than patch size {ps}"
        )
    if stride is None:
        stride = ps // 2
    if stride < 1:
        raise ValueError("stride must be >= 1")

    xs = _axis_positions(raster.width, ps, stride)
    ys = _axis_positions(raster.height, ps, stride)
    feats = []
    for y0 in ys:
        for x0 in xs:
            feats.append(
                extract_features(crop(raster, x0, y0, ps, ps), "patch", patch_size=ps)
            )
    decoded = _decode_batch(patch_model, np.vstack(feats))[defect]
    grid = decoded.reshape(len(ys), len(xs))

    cx = np.array(xs, dtype=np.float64) + (ps - 1) / 2.0
    cy = np.array(ys, dtype=np.float64) + (ps - 1) / 2.0
    rows = _interp_axis(cx, grid, raster.width)  # (gy, W)
    full = _interp_axis(cy, rows.T, raster.height).T  # (H, W)
    return GrayRaster(full)
