"""Training pipeline: rebalancing augmentation plan, feature-array
assembly for both columns, and the momentum-SGD loop over the summed
per-defect losses.

Augmented sample counts follow inverse class frequency, clamped to
[5, 50]. The holistic augmentation op is a random half-extent crop of
the resized input warped back to full size; the patch op is a random
patch-sized crop at original resolution.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

import cv2

from ..core import DefectKind, SeededRng, class_count, class_to_score, score_to_class
from ..raster import Raster, crop, load
from ..synth import SynthManifest
from .features import FEATURE_DIM, HOLISTIC_SIZE, extract_features
from .infogain import InfogainMatrix, identity_infogain, infogain_loss
from .network import (
    HOLISTIC_DEFECTS,
    PATCH_DEFECTS,
    DefectModel,
    init_model,
)

__all__ = [
    "TrainConfig",
    "LabeledImage",
    "AugmentPlan",
    "TrainingData",
    "labeled_images_from_synth",
    "compute_class_counts",
    "augment_training_set",
    "build_training_arrays",
    "train_on_arrays",
    "train",
]

AUGMENT_MIN = 5
AUGMENT_MAX = 50


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    lr_shared: float = 1e-4
    head_lr_multiplier: float = 10.0
    lr_decay: float = 0.96
    lr_decay_every: int = 6_400
    weight_decay: float = 2e-4
    momentum: float = 0.9
    epochs: int = 12
    seed: int = 0
    patch_size: int = 96
    test_patches: int = 10
    train_patches_per_image: int = 1
    train_views_per_image: int = 1
    loss: str = "infogain"  # infogain | xent | l2
    augment: bool = True

    def __post_init__(self) -> None:
        positives = (
            self.batch_size,
            self.lr_shared,
            self.head_lr_multiplier,
            self.lr_decay,
            self.lr_decay_every,
            self.epochs,
            self.patch_size,
            self.test_patches,
            self.train_patches_per_image,
            self.train_views_per_image,
        )
        if any(v <= 0 for v in positives):
            raise ValueError("all core training settings must be positive")
        if self.weight_decay < 0 or not 0 <= self.momentum < 1:
            raise ValueError("bad weight_decay or momentum")
        if self.loss not in ("infogain", "xent", "l2"):
            raise ValueError(f"loss must be infogain|xent|l2, got {self.loss!r}")

    def snapshot(self) -> dict:
        return {
            "batch_size": self.batch_size,
            "lr_shared": self.lr_shared,
            "head_lr_multiplier": self.head_lr_multiplier,
            "lr_decay": self.lr_decay,
            "lr_decay_every": self.lr_decay_every,
            "weight_decay": self.weight_decay,
            "momentum": self.momentum,
            "epochs": self.epochs,
            "seed": self.seed,
            "patch_size": self.patch_size,
            "test_patches": self.test_patches,
            "train_patches_per_image": self.train_patches_per_image,
            "train_views_per_image": self.train_views_per_image,
            "loss": self.loss,
            "augment": self.augment,
        }


@dataclass(frozen=True)
class LabeledImage:
    """One training image with its full seven-defect score vector."""

    image_id: str
    path: str
    scores: dict[DefectKind, float]
    base_id: Optional[str] = None

    def class_index(self, defect: DefectKind) -> int:
        return score_to_class(defect, self.scores.get(defect, 0.0)).class_index


def labeled_images_from_synth(manifest: SynthManifest) -> list[LabeledImage]:
    """Manifest rows to labeled images: target defect scored, others zero."""
    out = []
    for row in manifest.rows:
        scores = {d: 0.0 for d in DefectKind}
        scores[row.kind] = row.score
        out.append(
            LabeledImage(
                image_id=row.image_id, path=row.path, scores=scores, base_id=row.base_id
            )
        )
    return out


def compute_class_counts(labeled: Sequence[LabeledImage]) -> dict[DefectKind, np.ndarray]:
    counts = {d: np.zeros(class_count(d), dtype=np.int64) for d in DefectKind}
    for img in labeled:
        for defect in DefectKind:
            counts[defect][img.class_index(defect)] += 1
    return counts


@dataclass
class AugmentPlan:
    """Per-image augmented sample counts, each in [5, 50]."""

    counts: dict[str, int]

    def total(self) -> int:
        return sum(self.counts.values())


def _severity_magnitude(defect: DefectKind, cls: int) -> float:
    return abs(class_to_score(defect, cls))


def augment_training_set(
    labeled: Sequence[LabeledImage],
    class_counts: dict[DefectKind, np.ndarray],
    rng: SeededRng,
) -> AugmentPlan:
    """Inverse-frequency augmentation counts keyed on each image's
    most-severe defect class, clamped to [5, 50]."""
    if not labeled:
        raise ValueError("empty manifest")
    del rng  # counts are fully determined by the class statistics
    plan: dict[str, int] = {}
    for img in labeled:
        worst = max(
            DefectKind,
            key=lambda d: (_severity_magnitude(d, img.class_index(d)), d.value),
        )
        cls = img.class_index(worst)
        n_c = max(int(class_counts[worst][cls]), 1)
        n_max = int(class_counts[worst].max())
        plan[img.image_id] = int(np.clip(round(n_max / n_c), AUGMENT_MIN, AUGMENT_MAX))
    return AugmentPlan(counts=plan)


@dataclass
class ColumnData:
    features: np.ndarray  # (N, 134)
    labels: dict[DefectKind, np.ndarray]  # defect -> (N,) class indices
    image_ids: list[str]


@dataclass
class TrainingData:
    holistic: ColumnData
    patch: ColumnData
    skipped_small: list[str] = field(default_factory=list)


def build_training_arrays(
    labeled: Sequence[LabeledImage],
    config: TrainConfig,
    rng: SeededRng,
) -> TrainingData:
    """Extract cached feature arrays for both columns.

    Every image contributes its unaugmented sample plus (if enabled) the
    plan's augmented crops; images smaller than the patch size are skipped
    for the patch column and reported.
    """
    if not labeled:
        raise ValueError("no labeled images")
    plan = (
        augment_training_set(labeled, compute_class_counts(labeled), rng)
        if config.augment
        else AugmentPlan(counts={img.image_id: 0 for img in labeled})
    )

    half = HOLISTIC_SIZE // 2
    ps = config.patch_size
    hol_feats: list[np.ndarray] = []
    hol_ids: list[str] = []
    hol_rows: list[LabeledImage] = []
    pat_feats: list[np.ndarray] = []
    pat_ids: list[str] = []
    pat_rows: list[LabeledImage] = []
    skipped: list[str] = []

    for img in labeled:
        raster = load(img.path)
        n_aug = plan.counts[img.image_id]

        # The unaugmented sample goes through the extractor's own holistic
        # resize so dimension-derived features match prediction-time inputs.
        hol_feats.append(extract_features(raster, "holistic"))
        hol_ids.append(img.image_id)
        hol_rows.append(img)
        n_crops = (config.train_views_per_image - 1) + n_aug
        resized = None
        if n_crops:
            resized = Raster(
                cv2.resize(
                    raster.data,
                    (HOLISTIC_SIZE, HOLISTIC_SIZE),
                    interpolation=cv2.INTER_LINEAR,
                )
            )
        gen = rng.derive(f"hol-crop:{img.image_id}").generator()
        for _ in range(n_crops):
            x0 = int(gen.integers(0, HOLISTIC_SIZE - half + 1))
            y0 = int(gen.integers(0, HOLISTIC_SIZE - half + 1))
            # The crop is warped back to full extent by the extractor's
            # internal holistic resize.
            hol_feats.append(
                extract_features(crop(resized, x0, y0, half, half), "holistic")
            )
            hol_ids.append(img.image_id)
            hol_rows.append(img)

        if raster.width < ps or raster.height < ps:
            skipped.append(img.image_id)
            continue
        gen = rng.derive(f"patch-crop:{img.image_id}").generator()
        for _ in range(config.train_patches_per_image + n_aug):
            x0 = int(gen.integers(0, raster.width - ps + 1))
            y0 = int(gen.integers(0, raster.height - ps + 1))
            patch = crop(raster, x0, y0, ps, ps)
            pat_feats.append(extract_features(patch, "patch", patch_size=ps))
            pat_ids.append(img.image_id)
            pat_rows.append(img)

    def column(rows: list[LabeledImage], feats: list[np.ndarray], ids: list[str],
               defects: tuple[DefectKind, ...]) -> ColumnData:
        labels = {
            d: np.array([r.class_index(d) for r in rows], dtype=np.intp) for d in defects
        }
        return ColumnData(
            features=np.vstack(feats) if feats else np.empty((0, FEATURE_DIM)),
            labels=labels,
            image_ids=ids,
        )

    return TrainingData(
        holistic=column(hol_rows, hol_feats, hol_ids, HOLISTIC_DEFECTS),
        patch=column(pat_rows, pat_feats, pat_ids, PATCH_DEFECTS),
        skipped_small=skipped,
    )


def _l2_loss(
    probs: np.ndarray, labels: np.ndarray, grid: np.ndarray
) -> tuple[float, np.ndarray]:
    """Squared error between decoded scores and grid targets, with the
    gradient taken through the softmax."""
    decoded = probs @ grid
    target = grid[labels]
    err = decoded - target
    n = probs.shape[0]
    loss = float(np.mean(err**2))
    grad = (2.0 / n) * err[:, None] * probs * (grid[None, :] - decoded[:, None])
    return loss, grad


class TrainingDiverged(RuntimeError):
    pass


def _train_column(
    data: ColumnData,
    column: str,
    config: TrainConfig,
    matrices: dict[DefectKind, InfogainMatrix],
    rng: SeededRng,
) -> tuple[DefectModel, list[dict]]:
    n = data.features.shape[0]
    if n == 0:
        raise ValueError(f"no samples for the {column} column")
    for defect, lbl in data.labels.items():
        if np.unique(lbl).size < 2:
            raise ValueError(
                f"{column}: labels for {defect.value} cover fewer than 2 classes"
            )

    model = init_model(column, SeededRng(config.seed), train_config=config.snapshot())
    p = model.params
    mean = data.features.mean(axis=0)
    std = data.features.std(axis=0)
    p["norm_mean"] = mean
    # Dimensions constant over the training set carry no signal; zero them
    # out instead of amplifying train/eval drift by a huge reciprocal.
    p["norm_scale"] = np.where(std > 1e-8, 1.0 / np.maximum(std, 1e-8), 0.0)

    grids = {
        d: np.array([class_to_score(d, i) for i in range(class_count(d))])
        for d in model.defects
    }
    trainable = [k for k in p if k not in ("norm_mean", "norm_scale")]
    velocity = {k: np.zeros_like(p[k]) for k in trainable}
    head_keys = {k for k in trainable if k.startswith("head_")}

    log: list[dict] = []
    iteration = 0
    for epoch in range(config.epochs):
        gen = rng.derive(f"shuffle:{column}", epoch).generator()
        order = gen.permutation(n)
        epoch_losses = {d: 0.0 for d in model.defects}
        n_batches = 0
        for start in range(0, n, config.batch_size):
            batch = order[start : start + config.batch_size]
            x = data.features[batch]
            probs, cache = model.forward(x, with_cache=True)
            a1, a2, xn = cache["a1"], cache["a2"], cache["xn"]

            d_a2 = np.zeros_like(a2)
            grads: dict[str, np.ndarray] = {}
            for defect in model.defects:
                lbl = data.labels[defect][batch]
                if config.loss == "l2":
                    loss_val, d_logits = _l2_loss(probs[defect], lbl, grids[defect])
                else:
                    loss_val, d_logits = infogain_loss(probs[defect], lbl, matrices[defect])
                if not np.isfinite(loss_val):
                    raise TrainingDiverged(
                        f"non-finite loss at iteration {iteration} for "
                        f"{defect.value}; batch ids "
                        f"{[data.image_ids[i] for i in batch[:5]]}"
                    )
                epoch_losses[defect] += loss_val
                wk, bk = f"head_{defect.value}_w", f"head_{defect.value}_b"
                grads[wk] = d_logits.T @ a2
                grads[bk] = d_logits.sum(axis=0)
                d_a2 += d_logits @ p[wk]

            d_z2 = d_a2 * (1.0 - a2 * a2)
            grads["w2"] = d_z2.T @ a1
            grads["b2"] = d_z2.sum(axis=0)
            d_z1 = (d_z2 @ p["w2"]) * (1.0 - a1 * a1)
            grads["w1"] = d_z1.T @ xn
            grads["b1"] = d_z1.sum(axis=0)

            lr = config.lr_shared * config.lr_decay ** (iteration // config.lr_decay_every)
            for key in trainable:
                rate = lr * (config.head_lr_multiplier if key in head_keys else 1.0)
                g = grads[key] + config.weight_decay * p[key]
                velocity[key] = config.momentum * velocity[key] - rate * g
                p[key] += velocity[key]
            iteration += 1
            n_batches += 1

        log.append(
            {
                "epoch": epoch,
                "column": column,
                "loss": {d.value: epoch_losses[d] / max(n_batches, 1) for d in model.defects},
            }
        )
    return model, log


def train_on_arrays(
    data: TrainingData,
    config: TrainConfig,
    infogain_set: dict[DefectKind, InfogainMatrix] | None,
    rng: SeededRng,
) -> tuple[DefectModel, DefectModel, list[dict]]:
    """Train both columns on prebuilt feature arrays."""
    if config.loss == "xent" or infogain_set is None:
        matrices = {d: identity_infogain(d) for d in DefectKind}
    else:
        matrices = infogain_set
    holistic, log_h = _train_column(data.holistic, "holistic", config, matrices, rng)
    patch, log_p = _train_column(data.patch, "patch", config, matrices, rng)
    return holistic, patch, log_h + log_p


def train(
    labeled: Sequence[LabeledImage],
    config: TrainConfig,
    infogain_set: dict[DefectKind, InfogainMatrix] | None,
    rng: SeededRng,
) -> tuple[DefectModel, DefectModel, list[dict]]:
    """Full pipeline: feature arrays, then two independently trained columns."""
    data = build_training_arrays(labeled, config, rng)
    return train_on_arrays(data, config, infogain_set, rng)
