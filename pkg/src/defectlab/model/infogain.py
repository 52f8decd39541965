"""Infogain-weighted multinomial logistic loss and its class-similarity
matrix, plus probability-weighted severity decoding.

The loss for a batch is  -(1/N) sum_n sum_k H[l_n, k] log(p_nk):
misclassifications into classes near the true one are penalized less,
with H derived either from simulated annotator behavior (conditional
independence across five annotators) or from an analytic Gaussian
falloff when no annotator statistics are available.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..core import (
    DefectKind,
    SeededRng,
    SeverityScore,
    class_count,
    class_to_score,
    raw_levels,
    score_range,
)

__all__ = [
    "InfogainMatrix",
    "ClassProbabilities",
    "derive_infogain_matrix",
    "identity_infogain",
    "infogain_loss",
    "decode_score",
]

_LOG_FLOOR = 1e-12
_ROW_FLOOR = 1e-3
_FALLBACK_SIGMA = 1.5


@dataclass(frozen=True)
class InfogainMatrix:
    """Class-similarity reward matrix H for one defect; diagonal is 1."""

    defect: DefectKind
    h: np.ndarray

    def __post_init__(self) -> None:
        k = class_count(self.defect)
        mat = np.asarray(self.h, dtype=np.float64)
        if mat.shape != (k, k):
            raise ValueError(f"H must be {k}x{k} for {self.defect.value}, got {mat.shape}")
        if np.any(mat < 0.0) or np.any(mat > 1.0):
            raise ValueError("H entries must lie in [0, 1]")
        if not np.allclose(np.diag(mat), 1.0):
            raise ValueError("H diagonal must be 1")
        if np.any(mat.max(axis=1) <= 0.0):
            raise ValueError("every H row needs a positive entry")
        object.__setattr__(self, "h", mat)

    @property
    def k(self) -> int:
        return self.h.shape[0]


@dataclass(frozen=True)
class ClassProbabilities:
    """Softmax output over a defect's severity classes."""

    defect: DefectKind
    p: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.p, dtype=np.float64)
        k = class_count(self.defect)
        if arr.shape != (k,):
            raise ValueError(f"need {k} probabilities for {self.defect.value}, got {arr.shape}")
        if np.any(arr < 0.0) or abs(arr.sum() - 1.0) > 1e-6:
            raise ValueError("probabilities must be >= 0 and sum to 1")
        object.__setattr__(self, "p", arr)


def identity_infogain(defect: DefectKind) -> InfogainMatrix:
    """H = I, which reduces the infogain loss to plain cross-entropy."""
    return InfogainMatrix(defect, np.eye(class_count(defect)))


def _canonical_raw_tuple(defect: DefectKind, cls: int) -> list[int]:
    """Five raw-level indices whose equal-weight mean is exactly the class score.

    The least-spread decomposition is used: as many annotators as possible
    sit at the level adjacent to the mean.
    """
    levels = raw_levels(defect)
    center = levels.index(0.0)
    # Half-steps away from zero severity that the five annotators must sum to.
    units = cls - 10 if defect is DefectKind.OVER_UNDER_SATURATION else cls
    sign = 1 if units >= 0 else -1
    magnitude = abs(units)
    n_extreme = max(0, magnitude - 5)
    n_mild = magnitude - 2 * n_extreme
    n_center = 5 - n_extreme - n_mild
    tuple_ = (
        [center + 2 * sign] * n_extreme
        + [center + sign] * n_mild
        + [center] * n_center
    )
    assert len(tuple_) == 5
    return tuple_


def derive_infogain_matrix(
    defect: DefectKind,
    annotator_stats: Optional[np.ndarray] = None,
    rng: SeededRng = SeededRng(0),
    simulations: int = 100_000,
) -> InfogainMatrix:
    """Build H for one defect.

    With ``annotator_stats`` (a confusion matrix over the defect's raw
    levels, rows = true level), five independent annotators are simulated
    per true class, their equal-weight mean is binned back to the class
    grid, and H[l, k] is the observed P(binned k | true l) rescaled to a
    row maximum of 1, floored at 1e-3, diagonal forced to 1. Without
    stats, an analytic Gaussian falloff over class distance is used.
    """
    k = class_count(defect)
    if annotator_stats is None:
        idx = np.arange(k, dtype=np.float64)
        h = np.exp(-((idx[:, None] - idx[None, :]) ** 2) / (2.0 * _FALLBACK_SIGMA**2))
        return InfogainMatrix(defect, h)

    conf = np.asarray(annotator_stats, dtype=np.float64)
    n_levels = len(raw_levels(defect))
    if conf.shape != (n_levels, n_levels) or np.any(conf < 0):
        raise ValueError(
            f"confusion matrix must be {n_levels}x{n_levels} non-negative, got {conf.shape}"
        )
    row_sums = conf.sum(axis=1)
    if np.any(row_sums <= 0):
        raise ValueError("confusion matrix rows must have positive sums")
    conf = conf / row_sums[:, None]

    levels = np.asarray(raw_levels(defect))
    lo, _ = score_range(defect)
    h = np.zeros((k, k))
    for true_cls in range(k):
        gen = rng.derive(f"infogain:{defect.value}", true_cls).generator()
        totals = np.zeros(simulations)
        for raw_idx in _canonical_raw_tuple(defect, true_cls):
            draws = gen.choice(levels, size=simulations, p=conf[raw_idx])
            totals += draws
        means = totals / 5.0
        # Means land exactly on the 0.1 grid, so plain rounding bins them.
        binned = np.rint((means - lo) * 10.0).astype(np.intp)
        binned = np.clip(binned, 0, k - 1)
        h[true_cls] = np.bincount(binned, minlength=k) / simulations

    h = h / h.max(axis=1, keepdims=True)
    h = np.maximum(h, _ROW_FLOOR)
    np.fill_diagonal(h, 1.0)
    return InfogainMatrix(defect, h)


def infogain_loss(
    probs: np.ndarray, labels: np.ndarray, matrix: InfogainMatrix
) -> tuple[float, np.ndarray]:
    """Batch loss and its gradient with respect to the pre-softmax logits.

    ``probs`` is (N, K) softmax output, ``labels`` the (N,) true class
    indices. Probabilities are floored at 1e-12 inside the log only.
    """
    p = np.asarray(probs, dtype=np.float64)
    l = np.asarray(labels, dtype=np.intp)
    if p.ndim != 2 or p.shape[1] != matrix.k:
        raise ValueError(f"probs must be (N, {matrix.k}), got {p.shape}")
    if l.shape != (p.shape[0],):
        raise ValueError("labels must be one class index per row")
    if np.any(l < 0) or np.any(l >= matrix.k):
        raise ValueError(f"label out of range [0, {matrix.k})")
    n = p.shape[0]
    h_rows = matrix.h[l]  # (N, K)
    loss = float(-(h_rows * np.log(np.maximum(p, _LOG_FLOOR))).sum() / n)
    row_mass = h_rows.sum(axis=1, keepdims=True)
    grad = (p * row_mass - h_rows) / n
    return loss, grad


def decode_score(probs: ClassProbabilities) -> SeverityScore:
    """Probability-weighted mean of the class grid scores."""
    grid = np.array(
        [class_to_score(probs.defect, i) for i in range(class_count(probs.defect))]
    )
    return SeverityScore(probs.defect, float(np.dot(probs.p, grid)))
