"""Rank statistics: tie-aware Spearman, the cross-class ranking
correlation, Kendall's W with tie correction, t-test / chi-squared
significance, and Benjamini-Hochberg FDR control.

The cross-class correlation stratifies the test set by severity class,
repeatedly samples one item per non-empty class, and averages the
Spearman correlation between the class order and the predicted scores.
It is balanced (each class contributes one item per draw), proportional
(nearby misclassifications cost less), and purely rank-based.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import betainc
from scipy.stats import chi2 as _chi2

from .core import DefectKind, SeededRng, class_count, score_to_class

__all__ = [
    "RankedSample",
    "CrossClassConfig",
    "MetricResult",
    "MetricUndefinedError",
    "spearman",
    "rank_average",
    "cross_class_rho",
    "kendalls_w",
    "benjamini_hochberg",
    "spearman_p_value",
]


class MetricUndefinedError(Exception):
    """Raised when a metric has no defined value on the given data."""


@dataclass(frozen=True)
class RankedSample:
    """Paired ground-truth and predicted scores for a set of items."""

    items: tuple[str, ...]
    ground_truth: tuple[float, ...]
    predicted: tuple[float, ...]

    def __post_init__(self) -> None:
        if not (len(self.items) == len(self.ground_truth) == len(self.predicted)):
            raise ValueError("items, ground truth and predictions must align")
        if len(self.items) < 2:
            raise ValueError("need at least two items")
        if not all(np.isfinite(self.ground_truth)) or not all(np.isfinite(self.predicted)):
            raise ValueError("scores must be finite")


@dataclass(frozen=True)
class CrossClassConfig:
    """Monte-Carlo settings for the cross-class correlation."""

    repetitions: int = 15_000
    seed: int = 0
    min_nonempty_classes: int = 3

    def __post_init__(self) -> None:
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")


@dataclass(frozen=True)
class MetricResult:
    value: float
    repetitions_used: int = 1
    degenerate_count: int = 0
    p_value: Optional[float] = None
    mc_stderr: float = 0.0


def rank_average(values: Sequence[float]) -> np.ndarray:
    """Ranks starting at 1, ties replaced by the mean of their positions."""
    arr = np.asarray(values, dtype=np.float64)
    order = np.argsort(arr, kind="stable")
    ranks = np.empty(arr.size, dtype=np.float64)
    sorted_vals = arr[order]
    i = 0
    while i < arr.size:
        j = i
        while j + 1 < arr.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(x: Sequence[float], y: Sequence[float]) -> Optional[float]:
    """Tie-aware Spearman correlation; None when either side has no rank
    variance (the degenerate marker)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"inputs must be equal-length vectors, got {x.shape} vs {y.shape}")
    if x.size < 2:
        raise ValueError("need at least two observations")
    rx = rank_average(x)
    ry = rank_average(y)
    dx = rx - rx.mean()
    dy = ry - ry.mean()
    vx = float(dx @ dx)
    vy = float(dy @ dy)
    if vx == 0.0 or vy == 0.0:
        return None
    num = float(dx @ dy)
    # Cauchy-Schwarz equality means identical (or opposite) rank order;
    # return the exact extreme rather than a value off by one rounding.
    if num * num >= vx * vy:
        return 1.0 if num > 0 else -1.0
    return num / float(np.sqrt(vx * vy))


def cross_class_rho(
    labels: Sequence[tuple[str, float]],
    preds: Sequence[tuple[str, float]],
    defect: DefectKind,
    cfg: CrossClassConfig = CrossClassConfig(),
) -> MetricResult:
    """Mean Spearman correlation over stratified single-item-per-class draws.

    Items are binned by their ground-truth severity class; each repetition
    samples one item uniformly from every non-empty class and correlates
    the class order with the predicted scores. Degenerate repetitions
    (no prediction variance) are counted and excluded from the mean.
    """
    pred_by_item = dict(preds)
    if len(pred_by_item) != len(preds):
        raise ValueError("duplicate item ids in predictions")
    missing = [item for item, _ in labels if item not in pred_by_item]
    if missing:
        raise ValueError(f"predictions missing for {len(missing)} items, e.g. {missing[0]!r}")
    if len(labels) != len(pred_by_item):
        raise ValueError("labels and predictions must cover the same items")

    buckets: dict[int, list[float]] = {}
    for item, true_score in labels:
        cls = score_to_class(defect, true_score).class_index
        buckets.setdefault(cls, []).append(pred_by_item[item])
    nonempty = sorted(buckets)
    if len(nonempty) < cfg.min_nonempty_classes:
        raise MetricUndefinedError(
            f"{defect.value}: only {len(nonempty)} non-empty classes of "
            f"{class_count(defect)}, need {cfg.min_nonempty_classes}"
        )
    class_preds = [np.asarray(buckets[c], dtype=np.float64) for c in nonempty]
    class_order = np.arange(len(nonempty), dtype=np.float64)

    rng_root = SeededRng(cfg.seed).derive("cross-class-rho")
    values = np.empty(cfg.repetitions, dtype=np.float64)
    n_degenerate = 0
    n_valid = 0
    for rep in range(cfg.repetitions):
        gen = rng_root.derive("rep", rep).generator()
        picks = np.array(
            [bucket[gen.integers(bucket.size)] for bucket in class_preds]
        )
        rho = spearman(class_order, picks)
        if rho is None:
            n_degenerate += 1
        else:
            values[n_valid] = rho
            n_valid += 1
    if n_valid == 0:
        return MetricResult(
            value=0.0,
            repetitions_used=cfg.repetitions,
            degenerate_count=n_degenerate,
            mc_stderr=0.0,
        )
    valid = values[:n_valid]
    stderr = float(valid.std(ddof=0) / np.sqrt(n_valid)) if n_valid > 1 else 0.0
    return MetricResult(
        value=float(valid.mean()),
        repetitions_used=cfg.repetitions,
        degenerate_count=n_degenerate,
        mc_stderr=stderr,
    )


def kendalls_w(rankings: np.ndarray) -> MetricResult:
    """Kendall's coefficient of concordance with tie correction.

    ``rankings`` is an (m judges x n items) score matrix. Returns W in
    [0, 1] plus the chi-squared p-value (chi2 = m (n-1) W, df = n-1).
    """
    mat = np.asarray(rankings, dtype=np.float64)
    if mat.ndim != 2:
        raise ValueError(f"rankings must be a 2-D matrix, got shape {mat.shape}")
    m, n = mat.shape
    if m < 2 or n < 2:
        raise ValueError(f"need >= 2 judges and >= 2 items, got {m}x{n}")

    ranks = np.vstack([rank_average(row) for row in mat])
    tie_terms = 0.0
    for row in mat:
        _, counts = np.unique(row, return_counts=True)
        tie_terms += float(np.sum(counts.astype(np.float64) ** 3 - counts))

    totals = ranks.sum(axis=0)
    s = float(np.sum((totals - totals.mean()) ** 2))
    denom = m * m * (n**3 - n) - m * tie_terms
    if denom <= 0.0:
        raise MetricUndefinedError("all items tied for every judge; W undefined")
    w = 12.0 * s / denom
    w = float(min(max(w, 0.0), 1.0))
    chi_sq = m * (n - 1) * w
    p = float(_chi2.sf(chi_sq, df=n - 1))
    return MetricResult(value=w, p_value=p)


def benjamini_hochberg(p_values: Sequence[float], q: float) -> np.ndarray:
    """Step-up BH procedure; boolean rejection flags in input order."""
    p = np.asarray(p_values, dtype=np.float64)
    if p.size == 0:
        return np.zeros(0, dtype=bool)
    if np.any((p < 0) | (p > 1)):
        raise ValueError("p-values must lie in [0, 1]")
    if not 0.0 < q < 1.0:
        raise ValueError("q must lie in (0, 1)")
    order = np.argsort(p, kind="stable")
    m = p.size
    thresholds = (np.arange(1, m + 1) / m) * q
    passing = np.nonzero(p[order] <= thresholds)[0]
    flags = np.zeros(m, dtype=bool)
    if passing.size:
        k = passing[-1] + 1
        flags[order[:k]] = True
    return flags


def spearman_p_value(rho: float, n: int) -> float:
    """Two-tailed t-test p-value for a correlation on n observations."""
    if n < 3:
        raise ValueError(f"need n >= 3 for the t-test, got {n}")
    if not np.isfinite(rho) or abs(rho) > 1:
        raise ValueError(f"correlation must lie in [-1, 1], got {rho}")
    if abs(rho) == 1.0:
        return 0.0
    df = n - 2
    t_sq = rho * rho * df / (1.0 - rho * rho)
    # P(|T| > t) for Student-t via the regularized incomplete beta.
    return float(betainc(df / 2.0, 0.5, df / (df + t_sq)))
