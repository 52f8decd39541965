"""Raw annotation ingest, sanity-check accuracy weighting, ground-truth
aggregation, dataset splitting, and the five-worker consistency analysis.

Input is JSONL, one record per line:
    {"image_id", "worker_id", "defect", "level", "is_sanity", "known_level"?, "ts"}
Aggregated ground truth is written as CSV with one column per defect.
"""

from __future__ import annotations

import csv
import io
import json
from collections import defaultdict
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import DefectKind, SeededRng, raw_levels, score_range
from .metrics import (
    CrossClassConfig,
    MetricUndefinedError,
    benjamini_hochberg,
    cross_class_rho,
    kendalls_w,
    spearman_p_value,
)

__all__ = [
    "AnnotationRecord",
    "WorkerAccuracy",
    "AggregatedLabel",
    "BatchConsistency",
    "ConsistencyReport",
    "parse_annotation_jsonl",
    "annotation_to_json",
    "compute_worker_accuracy",
    "aggregate_labels",
    "labels_to_csv",
    "labels_from_csv",
    "split_dataset",
    "consistency_analysis",
]

GT_CSV_COLUMNS = (
    "image_id",
    "bad_exposure",
    "bad_white_balance",
    "saturation",
    "noise",
    "haze",
    "blur",
    "composition",
)

_LEVEL_TOL = 1e-9


@dataclass(frozen=True)
class AnnotationRecord:
    """One worker's level choice for one defect of one image."""

    image_id: str
    worker_id: str
    defect: DefectKind
    level_value: float
    is_sanity: bool = False
    known_value: Optional[float] = None
    timestamp: float = 0.0

    def __post_init__(self) -> None:
        levels = raw_levels(self.defect)
        if not any(abs(self.level_value - lv) <= _LEVEL_TOL for lv in levels):
            raise ValueError(
                f"level {self.level_value!r} not in {levels} for {self.defect.value}"
            )
        if self.is_sanity != (self.known_value is not None):
            raise ValueError("known_value must be present iff is_sanity")


@dataclass(frozen=True)
class WorkerAccuracy:
    worker_id: str
    defect: DefectKind
    accuracy: float
    sanity_count: int


@dataclass(frozen=True)
class AggregatedLabel:
    image_id: str
    defect: DefectKind
    score: float
    contributor_weights: tuple[tuple[str, float], ...]


@dataclass(frozen=True)
class BatchConsistency:
    batch_id: str
    defect: DefectKind
    mean_split_rho: Optional[float]
    rho_p_value: Optional[float]
    rho_degenerate_splits: int
    kendall_w: Optional[float]
    w_p_value: Optional[float]
    n_images: int
    rho_significant: bool = False
    w_significant: bool = False


@dataclass
class ConsistencyReport:
    batches: list[BatchConsistency]
    per_defect: dict[str, dict]
    malformed_batches: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(
            {
                "per_defect": self.per_defect,
                "malformed_batches": self.malformed_batches,
                "batches": [
                    {
                        "batch_id": b.batch_id,
                        "defect": b.defect.value,
                        "mean_split_rho": b.mean_split_rho,
                        "rho_p_value": b.rho_p_value,
                        "rho_degenerate_splits": b.rho_degenerate_splits,
                        "kendall_w": b.kendall_w,
                        "w_p_value": b.w_p_value,
                        "n_images": b.n_images,
                        "rho_significant": b.rho_significant,
                        "w_significant": b.w_significant,
                    }
                    for b in self.batches
                ],
            },
            indent=1,
        )


# ---------------------------------------------------------------------------
# JSONL ingest / export


def annotation_to_json(record: AnnotationRecord) -> str:
    payload = {
        "image_id": record.image_id,
        "worker_id": record.worker_id,
        "defect": record.defect.value,
        "level": record.level_value,
        "is_sanity": record.is_sanity,
        "ts": record.timestamp,
    }
    if record.is_sanity:
        payload["known_level"] = record.known_value
    return json.dumps(payload)


def parse_annotation_jsonl(lines: Iterable[str]) -> list[AnnotationRecord]:
    records = []
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
            records.append(
                AnnotationRecord(
                    image_id=obj["image_id"],
                    worker_id=obj["worker_id"],
                    defect=DefectKind(obj["defect"]),
                    level_value=float(obj["level"]),
                    is_sanity=bool(obj.get("is_sanity", False)),
                    known_value=(
                        float(obj["known_level"]) if obj.get("is_sanity", False) else None
                    ),
                    timestamp=float(obj.get("ts", 0.0)),
                )
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise ValueError(f"bad annotation record on line {lineno}: {exc}") from exc
    return records


# ---------------------------------------------------------------------------
# Worker accuracy and label aggregation


def compute_worker_accuracy(
    records: Sequence[AnnotationRecord], min_sanity_per_defect: int = 3
) -> list[WorkerAccuracy]:
    """Exact-match accuracy on sanity items, per (worker, defect).

    Workers with fewer than ``min_sanity_per_defect`` sanity items for a
    defect fall back to their pooled accuracy across defects; workers with
    no sanity items at all get the global mean accuracy for that defect.
    """
    per_pair: dict[tuple[str, DefectKind], list[bool]] = defaultdict(list)
    per_worker: dict[str, list[bool]] = defaultdict(list)
    workers: set[str] = set()
    defects: set[DefectKind] = set()
    for rec in records:
        workers.add(rec.worker_id)
        defects.add(rec.defect)
        if rec.is_sanity:
            hit = abs(rec.level_value - rec.known_value) <= _LEVEL_TOL
            per_pair[(rec.worker_id, rec.defect)].append(hit)
            per_worker[rec.worker_id].append(hit)

    def pair_accuracy(worker: str, defect: DefectKind) -> Optional[float]:
        hits = per_pair.get((worker, defect), [])
        if len(hits) >= min_sanity_per_defect:
            return float(np.mean(hits))
        pooled = per_worker.get(worker, [])
        if pooled:
            return float(np.mean(pooled))
        return None

    global_mean: dict[DefectKind, float] = {}
    for defect in defects:
        known = [
            pair_accuracy(w, defect)
            for w in workers
            if pair_accuracy(w, defect) is not None
        ]
        global_mean[defect] = float(np.mean(known)) if known else 1.0

    out = []
    for worker in sorted(workers):
        for defect in sorted(defects, key=lambda d: d.value):
            acc = pair_accuracy(worker, defect)
            out.append(
                WorkerAccuracy(
                    worker_id=worker,
                    defect=defect,
                    accuracy=acc if acc is not None else global_mean[defect],
                    sanity_count=len(per_pair.get((worker, defect), [])),
                )
            )
    return out


def aggregate_labels(
    records: Sequence[AnnotationRecord],
    accuracies: Sequence[WorkerAccuracy],
    min_annotators: int = 5,
) -> tuple[list[AggregatedLabel], list[tuple[str, DefectKind, int]]]:
    """Accuracy-weighted consensus score per (image, defect).

    Weights are each contributor's accuracy normalized over the image's
    annotators (equal weights when all accuracies are zero). Groups with
    fewer than ``min_annotators`` non-sanity records land in the rejects
    list instead of being silently dropped.
    """
    acc_map = {(a.worker_id, a.defect): a.accuracy for a in accuracies}
    groups: dict[tuple[str, DefectKind], list[AnnotationRecord]] = defaultdict(list)
    for rec in records:
        if not rec.is_sanity:
            groups[(rec.image_id, rec.defect)].append(rec)

    labels: list[AggregatedLabel] = []
    rejects: list[tuple[str, DefectKind, int]] = []
    for (image_id, defect), recs in sorted(
        groups.items(), key=lambda kv: (kv[0][0], kv[0][1].value)
    ):
        if len(recs) < min_annotators:
            rejects.append((image_id, defect, len(recs)))
            continue
        recs = sorted(recs, key=lambda r: r.worker_id)
        weights = np.array([acc_map.get((r.worker_id, defect), 0.0) for r in recs])
        if weights.sum() <= 0.0:
            weights = np.ones(len(recs))
        weights = weights / weights.sum()
        score = float(np.dot(weights, [r.level_value for r in recs]))
        lo, hi = score_range(defect)
        labels.append(
            AggregatedLabel(
                image_id=image_id,
                defect=defect,
                score=float(min(max(score, lo), hi)),
                contributor_weights=tuple(
                    (r.worker_id, float(w)) for r, w in zip(recs, weights)
                ),
            )
        )
    return labels, rejects


def labels_to_csv(labels: Sequence[AggregatedLabel]) -> str:
    """Ground-truth CSV: one row per image, one column per defect."""
    by_image: dict[str, dict[DefectKind, float]] = defaultdict(dict)
    for label in labels:
        by_image[label.image_id][label.defect] = label.score
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(GT_CSV_COLUMNS)
    for image_id in sorted(by_image):
        row = [image_id]
        for defect in DefectKind:
            value = by_image[image_id].get(defect)
            row.append("" if value is None else f"{value:.6f}")
        writer.writerow(row)
    return buf.getvalue()


def labels_from_csv(text: str) -> dict[str, dict[DefectKind, float]]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if tuple(header) != GT_CSV_COLUMNS:
        raise ValueError(f"unexpected CSV header: {header}")
    out: dict[str, dict[DefectKind, float]] = {}
    for row in reader:
        if not row:
            continue
        scores = {}
        for defect, cell in zip(DefectKind, row[1:]):
            if cell != "":
                scores[defect] = float(cell)
        out[row[0]] = scores
    return out


def split_dataset(
    items: Sequence,
    train_fraction: float,
    rng: SeededRng,
    base_id=lambda item: getattr(item, "base_id", None) or getattr(item, "image_id"),
) -> tuple[list, list]:
    """Deterministic disjoint split, grouped by base image.

    All items sharing a base id land on the same side, so synthetic level
    sequences never straddle the train/test boundary.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie in (0, 1)")
    bases = sorted({base_id(item) for item in items})
    gen = rng.derive("dataset-split").generator()
    order = gen.permutation(len(bases))
    n_train = int(round(train_fraction * len(bases)))
    train_bases = {bases[i] for i in order[:n_train]}
    train = [item for item in items if base_id(item) in train_bases]
    test = [item for item in items if base_id(item) not in train_bases]
    return train, test


# ---------------------------------------------------------------------------
# Consistency analysis (two-against-three splits, Kendall's W, BH-FDR)


def consistency_analysis(
    batches: dict[str, Sequence[AnnotationRecord]],
    cfg: CrossClassConfig = CrossClassConfig(repetitions=500),
    fdr_q: float = 0.05,
) -> ConsistencyReport:
    """Agreement statistics for batches of five workers on shared images.

    For every batch and defect, the two-against-three mean cross-class
    correlation is averaged over all ten worker splits (the three-worker
    mean acts as the reference ordering), Kendall's W is computed over the
    five workers' level vectors, and both p-value families go through
    Benjamini-Hochberg per defect across batches.
    """
    results: list[BatchConsistency] = []
    malformed: list[str] = []

    for batch_id in sorted(batches):
        records = [r for r in batches[batch_id] if not r.is_sanity]
        workers = sorted({r.worker_id for r in records})
        if len(workers) != 5:
            malformed.append(batch_id)
            continue
        by_defect: dict[DefectKind, dict[str, dict[str, float]]] = defaultdict(dict)
        for rec in records:
            by_defect[rec.defect].setdefault(rec.worker_id, {})[rec.image_id] = rec.level_value

        for defect in sorted(by_defect, key=lambda d: d.value):
            worker_maps = by_defect[defect]
            if sorted(worker_maps) != workers:
                malformed.append(f"{batch_id}:{defect.value}")
                continue
            shared = sorted(set.intersection(*(set(m) for m in worker_maps.values())))
            if len(shared) < 3:
                malformed.append(f"{batch_id}:{defect.value}")
                continue
            matrix = np.array(
                [[worker_maps[w][img] for img in shared] for w in workers]
            )
            results.append(
                _batch_consistency(batch_id, defect, workers, shared, matrix, cfg)
            )

    per_defect = _apply_fdr(results, fdr_q)
    return ConsistencyReport(
        batches=results, per_defect=per_defect, malformed_batches=malformed
    )


def _batch_consistency(
    batch_id: str,
    defect: DefectKind,
    workers: list[str],
    images: list[str],
    matrix: np.ndarray,
    cfg: CrossClassConfig,
) -> BatchConsistency:
    rhos = []
    degenerate = 0
    n_list_items = None
    for pair in combinations(range(5), 2):
        two = matrix[list(pair)].mean(axis=0)
        three = matrix[[i for i in range(5) if i not in pair]].mean(axis=0)
        labels = list(zip(images, three.tolist()))
        preds = list(zip(images, two.tolist()))
        try:
            result = cross_class_rho(labels, preds, defect, cfg)
        except MetricUndefinedError:
            degenerate += 1
            continue
        if result.degenerate_count == result.repetitions_used:
            degenerate += 1
            continue
        rhos.append(result.value)
        if n_list_items is None:
            n_list_items = _nonempty_class_count(defect, three)

    mean_rho = float(np.mean(rhos)) if rhos else None
    rho_p = None
    if mean_rho is not None and n_list_items is not None and n_list_items >= 3:
        rho_p = spearman_p_value(float(np.clip(mean_rho, -1.0, 1.0)), n_list_items)

    try:
        w_result = kendalls_w(matrix)
        w_value, w_p = w_result.value, w_result.p_value
    except MetricUndefinedError:
        w_value, w_p = None, None

    return BatchConsistency(
        batch_id=batch_id,
        defect=defect,
        mean_split_rho=mean_rho,
        rho_p_value=rho_p,
        rho_degenerate_splits=degenerate,
        kendall_w=w_value,
        w_p_value=w_p,
        n_images=len(images),
    )


def _nonempty_class_count(defect: DefectKind, reference_scores: np.ndarray) -> int:
    from .core import score_to_class

    classes = {score_to_class(defect, float(v)).class_index for v in reference_scores}
    return len(classes)


def _apply_fdr(results: list[BatchConsistency], q: float) -> dict[str, dict]:
    per_defect: dict[str, dict] = {}
    for defect in DefectKind:
        rows = [r for r in results if r.defect is defect]
        if not rows:
            continue
        rho_idx = [i for i, r in enumerate(rows) if r.rho_p_value is not None]
        w_idx = [i for i, r in enumerate(rows) if r.w_p_value is not None]
        rho_flags = benjamini_hochberg([rows[i].rho_p_value for i in rho_idx], q) if rho_idx else []
        w_flags = benjamini_hochberg([rows[i].w_p_value for i in w_idx], q) if w_idx else []
        for i, flag in zip(rho_idx, rho_flags):
            _mark(rows[i], rho_significant=bool(flag))
        for i, flag in zip(w_idx, w_flags):
            _mark(rows[i], w_significant=bool(flag))
        rho_vals = [r.mean_split_rho for r in rows if r.mean_split_rho is not None]
        w_vals = [r.kendall_w for r in rows if r.kendall_w is not None]
        per_defect[defect.value] = {
            "mean_cross_class_rho": float(np.mean(rho_vals)) if rho_vals else None,
            "mean_kendall_w": float(np.mean(w_vals)) if w_vals else None,
            "n_batches": len(rows),
            "pct_rho_significant": (
                100.0 * float(np.mean([r.rho_significant for r in rows])) if rows else 0.0
            ),
            "pct_w_significant": (
                100.0 * float(np.mean([r.w_significant for r in rows])) if rows else 0.0
            ),
        }
    return per_defect


def _mark(row: BatchConsistency, **changes: bool) -> None:
    # BatchConsistency is frozen; flags are assigned once, after FDR.
    for key, value in changes.items():
        object.__setattr__(row, key, value)
