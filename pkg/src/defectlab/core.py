"""Shared domain types: the seven defects, severity score scales, the
11/21-point class grid, and deterministic random stream management.

Everything here is an immutable value; no image data, no I/O.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum

import numpy as np

__all__ = [
    "DefectKind",
    "SeverityScore",
    "SeverityClassification",
    "ImageRef",
    "SeededRng",
    "class_count",
    "score_range",
    "raw_levels",
    "score_to_class",
    "class_to_score",
]


class DefectKind(Enum):
    """The seven defects, in the column order used throughout reports."""

    BAD_EXPOSURE = "bad_exposure"
    BAD_WHITE_BALANCE = "bad_white_balance"
    OVER_UNDER_SATURATION = "saturation"
    NOISE = "noise"
    HAZE = "haze"
    UNDESIRED_BLUR = "blur"
    BAD_COMPOSITION = "composition"


# Saturation is signed (negative = under-saturated) and twice as finely
# gridded; every other defect lives on [0, 1] with 11 grid points.
_SIGNED = DefectKind.OVER_UNDER_SATURATION

_BOUNDARY_TOL = 1e-9


def class_count(defect: DefectKind) -> int:
    """Number of severity classes: 21 for saturation, 11 otherwise."""
    return 21 if defect is _SIGNED else 11


def score_range(defect: DefectKind) -> tuple[float, float]:
    """Valid continuous score range for a defect."""
    return (-1.0, 1.0) if defect is _SIGNED else (0.0, 1.0)


def raw_levels(defect: DefectKind) -> tuple[float, ...]:
    """The discrete levels a single annotator can choose from."""
    if defect is _SIGNED:
        return (-1.0, -0.5, 0.0, 0.5, 1.0)
    return (0.0, 0.5, 1.0)


@dataclass(frozen=True)
class SeverityScore:
    """A continuous severity value for one defect."""

    defect: DefectKind
    value: float

    def __post_init__(self) -> None:
        lo, hi = score_range(self.defect)
        if not (lo - _BOUNDARY_TOL <= self.value <= hi + _BOUNDARY_TOL):
            raise ValueError(
                f"severity {self.value!r} outside [{lo}, {hi}] for {self.defect.value}"
            )
        object.__setattr__(self, "value", float(min(max(self.value, lo), hi)))


@dataclass(frozen=True)
class SeverityClassification:
    """One cell of the discrete severity grid for a defect."""

    defect: DefectKind
    class_index: int
    class_count: int
    class_score: float


@dataclass(frozen=True)
class ImageRef:
    """Pointer to an image on disk plus its pixel dimensions."""

    image_id: str
    path: str
    width: int
    height: int

    def __post_init__(self) -> None:
        if self.width < 32 or self.height < 32:
            raise ValueError(f"image {self.image_id!r}: dimensions below 32px minimum")


def class_to_score(defect: DefectKind, class_index: int) -> float:
    """Grid score of a class: index/10, shifted down by 1 for saturation."""
    count = class_count(defect)
    if not 0 <= class_index < count:
        raise ValueError(
            f"class index {class_index} out of range [0, {count}) for {defect.value}"
        )
    if defect is _SIGNED:
        return -1.0 + class_index / 10.0
    return class_index / 10.0


def score_to_class(defect: DefectKind, value: float) -> SeverityClassification:
    """Bin a continuous score to the nearest grid class.

    Exact midpoints between two grid points round toward the class whose
    score is nearer to zero severity.
    """
    lo, hi = score_range(defect)
    if not (lo - _BOUNDARY_TOL <= value <= hi + _BOUNDARY_TOL):
        raise ValueError(
            f"severity {value!r} outside [{lo}, {hi}] for {defect.value}"
        )
    value = min(max(value, lo), hi)
    count = class_count(defect)

    # Work on the index axis: grid point i sits at (lo + i/10) * 10.
    pos = (value - lo) * 10.0
    below = int(min(max(np.floor(pos), 0), count - 1))
    above = min(below + 1, count - 1)
    frac = pos - below
    if abs(frac - 0.5) <= 10.0 * _BOUNDARY_TOL and above != below:
        # Midpoint: prefer the grid point with smaller absolute score.
        idx = below if abs(class_to_score(defect, below)) <= abs(
            class_to_score(defect, above)
        ) else above
    elif frac > 0.5:
        idx = above
    else:
        idx = below
    return SeverityClassification(
        defect=defect,
        class_index=idx,
        class_count=count,
        class_score=class_to_score(defect, idx),
    )


def _digest_index(purpose: str, index: int) -> int:
    h = hashlib.blake2s(f"{purpose}#{index}".encode(), digest_size=8)
    return int.from_bytes(h.digest(), "little")


@dataclass(frozen=True)
class SeededRng:
    """Deterministic random stream keyed by (master_seed, stream_index).

    Streams derived via :meth:`derive` are independent of each other and
    of execution order, so parallel and serial runs draw identical values.
    """

    master_seed: int
    stream_index: int = 0

    def derive(self, purpose: str, index: int = 0) -> "SeededRng":
        """Child stream for a named purpose; stable across runs and platforms."""
        return SeededRng(self.master_seed, _digest_index(purpose, index) ^ self.stream_index)

    def generator(self) -> np.random.Generator:
        """Fresh numpy generator positioned at the start of this stream."""
        seq = np.random.SeedSequence(entropy=self.master_seed, spawn_key=(self.stream_index,))
        return np.random.Generator(np.random.PCG64(seq))


DEFECT_ORDER: tuple[DefectKind, ...] = tuple(DefectKind)
