"""Shared-trunk multi-column network and its binary model container.

Each column (holistic / patch) owns a feature-standardization affine, a
two-layer tanh trunk (134 -> 128 -> 64), and one softmax head per defect
(the patch column has no composition head). Model files start with the
magic "DFL1", then a length-prefixed JSON header, then raw little-endian
float64 parameter blocks in header order.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from ..core import DefectKind, SeededRng, class_count
from .features import FEATURE_DIM, FEATURE_VERSION

__all__ = [
    "TRUNK_DIMS",
    "HOLISTIC_DEFECTS",
    "PATCH_DEFECTS",
    "DefectModel",
    "init_model",
    "save_model",
    "load_model",
]

MAGIC = b"DFL1"
FORMAT_VERSION = 1
TRUNK_DIMS = (FEATURE_DIM, 128, 64)

HOLISTIC_DEFECTS: tuple[DefectKind, ...] = tuple(DefectKind)
PATCH_DEFECTS: tuple[DefectKind, ...] = tuple(
    d for d in DefectKind if d is not DefectKind.BAD_COMPOSITION
)


def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


@dataclass
class DefectModel:
    """One trained column: standardization, trunk, and per-defect heads."""

    column: str  # "holistic" | "patch"
    defects: tuple[DefectKind, ...]
    params: dict[str, np.ndarray]
    train_config: dict = field(default_factory=dict)
    format_version: int = FORMAT_VERSION
    feature_version: int = FEATURE_VERSION

    def __post_init__(self) -> None:
        if self.column not in ("holistic", "patch"):
            raise ValueError(f"column must be 'holistic' or 'patch', got {self.column!r}")
        if self.column == "patch" and DefectKind.BAD_COMPOSITION in self.defects:
            raise ValueError("patch column must not have a composition head")
        for name, arr in self.params.items():
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite parameters in block {name!r}")

    def head_names(self) -> list[str]:
        return [d.value for d in self.defects]

    def forward(self, features: np.ndarray, with_cache: bool = False):
        """Probabilities per defect for a (N, 134) feature batch."""
        x = np.atleast_2d(np.asarray(features, dtype=np.float64))
        p = self.params
        xn = (x - p["norm_mean"]) * p["norm_scale"]
        z1 = xn @ p["w1"].T + p["b1"]
        a1 = np.tanh(z1)
        z2 = a1 @ p["w2"].T + p["b2"]
        a2 = np.tanh(z2)
        probs = {}
        for defect in self.defects:
            logits = a2 @ p[f"head_{defect.value}_w"].T + p[f"head_{defect.value}_b"]
            probs[defect] = _softmax(logits)
        if with_cache:
            return probs, {"xn": xn, "a1": a1, "a2": a2}
        return probs


def init_model(column: str, rng: SeededRng, train_config: dict | None = None) -> DefectModel:
    """Fresh model with U(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases."""
    defects = HOLISTIC_DEFECTS if column == "holistic" else PATCH_DEFECTS
    gen = rng.derive(f"init:{column}").generator()
    params: dict[str, np.ndarray] = {
        "norm_mean": np.zeros(FEATURE_DIM),
        "norm_scale": np.ones(FEATURE_DIM),
    }
    d0, d1, d2 = TRUNK_DIMS
    params["w1"] = gen.uniform(-1 / np.sqrt(d0), 1 / np.sqrt(d0), size=(d1, d0))
    params["b1"] = np.zeros(d1)
    params["w2"] = gen.uniform(-1 / np.sqrt(d1), 1 / np.sqrt(d1), size=(d2, d1))
    params["b2"] = np.zeros(d2)
    for defect in defects:
        k = class_count(defect)
        params[f"head_{defect.value}_w"] = gen.uniform(
            -1 / np.sqrt(d2), 1 / np.sqrt(d2), size=(k, d2)
        )
        params[f"head_{defect.value}_b"] = np.zeros(k)
    return DefectModel(
        column=column,
        defects=defects,
        params=params,
        train_config=dict(train_config or {}),
    )


def _block_order(model: DefectModel) -> list[str]:
    order = ["norm_mean", "norm_scale", "w1", "b1", "w2", "b2"]
    for defect in model.defects:
        order += [f"head_{defect.value}_w", f"head_{defect.value}_b"]
    return order


def save_model(model: DefectModel, path: str) -> None:
    order = _block_order(model)
    header = {
        "format_version": model.format_version,
        "column": model.column,
        "feature_dim": FEATURE_DIM,
        "feature_version": model.feature_version,
        "trunk_dims": list(TRUNK_DIMS),
        "defects": [d.value for d in model.defects],
        "class_counts": {d.value: class_count(d) for d in model.defects},
        "train_config": model.train_config,
        "blocks": [{"name": n, "shape": list(model.params[n].shape)} for n in order],
    }
    header_bytes = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        for name in order:
            fh.write(np.ascontiguousarray(model.params[name], dtype="<f8").tobytes())


def load_model(path: str) -> DefectModel:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise ValueError(f"{path}: not a model file (bad magic {magic!r})")
        (header_len,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        if header["format_version"] != FORMAT_VERSION:
            raise ValueError(
                f"{path}: unsupported format version {header['format_version']}"
            )
        params = {}
        for block in header["blocks"]:
            shape = tuple(block["shape"])
            n_bytes = int(np.prod(shape)) * 8
            raw = fh.read(n_bytes)
            if len(raw) != n_bytes:
                raise ValueError(f"{path}: truncated block {block['name']!r}")
            params[block["name"]] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
    return DefectModel(
        column=header["column"],
        defects=tuple(DefectKind(v) for v in header["defects"]),
        params=params,
        train_config=header.get("train_config", {}),
        format_version=header["format_version"],
        feature_version=header.get("feature_version", FEATURE_VERSION),
    )
