"""HTTP annotation service: serves image batches with hidden sanity-check
items, records annotations to an append-only JSONL store, and exposes
live worker-accuracy statistics plus a JSONL export.

Sanity metadata never leaves the server; clients only ever see image ids.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass, field
from typing import Optional

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import FileResponse, JSONResponse, PlainTextResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .annotations import (
    AnnotationRecord,
    annotation_to_json,
    compute_worker_accuracy,
    parse_annotation_jsonl,
)
from .core import DefectKind, SeededRng, raw_levels

__all__ = ["SanityItem", "AnnotationStore", "ServiceState", "create_app"]

_LEVEL_TOL = 1e-9


@dataclass(frozen=True)
class SanityItem:
    image_id: str
    defect: DefectKind
    known_level: float


@dataclass
class AnnotationSession:
    session_id: str
    worker_id: str
    image_ids: list[str]
    sanity_ids: set[str]
    created_at: float
    submitted: set[tuple[str, str]] = field(default_factory=set)  # (image, defect)


class AnnotationStore:
    """Append-only JSONL log with a derived in-memory record list.

    The log is replayed at startup, so restarting the service reconstructs
    identical statistics.
    """

    def __init__(self, path: str):
        self.path = path
        self._lock = threading.Lock()
        self.records: list[AnnotationRecord] = []
        if os.path.exists(path):
            with open(path, "r", encoding="utf-8") as fh:
                self.records = parse_annotation_jsonl(fh)

    def append(self, record: AnnotationRecord) -> None:
        line = annotation_to_json(record)
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")
            self.records.append(record)

    def snapshot(self) -> list[AnnotationRecord]:
        with self._lock:
            return list(self.records)


class ServiceState:
    def __init__(
        self,
        image_paths: dict[str, str],
        sanity_pool: list[SanityItem],
        store: AnnotationStore,
        seed: int,
        sanity_fraction: float = 0.1,
    ):
        self.image_paths = image_paths
        self.sanity_pool = sanity_pool
        self.sanity_by_image: dict[str, dict[DefectKind, float]] = {}
        for item in sanity_pool:
            self.sanity_by_image.setdefault(item.image_id, {})[item.defect] = item.known_level
        self.store = store
        self.rng = SeededRng(seed)
        self.sanity_fraction = sanity_fraction
        self.sessions: dict[str, AnnotationSession] = {}
        self.open_by_worker: dict[str, str] = {}
        self.session_counter = 0
        self.lock = threading.Lock()

    def build_session(self, worker: str, size: int) -> AnnotationSession:
        pool = sorted(set(self.image_paths) - set(self.sanity_by_image))
        sanity_images = sorted(set(self.sanity_by_image) & set(self.image_paths))
        if not pool:
            raise HTTPException(status_code=503, detail={"code": "pool_empty"})
        n_sanity = min(int(round(size * self.sanity_fraction)), len(sanity_images))
        n_regular = min(size - n_sanity, len(pool))
        gen = self.rng.derive("session", self.session_counter).generator()
        chosen = [pool[i] for i in gen.choice(len(pool), size=n_regular, replace=False)]
        chosen_sanity = [
            sanity_images[i]
            for i in gen.choice(len(sanity_images), size=n_sanity, replace=False)
        ]
        batch = chosen + chosen_sanity
        order = gen.permutation(len(batch))
        image_ids = [batch[i] for i in order]
        session = AnnotationSession(
            session_id=f"s{self.session_counter:06d}",
            worker_id=worker,
            image_ids=image_ids,
            sanity_ids=set(chosen_sanity),
            created_at=time.time(),
        )
        self.session_counter += 1
        self.sessions[session.session_id] = session
        self.open_by_worker[worker] = session.session_id
        return session


class AnnotationIn(BaseModel):
    session: str
    image_id: str
    defect: str
    level: float


def create_app(
    images_dir: str,
    sanity_path: Optional[str],
    store_path: str,
    seed: int = 0,
    sanity_fraction: float = 0.1,
    ui_dir: Optional[str] = None,
) -> FastAPI:
    """Wire the service against an image directory and a sanity pool file
    (JSONL of {"image_id", "defect", "known_level"})."""
    image_paths = {}
    for name in sorted(os.listdir(images_dir)):
        stem, dot, ext = name.rpartition(".")
        if dot and ext.lower() in ("png", "jpg", "jpeg"):
            image_paths[stem] = os.path.join(images_dir, name)

    sanity_pool: list[SanityItem] = []
    if sanity_path:
        with open(sanity_path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                obj = json.loads(line)
                sanity_pool.append(
                    SanityItem(
                        image_id=obj["image_id"],
                        defect=DefectKind(obj["defect"]),
                        known_level=float(obj["known_level"]),
                    )
                )

    state = ServiceState(
        image_paths, sanity_pool, AnnotationStore(store_path), seed, sanity_fraction
    )
    app = FastAPI(title="defectlab annotation service")
    app.state.service = state
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    @app.get("/api/session")
    def get_session(worker: str, size: int = 20):
        with state.lock:
            open_id = state.open_by_worker.get(worker)
            if open_id is not None:
                session = state.sessions[open_id]
            else:
                session = state.build_session(worker, size)
        return {
            "session_id": session.session_id,
            "worker_id": session.worker_id,
            "image_ids": list(session.image_ids),
        }

    @app.post("/api/annotations")
    def post_annotation(body: AnnotationIn):
        try:
            defect = DefectKind(body.defect)
        except ValueError:
            raise HTTPException(status_code=400, detail={"code": "invalid_defect"})
        levels = raw_levels(defect)
        if not any(abs(body.level - lv) <= _LEVEL_TOL for lv in levels):
            raise HTTPException(
                status_code=400,
                detail={"code": "invalid_level", "allowed": list(levels)},
            )
        with state.lock:
            session = state.sessions.get(body.session)
            if session is None:
                raise HTTPException(status_code=404, detail={"code": "unknown_session"})
            if body.image_id not in session.image_ids:
                raise HTTPException(status_code=404, detail={"code": "unknown_image"})
            key = (body.image_id, defect.value)
            if key in session.submitted:
                raise HTTPException(status_code=409, detail={"code": "already_annotated"})
            known = state.sanity_by_image.get(body.image_id, {}).get(defect)
            record = AnnotationRecord(
                image_id=body.image_id,
                worker_id=session.worker_id,
                defect=defect,
                level_value=body.level,
                is_sanity=known is not None,
                known_value=known,
                timestamp=time.time(),
            )
            state.store.append(record)
            session.submitted.add(key)
        return {"status": "ok"}

    @app.get("/api/images/{image_id}")
    def get_image(image_id: str):
        path = state.image_paths.get(image_id)
        if path is None:
            raise HTTPException(status_code=404, detail={"code": "unknown_image"})
        media = "image/png" if path.lower().endswith(".png") else "image/jpeg"
        return FileResponse(path, media_type=media)

    @app.get("/api/stats")
    def get_stats():
        records = state.store.snapshot()
        accuracies = compute_worker_accuracy(records)
        by_worker: dict[str, dict] = {}
        for acc in accuracies:
            entry = by_worker.setdefault(
                acc.worker_id, {"worker_id": acc.worker_id, "defects": {}, "completed": 0}
            )
            entry["defects"][acc.defect.value] = {
                "accuracy": acc.accuracy,
                "sanity_count": acc.sanity_count,
            }
        for rec in records:
            if rec.worker_id in by_worker:
                by_worker[rec.worker_id]["completed"] += 1
        for worker, entry in by_worker.items():
            sanity = [rec for rec in records if rec.worker_id == worker and rec.is_sanity]
            if sanity:
                hits = sum(
                    1 for rec in sanity if abs(rec.level_value - rec.known_value) <= _LEVEL_TOL
                )
                entry["overall_accuracy"] = hits / len(sanity)
                entry["sanity_total"] = len(sanity)
            else:
                entry["overall_accuracy"] = None
                entry["sanity_total"] = 0
        return JSONResponse({"workers": sorted(by_worker.values(), key=lambda w: w["worker_id"])})

    @app.get("/api/export")
    def export():
        lines = [annotation_to_json(rec) for rec in state.store.snapshot()]
        body = "\n".join(lines)
        if body:
            body += "\n"
        return PlainTextResponse(body, media_type="application/jsonl")

    if ui_dir:
        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")
    return app
