"""HTTP service for the annotation-review loop.

Serves a review package (tile images plus model predictions), accepts
per-tile corrections guarded by a revision counter, and merges confirmed
corrections into a dataset manifest. Corrections are persisted to a JSON
store on every write, so a restarted service resumes where the reviewer
left off. Concurrent edits of one tile are an explicit 409, never a
silent overwrite.
"""

from __future__ import annotations

import json
import os
import threading
from pathlib import Path

from fastapi import FastAPI, HTTPException, Response
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field

from .classes import CellClass
from .dataset import (
    AnnotationRecord,
    BoxAnnotation,
    DatasetManifest,
    load_review_package,
    merge_confirmed,
)
from .detect import BBox
from .errors import UnknownClassNameError

CORRECTION_SOURCES = ("human", "model-confirmed")
TILE_STATUSES = ("untouched", "edited", "confirmed")


class BoxPayload(BaseModel):
    cx: float
    cy: float
    w: float
    h: float
    cls: str
    source: str
    confidence: float | None = None


class CorrectionsPayload(BaseModel):
    revision: int = Field(description="revision the edit is based on")
    status: str = "confirmed"
    boxes: list[BoxPayload]


class MergePayload(BaseModel):
    merged_at: str | None = None


def _box_to_json(box: BoxAnnotation) -> dict:
    return {
        "cx": box.bbox.cx,
        "cy": box.bbox.cy,
        "w": box.bbox.w,
        "h": box.bbox.h,
        "cls": box.cls.label,
        "source": box.source,
        "confidence": box.confidence,
    }


def _box_from_payload(payload: BoxPayload, tile_id: str) -> dict:
    if payload.source not in CORRECTION_SOURCES:
        raise HTTPException(
            status_code=422,
            detail=f"tile {tile_id}: box source must be one of {CORRECTION_SOURCES}",
        )
    try:
        CellClass.from_label(payload.cls)
        BBox(cx=payload.cx, cy=payload.cy, w=payload.w, h=payload.h)
    except (UnknownClassNameError, ValueError) as exc:
        raise HTTPException(status_code=422, detail=f"tile {tile_id}: {exc}") from exc
    if payload.confidence is not None and not 0.0 <= payload.confidence <= 1.0:
        raise HTTPException(status_code=422, detail=f"tile {tile_id}: bad confidence")
    return payload.model_dump()


def corrections_to_records(store: dict, confirmed_only: bool = True) -> list[AnnotationRecord]:
    """Turn a corrections store into annotation records for merging."""
    records = []
    for tile_id, entry in sorted(store.get("tiles", {}).items()):
        if confirmed_only and entry.get("status") != "confirmed":
            continue
        boxes = [
            BoxAnnotation(
                bbox=BBox(cx=b["cx"], cy=b["cy"], w=b["w"], h=b["h"]),
                cls=CellClass.from_label(b["cls"]),
                source=b["source"],
                confidence=b.get("confidence"),
            )
            for b in entry.get("boxes", [])
        ]
        records.append(AnnotationRecord(tile_id=tile_id, boxes=boxes))
    return records


class _ReviewState:
    """Package records, the durable corrections store and its lock."""

    def __init__(self, package_dir: Path, store_path: Path, manifest_path: Path | None):
        self.package_dir = package_dir
        self.store_path = store_path
        self.manifest_path = manifest_path
        self.records = {r.tile_id: r for r in load_review_package(package_dir)}
        self.order = list(self.records)
        self.lock = threading.Lock()
        if store_path.exists():
            self.store = json.loads(store_path.read_text())
        else:
            self.store = {"package": str(package_dir), "archived": False, "tiles": {}}
            self._persist()

    def _persist(self) -> None:
        tmp = self.store_path.with_suffix(self.store_path.suffix + ".tmp")
        tmp.write_text(json.dumps(self.store, indent=2, sort_keys=True))
        os.replace(tmp, self.store_path)

    def entry(self, tile_id: str) -> dict:
        return self.store["tiles"].get(tile_id, {"revision": 0, "status": "untouched"})

    def queue(self) -> list[dict]:
        out = []
        for pos, tile_id in enumerate(self.order):
            entry = self.entry(tile_id)
            out.append(
                {
                    "tile_id": tile_id,
                    "position": pos,
                    "status": entry["status"],
                    "revision": entry["revision"],
                }
            )
        return out


def create_app(
    package_dir: str | Path,
    store_path: str | Path,
    manifest_path: str | Path | None = None,
) -> FastAPI:
    state = _ReviewState(
        Path(package_dir),
        Path(store_path),
        Path(manifest_path) if manifest_path else None,
    )
    app = FastAPI(title="marrowcyto review service")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    app.state.review = state

    @app.get("/queue")
    def get_queue() -> dict:
        items = state.queue()
        return {
            "tiles": items,
            "total": len(items),
            "confirmed": sum(1 for i in items if i["status"] == "confirmed"),
            "archived": state.store["archived"],
        }

    def _require(tile_id: str) -> AnnotationRecord:
        if tile_id not in state.records:
            raise HTTPException(status_code=404, detail=f"unknown tile {tile_id!r}")
        return state.records[tile_id]

    @app.get("/tile/{tile_id}")
    def get_tile(tile_id: str) -> dict:
        record = _require(tile_id)
        entry = state.entry(tile_id)
        return {
            "tile_id": tile_id,
            "position": state.order.index(tile_id),
            "image": f"/tile/{tile_id}/image",
            "predictions": [_box_to_json(b) for b in record.boxes],
            "corrections": entry.get("boxes"),
            "revision": entry["revision"],
            "status": entry["status"],
        }

    @app.get("/tile/{tile_id}/image")
    def get_tile_image(tile_id: str) -> Response:
        _require(tile_id)
        path = state.package_dir / f"{tile_id}.png"
        if not path.is_file():
            raise HTTPException(status_code=404, detail=f"no image for tile {tile_id!r}")
        return Response(content=path.read_bytes(), media_type="image/png")

    @app.post("/tile/{tile_id}/corrections")
    def post_corrections(tile_id: str, payload: CorrectionsPayload) -> dict:
        _require(tile_id)
        if payload.status not in ("edited", "confirmed"):
            raise HTTPException(status_code=422, detail="status must be edited or confirmed")
        boxes = [_box_from_payload(b, tile_id) for b in payload.boxes]
        with state.lock:
            if state.store["archived"]:
                raise HTTPException(status_code=409, detail="queue is archived after merge")
            entry = state.entry(tile_id)
            if payload.revision != entry["revision"]:
                raise HTTPException(
                    status_code=409,
                    detail=(
                        f"tile {tile_id} is at revision {entry['revision']}, "
                        f"edit was based on {payload.revision}"
                    ),
                )
            new_entry = {
                "revision": entry["revision"] + 1,
                "status": payload.status,
                "boxes": boxes,
            }
            state.store["tiles"][tile_id] = new_entry
            state._persist()
        return {"tile_id": tile_id, "revision": new_entry["revision"], "status": payload.status}

    @app.post("/merge")
    def post_merge(payload: MergePayload | None = None) -> dict:
        if state.manifest_path is None:
            raise HTTPException(status_code=409, detail="service started without a manifest")
        with state.lock:
            if state.store["archived"]:
                raise HTTPException(status_code=409, detail="queue already merged")
            records = corrections_to_records(state.store, confirmed_only=True)
            manifest = (
                DatasetManifest.load(state.manifest_path)
                if state.manifest_path.exists()
                else DatasetManifest()
            )
            merged = merge_confirmed(
                manifest,
                records,
                known_tiles=set(state.records),
                merged_at=payload.merged_at if payload else None,
            )
            merged.save(state.manifest_path)
            state.store["archived"] = True
            state.store["merged_version"] = merged.version
            state._persist()
        return {
            "version": merged.version,
            "merged_tiles": len(records),
            "class_counts": {c.label: n for c, n in merged.class_counts().items() if n},
        }

    return app
