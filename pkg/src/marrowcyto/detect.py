"""Detection post-processing: box geometry, confidence filtering, DIoU-NMS.

Boxes are centered-normalized tile coordinates (cx, cy, w, h in [0, 1]).
Backends return raw candidate boxes; everything downstream of the model
(filtering, per-class suppression, ordering) lives here.
"""

from __future__ import annotations

import base64
import io
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import requests
from PIL import Image

from .classes import CellClass
from .errors import (
    BackendUnavailableError,
    InferenceFailureError,
    UnknownClassIdError,
)


@dataclass(frozen=True, order=True)
class BBox:
    """Axis-aligned box in normalized tile coordinates."""

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        if not (0.0 <= self.cx <= 1.0 and 0.0 <= self.cy <= 1.0):
            raise ValueError(f"box center ({self.cx}, {self.cy}) outside [0,1]")
        if not (0.0 < self.w <= 1.0 and 0.0 < self.h <= 1.0):
            raise ValueError(f"box size ({self.w}, {self.h}) outside (0,1]")
        if self.x1 <= 0.0 or self.x0 >= 1.0 or self.y1 <= 0.0 or self.y0 >= 1.0:
            raise ValueError("box does not intersect the tile")

    @property
    def x0(self) -> float:
        return self.cx - self.w / 2

    @property
    def y0(self) -> float:
        return self.cy - self.h / 2

    @property
    def x1(self) -> float:
        return self.cx + self.w / 2

    @property
    def y1(self) -> float:
        return self.cy + self.h / 2

    @property
    def area(self) -> float:
        return self.w * self.h

    def corners(self) -> tuple[float, float, float, float]:
        return (self.x0, self.y0, self.x1, self.y1)


@dataclass(frozen=True)
class Detection:
    """One classified box on one tile."""

    bbox: BBox
    cls: CellClass
    confidence: float
    tile_coord: tuple[int, int] | None = None
    slide_id: str | None = None

    def __post_init__(self):
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"confidence {self.confidence} outside [0,1]")


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union; 0 for disjoint boxes."""
    ix = min(a.x1, b.x1) - max(a.x0, b.x0)
    iy = min(a.y1, b.y1) - max(a.y0, b.y0)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    union = a.area + b.area - inter
    return inter / union


def diou(a: BBox, b: BBox) -> float:
    """IoU penalized by normalized center distance: IoU - rho^2 / c^2.

    rho is the distance between box centers and c the diagonal of the
    smallest box enclosing both; the penalty vanishes for concentric
    boxes, so suppression there reduces to plain IoU.
    """
    rho2 = (a.cx - b.cx) ** 2 + (a.cy - b.cy) ** 2
    cw = max(a.x1, b.x1) - min(a.x0, b.x0)
    ch = max(a.y1, b.y1) - min(a.y0, b.y0)
    c2 = cw * cw + ch * ch
    if c2 == 0.0:
        return iou(a, b)
    return iou(a, b) - rho2 / c2


def _rank_key(det: Detection) -> tuple:
    # Highest confidence first; ties broken by smaller area, then by
    # box coordinates, to keep suppression fully deterministic.
    return (-det.confidence, det.bbox.area, det.bbox)


def diou_nms(
    raw: Sequence[Detection],
    conf_thresh: float = 0.25,
    nms_iou: float = 0.45,
) -> list[Detection]:
    """Confidence-filter then per-class greedy DIoU suppression.

    Suppression never crosses classes: the downstream histogram counts
    per-class objects, and a cell legitimately overlapping debris must
    survive. Output is sorted by descending confidence.
    """
    kept: list[Detection] = []
    by_class: dict[CellClass, list[Detection]] = {}
    for det in raw:
        if det.confidence >= conf_thresh:
            by_class.setdefault(det.cls, []).append(det)

    for dets in by_class.values():
        dets.sort(key=_rank_key)
        survivors: list[Detection] = []
        for det in dets:
            if all(diou(det.bbox, s.bbox) <= nms_iou for s in survivors):
                survivors.append(det)
        kept.extend(survivors)

    kept.sort(key=_rank_key)
    return kept


class DetectorBackend(ABC):
    """Pluggable object detector producing raw (pre-NMS) boxes."""

    name: str = "detector"
    version: str = "0"

    @abstractmethod
    def detect(self, tile) -> list[dict]:
        """Return raw boxes as dicts {cx, cy, w, h, class_id, confidence}."""


def detect_raw(backend: DetectorBackend, tile) -> list[Detection]:
    """Run a backend on a tile and normalize its output to Detections.

    Malformed backend output (missing keys, unknown class ids, invalid
    geometry) surfaces as InferenceFailure so callers can apply their
    per-tile failure policy uniformly.
    """
    raw = backend.detect(tile)
    out: list[Detection] = []
    for i, item in enumerate(raw):
        try:
            out.append(
                Detection(
                    bbox=BBox(
                        float(item["cx"]), float(item["cy"]), float(item["w"]), float(item["h"])
                    ),
                    cls=CellClass.from_id(int(item["class_id"])),
                    confidence=float(item["confidence"]),
                    tile_coord=tile.grid_coord,
                    slide_id=tile.slide_id,
                )
            )
        except (KeyError, TypeError, ValueError, UnknownClassIdError) as exc:
            raise InferenceFailureError(
                f"malformed detection {i} on tile {tile.grid_coord}: {exc}"
            ) from exc
    return out


def detections_to_annotations(dets: Iterable[Detection]) -> list:
    """Convert post-NMS detections to annotation records, one per tile.

    Boxes and classes carry over losslessly; confidence is preserved as
    box metadata and the source is marked ``model``.
    """
    from .dataset import AnnotationRecord, BoxAnnotation

    grouped: dict[tuple, list[Detection]] = {}
    for det in dets:
        grouped.setdefault((det.slide_id, det.tile_coord), []).append(det)

    records = []
    for (slide_id, coord), tile_dets in grouped.items():
        boxes = [
            BoxAnnotation(bbox=d.bbox, cls=d.cls, source="model", confidence=d.confidence)
            for d in tile_dets
        ]
        r, c = coord
        tile_id = f"{slide_id}_r{r:02d}_c{c:02d}"
        records.append(
            AnnotationRecord(tile_id=tile_id, boxes=boxes, slide_id=slide_id, coord=coord)
        )
    return records


def encode_tile_png(pixels: np.ndarray) -> str:
    """Lossless PNG bytes of a tile raster, base64 encoded for the wire."""
    buf = io.BytesIO()
    Image.fromarray(pixels).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


class RemoteDetector(DetectorBackend):
    """Client for an external detector speaking the JSON wire contract.

    Request: ``{"tile_png_b64": ..., "tile_coord": [r, c]}``; response:
    ``{"detections": [{cx, cy, w, h, class_id, confidence}, ...]}``.
    """

    def __init__(self, endpoint: str, timeout: float = 30.0):
        self.endpoint = endpoint
        self.timeout = timeout
        self.name = f"remote:{endpoint}"

    def ping(self) -> None:
        try:
            requests.get(self.endpoint, timeout=self.timeout)
        except requests.RequestException as exc:
            raise BackendUnavailableError(f"detector at {self.endpoint}: {exc}") from exc

    def detect(self, tile) -> list[dict]:
        payload = {
            "tile_png_b64": encode_tile_png(tile.pixels),
            "tile_coord": list(tile.grid_coord),
        }
        try:
            resp = requests.post(self.endpoint, json=payload, timeout=self.timeout)
        except requests.RequestException as exc:
            raise BackendUnavailableError(f"detector at {self.endpoint}: {exc}") from exc
        if resp.status_code != 200:
            raise InferenceFailureError(
                f"detector returned {resp.status_code}: {resp.text[:200]}"
            )
        try:
            return list(resp.json()["detections"])
        except (ValueError, KeyError) as exc:
            raise InferenceFailureError(f"malformed detector response: {exc}") from exc
