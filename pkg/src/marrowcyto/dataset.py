"""Annotated-dataset management.

Annotation records round-trip through two on-disk formats (normalized
"class cx cy w h" text lines and corner-pixel XML), live in a versioned
manifest with a provenance log, and feed stratified cross-validation
splits, oversampling schedules and the review/merge cycle that grows the
dataset over time.
"""

from __future__ import annotations

import json
import random
import warnings
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping, Sequence

from .classes import ALL_CLASSES, CellClass
from .detect import BBox
from .errors import (
    AnnotationParseError,
    ConflictingDuplicateError,
    EmptyPoolError,
    InfeasibleTargetError,
    InsufficientDataError,
    InsufficientDataWarning,
    UnknownClassIdError,
    UnknownClassNameError,
    UnknownTileRefError,
)

BOX_SOURCES = ("human", "model", "model-confirmed")

TILE_PX_DEFAULT = 512


@dataclass(frozen=True)
class BoxAnnotation:
    """One labeled box; source records who vouched for it."""

    bbox: BBox
    cls: CellClass
    source: str = "human"
    confidence: float | None = None

    def __post_init__(self):
        if self.source not in BOX_SOURCES:
            raise ValueError(f"source must be one of {BOX_SOURCES}, got {self.source!r}")
        if self.confidence is not None and not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence}")


@dataclass
class AnnotationRecord:
    """All boxes of one tile. tile_id is the stable reference key."""

    tile_id: str
    boxes: list[BoxAnnotation] = field(default_factory=list)
    slide_id: str | None = None
    coord: tuple[int, int] | None = None

    def class_counts(self) -> dict[CellClass, int]:
        counts = {c: 0 for c in ALL_CLASSES}
        for box in self.boxes:
            counts[box.cls] += 1
        return counts


# ---------------------------------------------------------------------------
# Text format: one line per box, "class_id cx cy w h [confidence]", normalized

def parse_yolo(text: str, tile_id: str, source: str = "human") -> AnnotationRecord:
    boxes: list[BoxAnnotation] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) not in (5, 6):
            raise AnnotationParseError(
                f"expected 5 or 6 fields, got {len(fields)}", location=f"line {lineno}"
            )
        try:
            class_id = int(fields[0])
        except ValueError as exc:
            raise AnnotationParseError(
                f"bad class id {fields[0]!r}", location=f"line {lineno}"
            ) from exc
        try:
            cls = CellClass.from_id(class_id)
        except UnknownClassIdError as exc:
            raise AnnotationParseError(str(exc), location=f"line {lineno}") from exc
        try:
            cx, cy, w, h = (float(v) for v in fields[1:5])
            conf = float(fields[5]) if len(fields) == 6 else None
        except ValueError as exc:
            raise AnnotationParseError(
                f"bad numeric field: {exc}", location=f"line {lineno}"
            ) from exc
        try:
            bbox = BBox(cx=cx, cy=cy, w=w, h=h)
            boxes.append(BoxAnnotation(bbox=bbox, cls=cls, source=source, confidence=conf))
        except ValueError as exc:
            raise AnnotationParseError(str(exc), location=f"line {lineno}") from exc
    return AnnotationRecord(tile_id=tile_id, boxes=boxes)


def write_yolo(record: AnnotationRecord, include_confidence: bool = False) -> str:
    """repr-formatted floats so a write→parse cycle is bit-exact."""
    lines = []
    for box in record.boxes:
        parts = [str(int(box.cls)), repr(box.bbox.cx), repr(box.bbox.cy), repr(box.bbox.w), repr(box.bbox.h)]
        if include_confidence and box.confidence is not None:
            parts.append(repr(box.confidence))
        lines.append(" ".join(parts))
    return "\n".join(lines) + ("\n" if lines else "")


# ---------------------------------------------------------------------------
# XML format: absolute pixel corners

def _xml_child(parent: ET.Element, tag: str, context: str) -> ET.Element:
    child = parent.find(tag)
    if child is None or child.text is None:
        raise AnnotationParseError(f"missing <{tag}>", location=context)
    return child


def parse_voc(text: str | bytes, source: str = "human") -> AnnotationRecord:
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise AnnotationParseError(f"malformed XML: {exc}", location="document") from exc
    if root.tag != "annotation":
        raise AnnotationParseError(f"unexpected root <{root.tag}>", location="document")
    filename = _xml_child(root, "filename", "annotation").text.strip()
    tile_id = Path(filename).stem
    size = _xml_child(root, "size", "annotation")
    width = float(_xml_child(size, "width", "size").text)
    height = float(_xml_child(size, "height", "size").text)
    if width <= 0 or height <= 0:
        raise AnnotationParseError(f"non-positive size {width}x{height}", location="size")

    folder = root.find("folder")
    slide_id = folder.text.strip() if folder is not None and folder.text else None
    coord_el = root.find("coord")
    coord = None
    if coord_el is not None and coord_el.text:
        try:
            r, c = (int(v) for v in coord_el.text.split(","))
            coord = (r, c)
        except ValueError as exc:
            raise AnnotationParseError(f"bad coord {coord_el.text!r}", location="coord") from exc

    boxes: list[BoxAnnotation] = []
    for i, obj in enumerate(root.findall("object")):
        context = f"object[{i}]"
        name = _xml_child(obj, "name", context).text.strip()
        try:
            cls = CellClass.from_label(name)
        except UnknownClassNameError as exc:
            raise AnnotationParseError(str(exc), location=context) from exc
        bnd = _xml_child(obj, "bndbox", context)
        xmin = float(_xml_child(bnd, "xmin", context).text)
        ymin = float(_xml_child(bnd, "ymin", context).text)
        xmax = float(_xml_child(bnd, "xmax", context).text)
        ymax = float(_xml_child(bnd, "ymax", context).text)
        conf_el = obj.find("confidence")
        conf = float(conf_el.text) if conf_el is not None and conf_el.text else None
        src_el = obj.find("source")
        box_source = src_el.text.strip() if src_el is not None and src_el.text else source
        try:
            bbox = BBox(
                cx=(xmin + xmax) / (2 * width),
                cy=(ymin + ymax) / (2 * height),
                w=(xmax - xmin) / width,
                h=(ymax - ymin) / height,
            )
            boxes.append(BoxAnnotation(bbox=bbox, cls=cls, source=box_source, confidence=conf))
        except ValueError as exc:
            raise AnnotationParseError(str(exc), location=context) from exc
    return AnnotationRecord(tile_id=tile_id, boxes=boxes, slide_id=slide_id, coord=coord)


def write_voc(
    record: AnnotationRecord,
    tile_px: int = TILE_PX_DEFAULT,
    include_confidence: bool = True,
) -> str:
    root = ET.Element("annotation")
    if record.slide_id:
        ET.SubElement(root, "folder").text = record.slide_id
    ET.SubElement(root, "filename").text = f"{record.tile_id}.png"
    if record.coord is not None:
        ET.SubElement(root, "coord").text = f"{record.coord[0]},{record.coord[1]}"
    size = ET.SubElement(root, "size")
    ET.SubElement(size, "width").text = str(tile_px)
    ET.SubElement(size, "height").text = str(tile_px)
    ET.SubElement(size, "depth").text = "3"
    for box in record.boxes:
        obj = ET.SubElement(root, "object")
        ET.SubElement(obj, "name").text = box.cls.label
        ET.SubElement(obj, "source").text = box.source
        if include_confidence and box.confidence is not None:
            ET.SubElement(obj, "confidence").text = repr(box.confidence)
        bnd = ET.SubElement(obj, "bndbox")
        ET.SubElement(bnd, "xmin").text = repr((box.bbox.cx - box.bbox.w / 2) * tile_px)
        ET.SubElement(bnd, "ymin").text = repr((box.bbox.cy - box.bbox.h / 2) * tile_px)
        ET.SubElement(bnd, "xmax").text = repr((box.bbox.cx + box.bbox.w / 2) * tile_px)
        ET.SubElement(bnd, "ymax").text = repr((box.bbox.cy + box.bbox.h / 2) * tile_px)
    ET.indent(root)
    return ET.tostring(root, encoding="unicode") + "\n"


ANNOTATION_FORMATS = ("yolo-txt", "voc-xml")


def parse_annotations(text: str | bytes, fmt: str, tile_id: str | None = None, source: str = "human") -> AnnotationRecord:
    if fmt == "yolo-txt":
        if tile_id is None:
            raise ValueError("yolo-txt carries no tile id; pass tile_id explicitly")
        if isinstance(text, bytes):
            text = text.decode("utf-8")
        return parse_yolo(text, tile_id=tile_id, source=source)
    if fmt == "voc-xml":
        return parse_voc(text, source=source)
    raise ValueError(f"unknown format {fmt!r}; expected one of {ANNOTATION_FORMATS}")


def write_annotations(record: AnnotationRecord, fmt: str, include_confidence: bool = False) -> str:
    if fmt == "yolo-txt":
        return write_yolo(record, include_confidence=include_confidence)
    if fmt == "voc-xml":
        return write_voc(record, include_confidence=include_confidence)
    raise ValueError(f"unknown format {fmt!r}; expected one of {ANNOTATION_FORMATS}")


def load_annotation_dir(path: str | Path, fmt: str, source: str = "human") -> list[AnnotationRecord]:
    """Read every annotation file in a directory, sorted by name."""
    path = Path(path)
    suffix = ".txt" if fmt == "yolo-txt" else ".xml"
    records = []
    for file in sorted(path.glob(f"*{suffix}")):
        records.append(parse_annotations(file.read_text(), fmt, tile_id=file.stem, source=source))
    return records


# ---------------------------------------------------------------------------
# Manifest

@dataclass
class DatasetManifest:
    """Versioned record set; every merge appends to the provenance log."""

    records: dict[str, AnnotationRecord] = field(default_factory=dict)
    version: int = 0
    provenance: list[dict] = field(default_factory=list)

    def class_counts(self) -> dict[CellClass, int]:
        counts = {c: 0 for c in ALL_CLASSES}
        for record in self.records.values():
            for box in record.boxes:
                counts[box.cls] += 1
        return counts

    def to_json_dict(self) -> dict:
        return {
            "version": self.version,
            "records": {
                tid: {
                    "slide_id": rec.slide_id,
                    "coord": list(rec.coord) if rec.coord else None,
                    "boxes": [
                        {
                            "cx": b.bbox.cx,
                            "cy": b.bbox.cy,
                            "w": b.bbox.w,
                            "h": b.bbox.h,
                            "cls": b.cls.label,
                            "source": b.source,
                            "confidence": b.confidence,
                        }
                        for b in rec.boxes
                    ],
                }
                for tid, rec in sorted(self.records.items())
            },
            "provenance": self.provenance,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json_dict(cls, data: dict) -> "DatasetManifest":
        records = {}
        for tid, rec in data.get("records", {}).items():
            boxes = [
                BoxAnnotation(
                    bbox=BBox(cx=b["cx"], cy=b["cy"], w=b["w"], h=b["h"]),
                    cls=CellClass.from_label(b["cls"]),
                    source=b.get("source", "human"),
                    confidence=b.get("confidence"),
                )
                for b in rec.get("boxes", [])
            ]
            coord = tuple(rec["coord"]) if rec.get("coord") else None
            records[tid] = AnnotationRecord(
                tile_id=tid, boxes=boxes, slide_id=rec.get("slide_id"), coord=coord
            )
        return cls(
            records=records,
            version=int(data.get("version", 0)),
            provenance=list(data.get("provenance", [])),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path: str | Path) -> "DatasetManifest":
        return cls.from_json_dict(json.loads(Path(path).read_text()))


def merge_confirmed(
    manifest: DatasetManifest,
    corrections: Sequence[AnnotationRecord],
    known_tiles: set[str] | None = None,
    merged_at: str | None = None,
) -> DatasetManifest:
    """Fold reviewed records into the manifest, bumping the version.

    Every box must carry a reviewed source (human or model-confirmed).
    A batch whose records all match what the manifest already holds is a
    no-op and returns the manifest unchanged, so re-merging a batch is
    safe. Duplicated tile ids within one batch must agree exactly.
    """
    deduped: dict[str, AnnotationRecord] = {}
    for rec in corrections:
        if not rec.tile_id:
            raise UnknownTileRefError("correction without a tile id")
        if known_tiles is not None and rec.tile_id not in known_tiles:
            raise UnknownTileRefError(f"tile {rec.tile_id!r} is not in the review set")
        for box in rec.boxes:
            if box.source not in ("human", "model-confirmed"):
                raise ValueError(
                    f"tile {rec.tile_id!r}: box source {box.source!r} has not been reviewed"
                )
        if rec.tile_id in deduped:
            if deduped[rec.tile_id] != rec:
                raise ConflictingDuplicateError(
                    f"tile {rec.tile_id!r} appears twice with different boxes"
                )
            continue
        deduped[rec.tile_id] = rec

    changed = {
        tid: rec for tid, rec in deduped.items() if manifest.records.get(tid) != rec
    }
    if not changed:
        return manifest

    before = manifest.class_counts()
    records = dict(manifest.records)
    records.update(changed)
    merged = DatasetManifest(
        records=records,
        version=manifest.version + 1,
        provenance=list(manifest.provenance),
    )
    after = merged.class_counts()
    if merged_at is None:
        merged_at = datetime.now(timezone.utc).isoformat()
    merged.provenance.append(
        {
            "version": merged.version,
            "merged_at": merged_at,
            "tiles": sorted(changed),
            "class_deltas": {
                c.label: after[c] - before[c] for c in ALL_CLASSES if after[c] != before[c]
            },
        }
    )
    return merged


# ---------------------------------------------------------------------------
# Stratified cross-validation split

@dataclass
class SplitPlan:
    """Fold-group and held-out-role assignment for every record.

    Standard k-fold: group g is the 20% evaluation share of fold g and
    part of the training share of every other fold. heldout_role says
    whether the record acts as validation or test when its group is the
    held-out one.
    """

    folds: int
    seed: int
    strata: dict[str, str]
    group: dict[str, int]
    heldout_role: dict[str, str]

    def train_ids(self, fold: int) -> list[str]:
        return sorted(t for t, g in self.group.items() if g != fold)

    def validation_ids(self, fold: int) -> list[str]:
        return sorted(
            t for t, g in self.group.items() if g == fold and self.heldout_role[t] == "validation"
        )

    def test_ids(self, fold: int) -> list[str]:
        return sorted(
            t for t, g in self.group.items() if g == fold and self.heldout_role[t] == "test"
        )

    def to_json_dict(self) -> dict:
        return {
            "folds": self.folds,
            "seed": self.seed,
            "strata": dict(sorted(self.strata.items())),
            "group": dict(sorted(self.group.items())),
            "heldout_role": dict(sorted(self.heldout_role.items())),
        }


def _stratum_key(record: AnnotationRecord, global_counts: dict[CellClass, int]) -> str:
    """Records stratify by their rarest class so scarce classes spread
    evenly; boxless tiles form their own stratum."""
    if not record.boxes:
        return "(no boxes)"
    rarest = min({b.cls for b in record.boxes}, key=lambda c: (global_counts[c], int(c)))
    return rarest.label


def stratified_split(
    manifest: DatasetManifest,
    folds: int = 5,
    seed: int = 0,
    validation_share: float = 0.7,
    strict: bool = False,
) -> SplitPlan:
    """Deal each stratum round-robin over fold groups, then split each
    group 70/30 into validation and test roles.

    A stratum needs at least one record per fold to be splittable at
    all, and two per fold before every fold sees both evaluation roles;
    between those bounds a warning is issued (or InsufficientData raised
    when strict).
    """
    if folds < 2:
        raise ValueError("folds must be >= 2")
    if not manifest.records:
        raise EmptyPoolError("manifest has no records to split")
    counts = manifest.class_counts()
    strata: dict[str, list[str]] = {}
    key_of: dict[str, str] = {}
    for tid, rec in sorted(manifest.records.items()):
        key = _stratum_key(rec, counts)
        key_of[tid] = key
        strata.setdefault(key, []).append(tid)

    rng = random.Random(seed)
    group: dict[str, int] = {}
    role: dict[str, str] = {}
    for key in sorted(strata):
        ids = strata[key]
        if len(ids) < folds:
            msg = f"stratum {key!r} has {len(ids)} records for {folds} folds"
            if strict:
                raise InsufficientDataError(msg)
            warnings.warn(msg, InsufficientDataWarning)
        elif len(ids) < 2 * folds:
            msg = f"stratum {key!r} has {len(ids)} records; folds will miss one evaluation role"
            if strict:
                raise InsufficientDataError(msg)
            warnings.warn(msg, InsufficientDataWarning)
        rng.shuffle(ids)
        for i, tid in enumerate(ids):
            group[tid] = i % folds
        # Within each fold group of this stratum, the first ~70% of the
        # dealt records act as validation, the rest as test.
        for g in range(folds):
            members = [tid for tid in ids if group[tid] == g]
            n_val = round(validation_share * len(members))
            for j, tid in enumerate(members):
                role[tid] = "validation" if j < n_val else "test"
    return SplitPlan(folds=folds, seed=seed, strata=key_of, group=group, heldout_role=role)


# ---------------------------------------------------------------------------
# Oversampling

@dataclass(frozen=True)
class ClassOversample:
    key: str
    current: int
    target: int
    base_factor: int
    extras: int

    @property
    def realized(self) -> int:
        return self.current * self.base_factor + self.extras


@dataclass
class OversamplePlan:
    """Deterministic replication schedule per class key.

    Every record is replicated base_factor times; `extras` seeded-chosen
    records get one more copy, so the realized count equals the target
    exactly.
    """

    items: dict[str, ClassOversample]
    seed: int

    def factor(self, key: str) -> int:
        return self.items[key].base_factor

    def per_record_counts(self, key: str) -> list[int]:
        item = self.items[key]
        counts = [item.base_factor] * item.current
        # str seeding hashes with sha512, stable across interpreter runs.
        rng = random.Random(f"{self.seed}:{key}")
        for idx in rng.sample(range(item.current), item.extras):
            counts[idx] += 1
        return counts


def _plan_key(key) -> str:
    return key.label if isinstance(key, CellClass) else str(key)


def oversample_plan(
    class_counts: Mapping,
    target_counts: Mapping,
    seed: int = 0,
) -> OversamplePlan:
    current = {_plan_key(k): int(v) for k, v in class_counts.items()}
    targets = {_plan_key(k): int(v) for k, v in target_counts.items()}
    items: dict[str, ClassOversample] = {}
    for key, target in sorted(targets.items()):
        if key not in current:
            raise KeyError(f"no current count for {key!r}")
        cur = current[key]
        if cur <= 0:
            raise InfeasibleTargetError(f"{key!r} has no records to replicate")
        if target < cur:
            raise InfeasibleTargetError(f"{key!r}: target {target} below current {cur}")
        if target == cur:
            continue
        items[key] = ClassOversample(
            key=key,
            current=cur,
            target=target,
            base_factor=target // cur,
            extras=target % cur,
        )
    return OversamplePlan(items=items, seed=seed)


# ---------------------------------------------------------------------------
# Active-learning query and review package

def query_rare_tiles(
    manifest: DatasetManifest,
    candidates: Sequence[AnnotationRecord],
    batch: int = 250,
    seed: int = 0,
) -> list[AnnotationRecord]:
    """Pick the review batch, rarest-class tiles first.

    A candidate's priority is the manifest count of its rarest predicted
    class; ties (and boxless tiles, which sort last) fall back to a
    seeded shuffle.
    """
    if not candidates:
        raise EmptyPoolError("no candidate tiles")
    if batch < 1:
        raise ValueError("batch must be >= 1")
    counts = manifest.class_counts()

    def rarity(rec: AnnotationRecord) -> int:
        if not rec.boxes:
            return max(counts.values()) + 1
        return min(counts[b.cls] for b in rec.boxes)

    pool = list(candidates)
    random.Random(seed).shuffle(pool)
    pool.sort(key=rarity)
    return pool[: min(batch, len(pool))]


def export_review_package(
    records: Sequence[AnnotationRecord],
    images: Mapping[str, "np.ndarray"],
    out_dir: str | Path,
) -> Path:
    """Write a review package: per tile a PNG and a prediction file with
    the confidence column, plus an index the review service loads."""
    import numpy as np
    from PIL import Image

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    index = []
    for rec in records:
        if rec.tile_id not in images:
            raise UnknownTileRefError(f"no image provided for tile {rec.tile_id!r}")
        pixels = np.asarray(images[rec.tile_id], dtype=np.uint8)
        Image.fromarray(pixels).save(out / f"{rec.tile_id}.png")
        (out / f"{rec.tile_id}.txt").write_text(write_yolo(rec, include_confidence=True))
        index.append(
            {
                "tile_id": rec.tile_id,
                "image": f"{rec.tile_id}.png",
                "predictions": f"{rec.tile_id}.txt",
                "slide_id": rec.slide_id,
                "coord": list(rec.coord) if rec.coord else None,
            }
        )
    (out / "package.json").write_text(
        json.dumps({"tiles": index}, indent=2, sort_keys=True)
    )
    return out


def load_review_package(path: str | Path) -> list[AnnotationRecord]:
    """Read back the records of a review package (not the images)."""
    path = Path(path)
    index = json.loads((path / "package.json").read_text())
    records = []
    for entry in index["tiles"]:
        text = (path / entry["predictions"]).read_text()
        rec = parse_yolo(text, tile_id=entry["tile_id"], source="model")
        rec.slide_id = entry.get("slide_id")
        rec.coord = tuple(entry["coord"]) if entry.get("coord") else None
        records.append(rec)
    return records
