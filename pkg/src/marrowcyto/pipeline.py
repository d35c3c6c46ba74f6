"""End-to-end slide processing.

Streams grid tiles in a configured order, gates them, detects on the
accepted ones and folds the per-tile histograms into the integrated
histogram until it converges or the tile cap is reached. Reports are a
pure function of (config, slide, seeds): identical runs serialize to
identical bytes. Timings live in the run record, never in the report.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from . import hct as hct_mod
from .detect import DetectorBackend, RemoteDetector, detect_raw, diou_nms
from .errors import (
    BackendUnavailableError,
    InferenceFailureError,
    PartialRunError,
    ReadFailureError,
)
from .hct import IHCT, NdcReport, accumulate, hct_from_detections, ndc_report
from .roi import RemoteTileClassifier, TileClassifierBackend, gate, score_tile
from .slides import iterate_tiles, make_grid, open_slide

ENV_ROI_URL = "MARROWCYTO_ROI_URL"
ENV_DETECTOR_URL = "MARROWCYTO_DETECTOR_URL"


@dataclass
class PipelineConfig:
    """Single-document run configuration, embedded in every report."""

    rows: int = 15
    cols: int = 20
    tile_px: int = 512
    roi_threshold: float = 0.5
    roi_backend: str = "synthetic"
    conf_thresh: float = 0.25
    nms_iou: float = 0.45
    detector_backend: str = "synthetic-planted"
    detector_seed: int = 0
    convergence_threshold: float = hct_mod.DEFAULT_CONVERGENCE_THRESHOLD
    convergence_patience: int = hct_mod.DEFAULT_CONVERGENCE_PATIENCE
    max_tiles: int = 600
    tile_order: str = "row-major"
    shuffle_seed: int = 0
    failure_tolerance: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.roi_threshold <= 1.0:
            raise ValueError("roi_threshold must be in [0, 1]")
        if not 0.0 <= self.conf_thresh <= 1.0:
            raise ValueError("conf_thresh must be in [0, 1]")
        if not 0.0 <= self.nms_iou <= 1.0:
            raise ValueError("nms_iou must be in [0, 1]")
        if self.convergence_threshold <= 0:
            raise ValueError("convergence_threshold must be positive")
        if self.convergence_patience < 1:
            raise ValueError("convergence_patience must be >= 1")
        if self.max_tiles < 1:
            raise ValueError("max_tiles must be >= 1")
        if not 0.0 <= self.failure_tolerance <= 1.0:
            raise ValueError("failure_tolerance must be in [0, 1]")
        if self.tile_order not in ("row-major", "seeded-shuffle"):
            raise ValueError(f"unknown tile_order {self.tile_order!r}")

    def to_json_dict(self) -> dict:
        return {
            "grid": {"rows": self.rows, "cols": self.cols, "tile_px": self.tile_px},
            "roi": {"threshold": self.roi_threshold, "backend": self.roi_backend},
            "detector": {
                "conf_thresh": self.conf_thresh,
                "nms_iou": self.nms_iou,
                "backend": self.detector_backend,
                "seed": self.detector_seed,
            },
            "convergence": {
                "threshold": self.convergence_threshold,
                "patience": self.convergence_patience,
                "max_tiles": self.max_tiles,
            },
            "stream": {"order": self.tile_order, "seed": self.shuffle_seed},
            "failure_tolerance": self.failure_tolerance,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "PipelineConfig":
        grid = data.get("grid", {})
        roi = data.get("roi", {})
        det = data.get("detector", {})
        conv = data.get("convergence", {})
        stream = data.get("stream", {})
        defaults = cls()
        return cls(
            rows=int(grid.get("rows", defaults.rows)),
            cols=int(grid.get("cols", defaults.cols)),
            tile_px=int(grid.get("tile_px", defaults.tile_px)),
            roi_threshold=float(roi.get("threshold", defaults.roi_threshold)),
            roi_backend=str(roi.get("backend", defaults.roi_backend)),
            conf_thresh=float(det.get("conf_thresh", defaults.conf_thresh)),
            nms_iou=float(det.get("nms_iou", defaults.nms_iou)),
            detector_backend=str(det.get("backend", defaults.detector_backend)),
            detector_seed=int(det.get("seed", defaults.detector_seed)),
            convergence_threshold=float(conv.get("threshold", defaults.convergence_threshold)),
            convergence_patience=int(conv.get("patience", defaults.convergence_patience)),
            max_tiles=int(conv.get("max_tiles", defaults.max_tiles)),
            tile_order=str(stream.get("order", defaults.tile_order)),
            shuffle_seed=int(stream.get("seed", defaults.shuffle_seed)),
            failure_tolerance=float(data.get("failure_tolerance", defaults.failure_tolerance)),
        )

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        return cls.from_json_dict(json.loads(Path(path).read_text()))


def resolve_roi_backend(config: PipelineConfig) -> TileClassifierBackend:
    """Env var override beats the config; URLs go remote, names are the
    built-in synthetic backends."""
    spec = os.environ.get(ENV_ROI_URL, config.roi_backend)
    if spec.startswith(("http://", "https://")):
        return RemoteTileClassifier(spec)
    if spec == "synthetic":
        from .synthetic import SyntheticRoiBackend

        return SyntheticRoiBackend()
    raise BackendUnavailableError(f"unknown roi backend {spec!r}")


def resolve_detector_backend(config: PipelineConfig) -> DetectorBackend:
    spec = os.environ.get(ENV_DETECTOR_URL, config.detector_backend)
    if spec.startswith(("http://", "https://")):
        backend = RemoteDetector(spec)
        backend.ping()
        return backend
    if spec == "synthetic-planted":
        from .synthetic import PlantedObjectDetector

        return PlantedObjectDetector()
    if spec == "synthetic-distribution":
        from .synthetic import DistributionDetector

        return DistributionDetector(seed=config.detector_seed)
    raise BackendUnavailableError(f"unknown detector backend {spec!r}")


@dataclass
class RunRecord:
    """Operational trace of one run; the report stays separate so that
    reports are byte-stable while timings vary."""

    config: dict
    slide_id: str
    status: str = "success"
    tiles_streamed: int = 0
    tiles_accepted: int = 0
    tiles_failed: int = 0
    failures: list[dict] = field(default_factory=list)
    timings_s: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {
                "config": self.config,
                "slide_id": self.slide_id,
                "status": self.status,
                "tiles_streamed": self.tiles_streamed,
                "tiles_accepted": self.tiles_accepted,
                "tiles_failed": self.tiles_failed,
                "failures": self.failures,
                "timings_s": self.timings_s,
            },
            indent=2,
            sort_keys=True,
        )


def run_pipeline(
    config: PipelineConfig,
    slide_path: str | Path,
    progress: Callable[[str], None] | None = None,
) -> tuple[RunRecord, NdcReport]:
    """Process one slide to a differential-count report.

    Backends are resolved up front so an unreachable endpoint fails
    before any tile work. Per-tile read/inference failures are skipped
    and recorded; once their share of streamed tiles exceeds the
    configured tolerance the run aborts with PartialRun.
    """
    roi_backend = resolve_roi_backend(config)
    detector = resolve_detector_backend(config)

    t0 = time.perf_counter()
    slide = open_slide(slide_path)
    grid = make_grid(slide, rows=config.rows, cols=config.cols, tile_px=config.tile_px)
    record = RunRecord(config=config.to_json_dict(), slide_id=slide.id)
    ihct = IHCT()
    gate_s = detect_s = 0.0

    def note(msg: str) -> None:
        if progress is not None:
            progress(msg)

    failures: list[dict] = []

    def fail_tile(coord: tuple[int, int], exc: Exception) -> None:
        failures.append({"tile": list(coord), "error": type(exc).__name__, "message": str(exc)})
        record.tiles_failed += 1
        if record.tiles_failed > config.failure_tolerance * max(record.tiles_streamed, 1):
            raise PartialRunError(
                f"{record.tiles_failed} tile failures exceed tolerance "
                f"{config.failure_tolerance:.2f} after {record.tiles_streamed} tiles",
                failures=tuple(f["message"] for f in failures),
            )

    for tile in iterate_tiles(
        slide,
        grid,
        order=config.tile_order,
        seed=config.shuffle_seed,
        on_error=fail_tile,
    ):
        record.tiles_streamed += 1
        try:
            t = time.perf_counter()
            decision = gate(score_tile(roi_backend, tile), config.roi_threshold)
            gate_s += time.perf_counter() - t
            if not decision.accepted:
                continue
            t = time.perf_counter()
            dets = diou_nms(
                detect_raw(detector, tile),
                conf_thresh=config.conf_thresh,
                nms_iou=config.nms_iou,
            )
            detect_s += time.perf_counter() - t
        except BackendUnavailableError:
            raise
        except (ReadFailureError, InferenceFailureError) as exc:
            fail_tile(tile.grid_coord, exc)
            continue
        record.tiles_accepted += 1
        ihct = accumulate(
            ihct,
            hct_from_detections(dets),
            threshold=config.convergence_threshold,
            patience=config.convergence_patience,
        )
        note(f"tile {tile.grid_coord}: {len(dets)} objects, {ihct.tiles_seen} accumulated")
        if ihct.converged or ihct.tiles_seen >= config.max_tiles:
            break

    record.failures = failures
    record.status = "success" if not failures else "success-with-skips"
    record.timings_s = {
        "gate": round(gate_s, 6),
        "detect": round(detect_s, 6),
        "total": round(time.perf_counter() - t0, 6),
    }
    report = ndc_report(ihct, slide_id=slide.id)
    return record, report


def write_report_files(
    report: NdcReport,
    config: PipelineConfig,
    out_dir: str | Path,
    record: RunRecord | None = None,
    figures: bool = True,
) -> dict[str, Path]:
    """Write report.json / report.csv (plus figures and the run record).

    The JSON report embeds the config snapshot for provenance and is
    serialized with sorted keys: rerunning an identical configuration
    reproduces the file byte for byte.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths: dict[str, Path] = {}

    doc = report.to_json_dict()
    doc["config"] = config.to_json_dict()
    paths["report_json"] = out / "report.json"
    paths["report_json"].write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")

    paths["report_csv"] = out / "report.csv"
    paths["report_csv"].write_text(report.to_csv())

    if record is not None:
        paths["run_record"] = out / "run_record.json"
        paths["run_record"].write_text(record.to_json() + "\n")

    if figures:
        from .plots import plot_convergence, plot_hct

        paths["hct_png"] = plot_hct(report, out / "hct.png")
        paths["convergence_png"] = plot_convergence(
            report.trace, out / "convergence.png", threshold=config.convergence_threshold
        )
    return paths
