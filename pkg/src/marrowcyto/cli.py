"""Command-line entry points.

Thin adapters over the library: `process` runs a slide end to end,
`eval-roi` / `eval-det` score model outputs, `dataset` and `al` manage
the annotated dataset and the review loop, `serve-review` starts the
correction service. Operational failures print one JSON object to
stderr and exit 1; bad usage exits 2 via argparse.
"""

from __future__ import annotations

import argparse
import csv
import json
import random
import sys
from pathlib import Path

import numpy as np

from .detect import Detection
from .errors import MarrowCytoError


def _fail(exc: Exception) -> int:
    print(
        json.dumps({"error": type(exc).__name__, "message": str(exc)}),
        file=sys.stderr,
    )
    return 1


# ---------------------------------------------------------------------------
# process

def _cmd_process(args) -> int:
    from .pipeline import PipelineConfig, run_pipeline, write_report_files

    config = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    out = Path(args.out)
    if out.suffix == ".json":
        out_dir, report_name = out.parent, out.name
    else:
        out_dir, report_name = out, "report.json"

    progress = None if args.quiet else lambda msg: print(msg, file=sys.stderr)
    record, report = run_pipeline(config, args.slide, progress=progress)
    paths = write_report_files(
        report, config, out_dir, record=record, figures=not args.no_figures
    )
    if report_name != "report.json":
        target = out_dir / report_name
        paths["report_json"].replace(target)
        paths["report_json"] = target

    ratio = f"{report.bm_me:.3f}" if report.bm_me_defined else "undefined"
    print(
        f"{report.slide_id}: {report.cells_counted} objects on {report.tiles_seen} tiles, "
        f"converged={report.converged}, M:E={ratio}"
    )
    for key in sorted(paths):
        print(f"  {key}: {paths[key]}")
    return 0


# ---------------------------------------------------------------------------
# eval-roi

def _read_score_file(path: Path) -> tuple[list[float], list[int]]:
    scores: list[float] = []
    labels: list[int] = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                score = float(row[0])
            except ValueError:
                continue  # header line
            scores.append(score)
            labels.append(int(row[1]))
    return scores, labels


def _cmd_eval_roi(args) -> int:
    from .evalmetrics import mean_roc, roc_auc, roc_curve
    from .plots import plot_roc

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    curves = []
    aucs = []
    names = []
    for path in args.scores:
        scores, labels = _read_score_file(Path(path))
        fpr, tpr, _ = roc_curve(scores, labels)
        curves.append((fpr, tpr))
        aucs.append(roc_auc(scores, labels))
        names.append(Path(path).stem)

    doc: dict = {
        "folds": [
            {"name": n, "auc": a, "fpr": f.tolist(), "tpr": t.tolist()}
            for n, a, (f, t) in zip(names, aucs, curves)
        ]
    }
    mean = None
    if len(curves) > 1:
        grid, mean_tpr, mean_auc = mean_roc(curves)
        mean = (grid, mean_tpr, mean_auc)
        doc["mean"] = {"auc": mean_auc, "fpr": grid.tolist(), "tpr": mean_tpr.tolist()}
    (out / "roc.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    plot_roc(
        [(f, t, f"{n} (AUC {a:.3f})") for n, a, (f, t) in zip(names, aucs, curves)],
        out / "roc.png",
        mean=mean,
    )
    for n, a in zip(names, aucs):
        print(f"{n}: AUC {a:.6f}")
    if mean is not None:
        print(f"mean: AUC {mean[2]:.6f}")
    return 0


# ---------------------------------------------------------------------------
# eval-det

def _records_to_samples(gt_records, pred_records):
    from .evalmetrics import EvalSample, GroundTruthBox

    gt_by_tile = {r.tile_id: r for r in gt_records}
    pred_by_tile = {r.tile_id: r for r in pred_records}
    samples = []
    for tile_id in sorted(set(gt_by_tile) | set(pred_by_tile)):
        truths = [
            GroundTruthBox(bbox=b.bbox, cls=b.cls)
            for b in (gt_by_tile[tile_id].boxes if tile_id in gt_by_tile else [])
        ]
        dets = []
        if tile_id in pred_by_tile:
            rec = pred_by_tile[tile_id]
            for b in rec.boxes:
                dets.append(
                    Detection(
                        bbox=b.bbox,
                        cls=b.cls,
                        confidence=1.0 if b.confidence is None else b.confidence,
                        tile_coord=rec.coord or (0, 0),
                        slide_id=rec.slide_id or tile_id,
                    )
                )
        samples.append(EvalSample(sample_id=tile_id, detections=dets, truths=truths))
    return samples


def _cmd_eval_det(args) -> int:
    from .dataset import load_annotation_dir
    from .evalmetrics import confusion_matrix, evaluate_detections
    from .plots import plot_confusion

    gt_records = load_annotation_dir(args.gt, args.gt_format, source="human")
    pred_records = load_annotation_dir(args.pred, args.pred_format, source="model")
    samples = _records_to_samples(gt_records, pred_records)

    scorecard = evaluate_detections(samples, iou_thresh=args.iou)
    matrix = confusion_matrix(samples, iou_thresh=args.iou)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "scorecard.csv").write_text(scorecard.to_csv())
    (out / "scorecard.json").write_text(scorecard.to_json() + "\n")
    (out / "confusion.json").write_text(
        json.dumps(matrix.to_json_dict(), indent=2, sort_keys=True) + "\n"
    )
    plot_confusion(matrix, out / "confusion.png")
    print(
        f"classes {len(scorecard.per_class)}, images {scorecard.n_images}: "
        f"mAP {scorecard.mean_ap:.4f}, precision {scorecard.mean_precision:.4f}, "
        f"recall {scorecard.mean_recall:.4f}, F1 {scorecard.mean_f1:.4f}, "
        f"LAMR {scorecard.mean_lamr:.4f}"
    )
    return 0


# ---------------------------------------------------------------------------
# dataset

def _cmd_dataset_split(args) -> int:
    from .dataset import DatasetManifest, stratified_split

    manifest = DatasetManifest.load(args.manifest)
    plan = stratified_split(
        manifest, folds=args.folds, seed=args.seed, strict=args.strict
    )
    Path(args.out).write_text(json.dumps(plan.to_json_dict(), indent=2, sort_keys=True) + "\n")
    for fold in range(plan.folds):
        print(
            f"fold {fold}: train {len(plan.train_ids(fold))}, "
            f"validation {len(plan.validation_ids(fold))}, test {len(plan.test_ids(fold))}"
        )
    return 0


def _cmd_dataset_augment(args) -> int:
    from PIL import Image

    from .augment import (
        augment_geometric,
        augment_photometric,
        sample_geometric,
        sample_photometric,
    )
    from .dataset import load_annotation_dir, write_annotations, AnnotationRecord
    from .errors import DegenerateCropError

    records = load_annotation_dir(args.labels, args.format)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = 0
    for rec in records:
        image_path = Path(args.images) / f"{rec.tile_id}.png"
        pixels = np.asarray(Image.open(image_path).convert("RGB"))
        for k in range(args.per_record):
            rng = random.Random(f"{args.seed}:{rec.tile_id}:{k}")
            boxes = None
            for attempt in range(8):
                try:
                    aug_px, boxes = augment_geometric(pixels, rec.boxes, sample_geometric(rng))
                    break
                except DegenerateCropError:
                    continue
            if boxes is None:
                aug_px, boxes = pixels, list(rec.boxes)
            aug_px, boxes = augment_photometric(
                aug_px, boxes, sample_photometric(rng), seed=rng.randrange(2**31)
            )
            stem = f"{rec.tile_id}_aug{k}"
            Image.fromarray(aug_px).save(out / f"{stem}.png")
            aug_rec = AnnotationRecord(
                tile_id=stem, boxes=boxes, slide_id=rec.slide_id, coord=rec.coord
            )
            suffix = ".txt" if args.format == "yolo-txt" else ".xml"
            (out / f"{stem}{suffix}").write_text(write_annotations(aug_rec, args.format))
            written += 1
    print(f"wrote {written} augmented tiles to {out}")
    return 0


def _cmd_dataset_oversample(args) -> int:
    from .dataset import DatasetManifest, oversample_plan

    if args.counts:
        counts = json.loads(Path(args.counts).read_text())
    else:
        manifest = DatasetManifest.load(args.manifest)
        counts = {c.label: n for c, n in manifest.class_counts().items() if n > 0}
    targets = json.loads(Path(args.targets).read_text())
    plan = oversample_plan(counts, targets, seed=args.seed)
    doc = {
        key: {
            "current": item.current,
            "target": item.target,
            "base_factor": item.base_factor,
            "extras": item.extras,
            "realized": item.realized,
        }
        for key, item in plan.items.items()
    }
    Path(args.out).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    for key, item in sorted(plan.items.items()):
        print(f"{key}: {item.current} -> {item.realized} (x{item.base_factor}, +{item.extras})")
    return 0


# ---------------------------------------------------------------------------
# active learning

def _cmd_al_query(args) -> int:
    from .dataset import DatasetManifest, load_annotation_dir, query_rare_tiles

    manifest = DatasetManifest.load(args.manifest)
    pool = load_annotation_dir(args.pool, "yolo-txt", source="model")
    batch = query_rare_tiles(manifest, pool, batch=args.n, seed=args.seed)
    Path(args.out).write_text(
        json.dumps({"tiles": [r.tile_id for r in batch]}, indent=2) + "\n"
    )
    print(f"selected {len(batch)} of {len(pool)} candidate tiles -> {args.out}")
    return 0


def _cmd_al_export(args) -> int:
    from PIL import Image

    from .dataset import export_review_package, load_annotation_dir

    pool = {r.tile_id: r for r in load_annotation_dir(args.pool, "yolo-txt", source="model")}
    selection = json.loads(Path(args.selection).read_text())["tiles"]
    missing = [t for t in selection if t not in pool]
    if missing:
        raise MarrowCytoError(f"selected tiles missing from pool: {missing[:5]}")
    records = [pool[t] for t in selection]
    images = {}
    for tile_id in selection:
        images[tile_id] = np.asarray(
            Image.open(Path(args.images) / f"{tile_id}.png").convert("RGB")
        )
    out = export_review_package(records, images, args.out)
    print(f"exported {len(records)} tiles to {out}")
    return 0


def _cmd_al_merge(args) -> int:
    from .dataset import DatasetManifest, load_review_package, merge_confirmed
    from .review_service import corrections_to_records

    manifest = DatasetManifest.load(args.manifest)
    store = json.loads(Path(args.corrections).read_text())
    records = corrections_to_records(store, confirmed_only=not args.include_edited)
    known = None
    if args.package:
        known = {r.tile_id for r in load_review_package(args.package)}
    merged = merge_confirmed(manifest, records, known_tiles=known, merged_at=args.merged_at)
    out = args.out or args.manifest
    merged.save(out)
    if merged.version == manifest.version:
        print(f"no changes; manifest stays at version {merged.version}")
    else:
        deltas = merged.provenance[-1]["class_deltas"]
        print(f"merged {len(records)} tiles: version {manifest.version} -> {merged.version}")
        for label, delta in sorted(deltas.items()):
            print(f"  {label}: {delta:+d}")
    return 0


# ---------------------------------------------------------------------------
# review service

def _cmd_serve_review(args) -> int:
    import uvicorn

    from .review_service import create_app

    app = create_app(args.package, args.store, manifest_path=args.manifest)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="marrowcyto",
        description="Convergence-driven differential cell counting on aspirate slides.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("process", help="run the full pipeline on one slide")
    p.add_argument("--slide", required=True, help="slide container (directory or .tiff)")
    p.add_argument("--config", help="pipeline config JSON; defaults apply when omitted")
    p.add_argument("--out", default=".", help="output directory (or report.json path)")
    p.add_argument("--no-figures", action="store_true", help="skip PNG figure rendering")
    p.add_argument("--quiet", action="store_true", help="suppress per-tile progress")
    p.set_defaults(func=_cmd_process)

    p = sub.add_parser("eval-roi", help="ROC analysis of tile-gate scores")
    p.add_argument("--scores", nargs="+", required=True, help="CSV files of score,label rows")
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=_cmd_eval_roi)

    p = sub.add_parser("eval-det", help="detection scorecard against reference boxes")
    p.add_argument("--pred", required=True, help="directory of predicted annotations")
    p.add_argument("--gt", required=True, help="directory of reference annotations")
    p.add_argument("--pred-format", default="yolo-txt", choices=("yolo-txt", "voc-xml"))
    p.add_argument("--gt-format", default="yolo-txt", choices=("yolo-txt", "voc-xml"))
    p.add_argument("--iou", type=float, default=0.5, help="IoU match threshold")
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=_cmd_eval_det)

    p_ds = sub.add_parser("dataset", help="dataset management")
    ds_sub = p_ds.add_subparsers(dest="dataset_command", required=True)

    p = ds_sub.add_parser("split", help="stratified cross-validation split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--strict", action="store_true", help="fail on thin strata instead of warning")
    p.add_argument("--out", default="split_plan.json")
    p.set_defaults(func=_cmd_dataset_split)

    p = ds_sub.add_parser("augment", help="write augmented copies of annotated tiles")
    p.add_argument("--images", required=True, help="directory of {tile_id}.png")
    p.add_argument("--labels", required=True, help="directory of annotation files")
    p.add_argument("--format", default="yolo-txt", choices=("yolo-txt", "voc-xml"))
    p.add_argument("--per-record", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_dataset_augment)

    p = ds_sub.add_parser("oversample", help="exact replication schedule to target counts")
    p.add_argument("--manifest", help="derive current counts from a manifest")
    p.add_argument("--counts", help="JSON of current counts (alternative to --manifest)")
    p.add_argument("--targets", required=True, help="JSON of target counts")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="oversample_plan.json")
    p.set_defaults(func=_cmd_dataset_oversample)

    p_al = sub.add_parser("al", help="active-learning review cycle")
    al_sub = p_al.add_subparsers(dest="al_command", required=True)

    p = al_sub.add_parser("query", help="pick the rare-class-first review batch")
    p.add_argument("--manifest", required=True)
    p.add_argument("--pool", required=True, help="directory of model predictions (yolo-txt)")
    p.add_argument("--n", type=int, default=250)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="selection.json")
    p.set_defaults(func=_cmd_al_query)

    p = al_sub.add_parser("export", help="write the review package for a selection")
    p.add_argument("--pool", required=True)
    p.add_argument("--images", required=True)
    p.add_argument("--selection", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_al_export)

    p = al_sub.add_parser("merge", help="merge reviewed corrections into the manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--corrections", required=True, help="review-service store JSON")
    p.add_argument("--package", help="review package dir; restricts merge to its tiles")
    p.add_argument("--include-edited", action="store_true",
                   help="also merge edited-but-unconfirmed tiles")
    p.add_argument("--merged-at", help="provenance timestamp override (ISO-8601)")
    p.add_argument("--out", help="output manifest path (default: overwrite --manifest)")
    p.set_defaults(func=_cmd_al_merge)

    p = sub.add_parser("serve-review", help="serve the correction API for a review package")
    p.add_argument("--package", required=True)
    p.add_argument("--store", required=True, help="durable corrections JSON")
    p.add_argument("--manifest", help="manifest that POST /merge folds corrections into")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8077)
    p.set_defaults(func=_cmd_serve_review)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except MarrowCytoError as exc:
        return _fail(exc)
    except (OSError, ValueError, KeyError) as exc:
        return _fail(exc)


if __name__ == "__main__":
    sys.exit(main())
