"""Detection and classification quality metrics.

Covers binary confusion summaries, ROC analysis, greedy IoU matching,
11-point interpolated average precision, log-average miss rate, the
16-class confusion matrix, and mean squared error between automated and
manual differential percentages. Average precision is computed with
exact rational arithmetic and converted to float once at the end, so
results are reproducible to the last bit.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

from .classes import CellClass, EVAL_CLASSES, MANUAL_NDC_CLASSES
from .detect import BBox, Detection, iou, _rank_key
from .errors import (
    DimensionMismatchError,
    EmptyConfusionError,
    EmptyInputError,
    NoGroundTruthError,
    SingleClassInputError,
)

IOU_MATCH_THRESHOLD = 0.5

# Reference false-positives-per-image points for log-average miss rate:
# nine log-spaced samples spanning two decades.
LAMR_FPPI_POINTS = np.logspace(-2.0, 0.0, num=9)
LAMR_FLOOR = 1e-10


# ---------------------------------------------------------------------------
# Binary confusion

@dataclass(frozen=True)
class BinaryConfusion:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        for name in ("tp", "fp", "fn", "tn"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class BinaryMetrics:
    """Rates derived from a confusion; None marks an undefined ratio."""

    accuracy: float | None
    precision: float | None
    recall: float | None
    specificity: float | None
    npv: float | None
    f1: float | None


def _ratio(num: int, den: int) -> float | None:
    return num / den if den else None


def binary_metrics(conf: BinaryConfusion) -> BinaryMetrics:
    if conf.total == 0:
        raise EmptyConfusionError("all four cells are zero")
    return BinaryMetrics(
        accuracy=_ratio(conf.tp + conf.tn, conf.total),
        precision=_ratio(conf.tp, conf.tp + conf.fp),
        recall=_ratio(conf.tp, conf.tp + conf.fn),
        specificity=_ratio(conf.tn, conf.tn + conf.fp),
        npv=_ratio(conf.tn, conf.tn + conf.fn),
        f1=_ratio(2 * conf.tp, 2 * conf.tp + conf.fp + conf.fn),
    )


# ---------------------------------------------------------------------------
# ROC

def roc_curve(
    scores: Sequence[float], labels: Sequence[int]
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(fpr, tpr, thresholds) from a descending-threshold sweep.

    Tied scores move together, so the curve never cuts through a tie
    group. The first point is (0, 0) at threshold +inf and the last is
    (1, 1).
    """
    if len(scores) != len(labels):
        raise DimensionMismatchError(f"{len(scores)} scores vs {len(labels)} labels")
    if len(scores) == 0:
        raise EmptyInputError("no scores")
    labels_arr = np.asarray(labels, dtype=int)
    if set(np.unique(labels_arr)) - {0, 1}:
        raise ValueError("labels must be 0 or 1")
    pos = int(labels_arr.sum())
    neg = len(labels_arr) - pos
    if pos == 0 or neg == 0:
        raise SingleClassInputError("need at least one positive and one negative")

    order = np.argsort(np.asarray(scores, dtype=float))[::-1]
    sorted_scores = np.asarray(scores, dtype=float)[order]
    sorted_labels = labels_arr[order]

    tps = np.cumsum(sorted_labels)
    fps = np.cumsum(1 - sorted_labels)
    # Keep only the last index of each tie group.
    distinct = np.where(np.diff(sorted_scores))[0]
    idx = np.r_[distinct, len(sorted_scores) - 1]
    tpr = np.r_[0.0, tps[idx] / pos]
    fpr = np.r_[0.0, fps[idx] / neg]
    thresholds = np.r_[np.inf, sorted_scores[idx]]
    return fpr, tpr, thresholds


def roc_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    fpr, tpr, _ = roc_curve(scores, labels)
    return float(np.trapezoid(tpr, fpr))


def mean_roc(
    curves: Sequence[tuple[np.ndarray, np.ndarray]],
    grid_points: int = 101,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Vertically average ROC curves on a fixed FPR grid.

    Returns (fpr_grid, mean_tpr, area under the averaged curve).
    """
    if not curves:
        raise EmptyInputError("no curves to average")
    grid = np.linspace(0.0, 1.0, grid_points)
    stack = []
    for fpr, tpr in curves:
        stack.append(np.interp(grid, fpr, tpr))
    mean_tpr = np.mean(stack, axis=0)
    mean_tpr[0] = 0.0
    return grid, mean_tpr, float(np.trapezoid(mean_tpr, grid))


# ---------------------------------------------------------------------------
# Matching

@dataclass(frozen=True)
class GroundTruthBox:
    bbox: BBox
    cls: CellClass


@dataclass
class EvalSample:
    """One image worth of predictions and reference boxes."""

    sample_id: str
    detections: list[Detection] = field(default_factory=list)
    truths: list[GroundTruthBox] = field(default_factory=list)


@dataclass
class MatchResult:
    """Flags are aligned with detections sorted by descending confidence."""

    order: list[int]
    is_tp: list[bool]
    matched_gt: list[int | None]
    unmatched_gt: list[int]


def match_detections(
    detections: Sequence[Detection],
    truths: Sequence[GroundTruthBox],
    iou_thresh: float = IOU_MATCH_THRESHOLD,
    class_aware: bool = True,
) -> MatchResult:
    """Greedy one-to-one matching in descending confidence order.

    Each detection claims the highest-IoU still-unmatched reference box
    at or above the IoU threshold (same class only when class_aware).
    """
    order = sorted(range(len(detections)), key=lambda i: _rank_key(detections[i]))
    taken = [False] * len(truths)
    is_tp: list[bool] = []
    matched: list[int | None] = []
    for di in order:
        det = detections[di]
        best_j = None
        best_iou = 0.0
        for j, gt in enumerate(truths):
            if taken[j]:
                continue
            if class_aware and gt.cls is not det.cls:
                continue
            overlap = iou(det.bbox, gt.bbox)
            if overlap >= iou_thresh and overlap > best_iou:
                best_iou = overlap
                best_j = j
        if best_j is None:
            is_tp.append(False)
            matched.append(None)
        else:
            taken[best_j] = True
            is_tp.append(True)
            matched.append(best_j)
    unmatched = [j for j, t in enumerate(taken) if not t]
    return MatchResult(order=order, is_tp=is_tp, matched_gt=matched, unmatched_gt=unmatched)


# ---------------------------------------------------------------------------
# Average precision

def average_precision_11pt(flags: Sequence[bool], n_gt: int) -> float:
    """11-point interpolated AP from confidence-ordered hit flags.

    AP = mean over recall points {0.0, 0.1, ..., 1.0} of the maximum
    precision among prefixes whose recall reaches the point. Computed in
    exact rational arithmetic.
    """
    if n_gt <= 0:
        raise NoGroundTruthError("average precision needs at least one reference box")
    points: list[tuple[Fraction, Fraction]] = []
    tp = 0
    for k, flag in enumerate(flags, start=1):
        if flag:
            tp += 1
        points.append((Fraction(tp, n_gt), Fraction(tp, k)))
    total = Fraction(0)
    for i in range(11):
        r = Fraction(i, 10)
        best = Fraction(0)
        for recall, precision in points:
            if recall >= r and precision > best:
                best = precision
        total += best
    return float(total / 11)


# ---------------------------------------------------------------------------
# Log-average miss rate

def miss_rate_curve(
    confidences: Sequence[float],
    flags: Sequence[bool],
    n_gt: int,
    n_images: int,
) -> list[tuple[float, float]]:
    """(fppi, miss rate) operating points from a confidence sweep.

    Confidences must be in descending order, aligned with flags. One
    operating point per distinct confidence value: all detections at or
    above it are kept.
    """
    if n_gt <= 0:
        raise NoGroundTruthError("miss rate needs at least one reference box")
    if n_images <= 0:
        raise ValueError("n_images must be positive")
    if len(confidences) != len(flags):
        raise DimensionMismatchError(f"{len(confidences)} confidences vs {len(flags)} flags")
    points: list[tuple[float, float]] = []
    tp = 0
    fp = 0
    for k in range(len(flags)):
        if flags[k]:
            tp += 1
        else:
            fp += 1
        last_of_group = k + 1 == len(flags) or confidences[k + 1] != confidences[k]
        if last_of_group:
            points.append((fp / n_images, 1.0 - tp / n_gt))
    return points


def log_average_miss_rate(
    confidences: Sequence[float],
    flags: Sequence[bool],
    n_gt: int,
    n_images: int,
) -> float:
    """Geometric mean of the miss rate sampled at nine FPPI points.

    At each reference FPPI the lowest miss rate among operating points
    with no more false positives per image is used; when the sweep never
    gets under the reference, the miss rate counts as 1.0. Zero miss
    rates are floored at 1e-10 so the geometric mean stays defined.
    """
    curve = miss_rate_curve(confidences, flags, n_gt, n_images)
    samples = []
    for ref in LAMR_FPPI_POINTS:
        achieved = [mr for fppi, mr in curve if fppi <= ref]
        samples.append(min(achieved) if achieved else 1.0)
    logs = [math.log(max(mr, LAMR_FLOOR)) for mr in samples]
    return math.exp(sum(logs) / len(logs))


# ---------------------------------------------------------------------------
# Corpus-level evaluation

@dataclass
class ClassScore:
    cls: CellClass
    n_gt: int
    n_det: int
    ap: float
    precision: float | None
    recall: float | None
    f1: float | None
    lamr: float


@dataclass
class DetectionScorecard:
    per_class: list[ClassScore]
    mean_ap: float
    mean_precision: float
    mean_recall: float
    mean_f1: float
    mean_lamr: float
    n_images: int

    def to_json_dict(self) -> dict:
        return {
            "per_class": [
                {
                    "class": s.cls.label,
                    "n_gt": s.n_gt,
                    "n_det": s.n_det,
                    "ap": s.ap,
                    "precision": s.precision,
                    "recall": s.recall,
                    "f1": s.f1,
                    "lamr": s.lamr,
                }
                for s in self.per_class
            ],
            "mean_ap": self.mean_ap,
            "mean_precision": self.mean_precision,
            "mean_recall": self.mean_recall,
            "mean_f1": self.mean_f1,
            "mean_lamr": self.mean_lamr,
            "n_images": self.n_images,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        """One row per class plus an average row, highest headline first."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["class", "ap", "precision", "recall", "f1", "lamr", "n_gt", "n_det"])

        def fmt(v):
            return "" if v is None else f"{v:.6f}"

        for s in self.per_class:
            writer.writerow(
                [s.cls.label, fmt(s.ap), fmt(s.precision), fmt(s.recall), fmt(s.f1), fmt(s.lamr), s.n_gt, s.n_det]
            )
        writer.writerow(
            [
                "average",
                fmt(self.mean_ap),
                fmt(self.mean_precision),
                fmt(self.mean_recall),
                fmt(self.mean_f1),
                fmt(self.mean_lamr),
                "",
                "",
            ]
        )
        return buf.getvalue()


def macro_average(vals: Iterable[float | None]) -> float:
    """Unweighted mean over the defined entries; NaN when none are.

    Every row can lack a ratio (e.g. no predicted boxes anywhere), in
    which case the average itself is undefined.
    """
    present = [v for v in vals if v is not None]
    if not present:
        return math.nan
    return sum(present) / len(present)


def scorecard_from_rows(rows: Sequence[ClassScore], n_images: int) -> DetectionScorecard:
    """Assemble a scorecard from per-class rows; class means are macro."""
    rows = list(rows)
    return DetectionScorecard(
        per_class=rows,
        mean_ap=macro_average(s.ap for s in rows),
        mean_precision=macro_average(s.precision for s in rows),
        mean_recall=macro_average(s.recall for s in rows),
        mean_f1=macro_average(s.f1 for s in rows),
        mean_lamr=macro_average(s.lamr for s in rows),
        n_images=n_images,
    )


def evaluate_detections(
    samples: Sequence[EvalSample],
    iou_thresh: float = IOU_MATCH_THRESHOLD,
) -> DetectionScorecard:
    """Per-class AP / precision / recall / F1 / LAMR plus macro averages.

    Matching runs within each sample; flags are then pooled per class
    across the corpus. Classes without any reference box are left out of
    the rows and the macro averages, since none of their metrics are
    defined.
    """
    if not samples:
        raise EmptyInputError("no samples to evaluate")
    n_images = len(samples)
    pooled: dict[CellClass, list[tuple[float, bool, Detection]]] = {c: [] for c in EVAL_CLASSES}
    gt_counts: dict[CellClass, int] = {c: 0 for c in EVAL_CLASSES}
    for sample in samples:
        for gt in sample.truths:
            if gt.cls in gt_counts:
                gt_counts[gt.cls] += 1
        result = match_detections(sample.detections, sample.truths, iou_thresh, class_aware=True)
        for pos, di in enumerate(result.order):
            det = sample.detections[di]
            if det.cls in pooled:
                pooled[det.cls].append((det.confidence, result.is_tp[pos], det))

    rows: list[ClassScore] = []
    for cls in EVAL_CLASSES:
        n_gt = gt_counts[cls]
        if n_gt == 0:
            continue
        entries = sorted(pooled[cls], key=lambda e: _rank_key(e[2]))
        confidences = [e[0] for e in entries]
        flags = [e[1] for e in entries]
        tp = sum(flags)
        fp = len(flags) - tp
        fn = n_gt - tp
        rows.append(
            ClassScore(
                cls=cls,
                n_gt=n_gt,
                n_det=len(flags),
                ap=average_precision_11pt(flags, n_gt),
                precision=_ratio(tp, tp + fp),
                recall=_ratio(tp, tp + fn),
                f1=_ratio(2 * tp, 2 * tp + fp + fn),
                lamr=log_average_miss_rate(confidences, flags, n_gt, n_images),
            )
        )
    if not rows:
        raise NoGroundTruthError("no reference boxes in any evaluated class")
    return scorecard_from_rows(rows, n_images)


# ---------------------------------------------------------------------------
# Confusion matrix over the 16 evaluated classes

@dataclass
class ConfusionMatrix:
    """Row-normalized class confusion from location-only matching.

    rows[gt_class][det_class] is the fraction of reference boxes of
    gt_class whose matched detection carried det_class. Rows sum to at
    most 1; the shortfall is the miss fraction of that class.
    """

    classes: list[CellClass]
    rows: np.ndarray
    miss: np.ndarray
    support: np.ndarray

    def to_json_dict(self) -> dict:
        return {
            "classes": [c.label for c in self.classes],
            "rows": self.rows.tolist(),
            "miss": self.miss.tolist(),
            "support": self.support.tolist(),
        }


def confusion_matrix(
    samples: Sequence[EvalSample],
    iou_thresh: float = IOU_MATCH_THRESHOLD,
) -> ConfusionMatrix:
    """Build the 16-class confusion using class-agnostic matching, so a
    mislocalized box is a miss while a misclassified box lands in an
    off-diagonal cell."""
    if not samples:
        raise EmptyInputError("no samples")
    classes = list(EVAL_CLASSES)
    index = {c: i for i, c in enumerate(classes)}
    counts = np.zeros((len(classes), len(classes)), dtype=np.int64)
    support = np.zeros(len(classes), dtype=np.int64)
    missed = np.zeros(len(classes), dtype=np.int64)
    for sample in samples:
        for gt in sample.truths:
            if gt.cls in index:
                support[index[gt.cls]] += 1
        result = match_detections(sample.detections, sample.truths, iou_thresh, class_aware=False)
        matched_gt = set()
        for pos, di in enumerate(result.order):
            j = result.matched_gt[pos]
            if j is None:
                continue
            matched_gt.add(j)
            gt_cls = sample.truths[j].cls
            det_cls = sample.detections[di].cls
            if gt_cls in index and det_cls in index:
                counts[index[gt_cls], index[det_cls]] += 1
        for j, gt in enumerate(sample.truths):
            if j not in matched_gt and gt.cls in index:
                missed[index[gt.cls]] += 1
    if support.sum() == 0:
        raise NoGroundTruthError("no reference boxes in any evaluated class")
    rows = np.zeros_like(counts, dtype=float)
    miss = np.zeros(len(classes), dtype=float)
    for i in range(len(classes)):
        if support[i]:
            rows[i] = counts[i] / support[i]
            # Matches whose detection class is outside the evaluated set
            # also leave the row; they land in the miss fraction.
            miss[i] = 1.0 - rows[i].sum()
    return ConfusionMatrix(classes=classes, rows=rows, miss=miss, support=support)


# ---------------------------------------------------------------------------
# Differential-count agreement

def ndc_mse(
    predicted: Sequence[Mapping[CellClass, float]],
    manual: Sequence[Mapping[CellClass, float]],
) -> tuple[dict[CellClass, float], float]:
    """Squared-error agreement between automated and manual differentials.

    Inputs are paired per-case proportion mappings covering the ten
    classes a human reporter fills in. Returns the per-class mean squared
    error over cases and the mean of those ten values. Both sides must
    use the same units (fractions or percentages).
    """
    if len(predicted) != len(manual):
        raise DimensionMismatchError(f"{len(predicted)} predicted vs {len(manual)} manual")
    if not predicted:
        raise EmptyInputError("no cases")
    per_class: dict[CellClass, float] = {}
    for cls in MANUAL_NDC_CLASSES:
        errs = []
        for pred, man in zip(predicted, manual):
            if cls not in pred or cls not in man:
                raise DimensionMismatchError(f"missing class {cls.label}")
            errs.append((float(pred[cls]) - float(man[cls])) ** 2)
        per_class[cls] = sum(errs) / len(errs)
    mean = sum(per_class.values()) / len(per_class)
    return per_class, mean
