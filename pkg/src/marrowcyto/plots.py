"""Figure rendering for reports and evaluations.

Every function writes a PNG next to the delimited output it illustrates
and returns the path. Rendering uses the Agg backend so headless runs
behave the same as interactive ones.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .classes import ALL_CLASSES, CellClass
from .evalmetrics import ConfusionMatrix
from .hct import NdcReport


def plot_hct(report: NdcReport, path: str | Path) -> Path:
    """Bar chart of per-class counts with the headline numbers on top."""
    path = Path(path)
    labels = [c.label for c in ALL_CLASSES]
    values = [report.counts[c] for c in ALL_CLASSES]
    fig, ax = plt.subplots(figsize=(11, 5))
    ax.bar(range(len(labels)), values, color="#4878a8")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=60, ha="right", fontsize=8)
    ax.set_ylabel("count")
    ratio = f"{report.bm_me:.2f}" if report.bm_me_defined else "undefined"
    ax.set_title(
        f"Integrated histogram of cell types: {report.cells_counted} objects over "
        f"{report.tiles_seen} tiles, M:E {ratio}"
    )
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_convergence(
    trace: Sequence[tuple[int, float]],
    path: str | Path,
    threshold: float | None = None,
) -> Path:
    """Chi-square distance vs tiles accumulated, log scale."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(8, 4.5))
    if trace:
        xs = [i for i, _ in trace]
        ys = [d for _, d in trace]
        ax.plot(xs, ys, lw=1.0, color="#333333")
        ax.set_yscale("log")
    if threshold is not None:
        ax.axhline(threshold, color="#b03030", ls="--", lw=1.0, label=f"threshold {threshold:g}")
        ax.legend(loc="upper right")
    ax.set_xlabel("tiles accumulated")
    ax.set_ylabel("chi-square distance")
    ax.set_title("Convergence of the integrated histogram")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_roc(
    curves: Sequence[tuple[np.ndarray, np.ndarray, str]],
    path: str | Path,
    mean: tuple[np.ndarray, np.ndarray, float] | None = None,
) -> Path:
    """One or more (fpr, tpr, label) curves, optionally with their mean."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(5.5, 5.5))
    for fpr, tpr, label in curves:
        ax.plot(fpr, tpr, lw=1.0, alpha=0.7, label=label)
    if mean is not None:
        grid, mean_tpr, auc = mean
        ax.plot(grid, mean_tpr, lw=2.2, color="#b03030", label=f"mean (AUC {auc:.3f})")
    ax.plot([0, 1], [0, 1], ls=":", color="#888888", lw=0.8)
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.set_title("ROC")
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_confusion(matrix: ConfusionMatrix, path: str | Path) -> Path:
    """Row-normalized confusion heat map; rows are reference classes."""
    path = Path(path)
    labels = [c.label for c in matrix.classes]
    fig, ax = plt.subplots(figsize=(8.5, 7.5))
    im = ax.imshow(matrix.rows, vmin=0.0, vmax=1.0, cmap="Blues")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=60, ha="right", fontsize=7)
    ax.set_yticks(range(len(labels)))
    ax.set_yticklabels(labels, fontsize=7)
    for i in range(len(labels)):
        for j in range(len(labels)):
            v = matrix.rows[i, j]
            if v >= 0.005:
                ax.text(j, i, f"{v:.2f}", ha="center", va="center", fontsize=6,
                        color="white" if v > 0.6 else "black")
    ax.set_xlabel("predicted class")
    ax.set_ylabel("reference class")
    fig.colorbar(im, ax=ax, fraction=0.046)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_mse(per_class: Mapping[CellClass, float], path: str | Path) -> Path:
    """Per-class squared-error bars for the differential comparison."""
    path = Path(path)
    items = list(per_class.items())
    fig, ax = plt.subplots(figsize=(8, 4))
    ax.bar(range(len(items)), [v for _, v in items], color="#4878a8")
    ax.set_xticks(range(len(items)))
    ax.set_xticklabels([c.label for c, _ in items], rotation=60, ha="right", fontsize=8)
    ax.set_ylabel("MSE")
    ax.set_title("Automated vs manual differential, per-class MSE")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
