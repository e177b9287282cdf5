"""File-rendered figures accompanying the delimited outputs.

Every function writes one PNG next to the stage's CSV/JSON/DOT files and
returns the path. Rendering uses the Agg backend and fixed styling, so
identical inputs produce identical bytes.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .classify import EvalReport

_SAVE = {"dpi": 130, "metadata": {"Software": None}}


def save_pass_count_chart(
    pass_counts: Mapping[int, int],
    min_pass: int,
    path: str | Path,
    node_names: Sequence[str] | None = None,
    title: str = "top-K pass counts per node",
) -> Path:
    """Bar chart of per-node grid pass counts with the pass threshold line."""
    path = Path(path)
    indices = sorted(pass_counts)
    counts = [pass_counts[i] for i in indices]
    fig, ax = plt.subplots(figsize=(max(6.0, len(indices) * 0.06), 3.2))
    ax.bar(range(len(indices)), counts, width=1.0, color="#4878a8", edgecolor="none")
    ax.axhline(min_pass, color="#b0413e", linewidth=1.0, label=f"pass threshold {min_pass}")
    ax.set_xlabel("node (valid regions, index order)")
    ax.set_ylabel("pass count")
    ax.set_title(title)
    ax.legend(loc="upper right", frameon=False)
    if node_names is not None and len(indices) <= 40:
        ax.set_xticks(range(len(indices)))
        ax.set_xticklabels([node_names[i] for i in indices], rotation=90, fontsize=6)
    fig.tight_layout()
    fig.savefig(path, **_SAVE)
    plt.close(fig)
    return path


def save_roc_figure(report: EvalReport, path: str | Path) -> Path:
    """All one-vs-rest ROC curves plus the micro curve on one axes."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(4.8, 4.4))
    for cls in list(report.classes) + ["micro"]:
        curve = report.curves[cls]
        auc = report.micro_auc if cls == "micro" else report.per_class_auc[cls]
        style = {"linestyle": "--", "color": "black"} if cls == "micro" else {}
        ax.plot(curve.fpr, curve.tpr, label=f"{cls} (AUC {auc:.3f})", **style)
    ax.plot([0, 1], [0, 1], color="#bbbbbb", linewidth=0.8, zorder=0)
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.set_title("one-vs-rest ROC")
    ax.legend(loc="lower right", frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, **_SAVE)
    plt.close(fig)
    return path


def save_confusion_figure(report: EvalReport, path: str | Path) -> Path:
    """One 2x2 panel per class: counts at that class's Youden threshold."""
    path = Path(path)
    n = len(report.classes)
    fig, axes = plt.subplots(1, n, figsize=(2.6 * n, 2.9))
    axes = np.atleast_1d(axes)
    for ax, cls in zip(axes, report.classes):
        c = report.confusion[cls]
        grid = np.array([[c["tp"], c["fn"]], [c["fp"], c["tn"]]], dtype=float)
        ax.imshow(grid, cmap="Blues", vmin=0)
        for (r, col), value in np.ndenumerate(grid):
            ax.text(col, r, int(value), ha="center", va="center", fontsize=9)
        threshold, J = report.youden[cls]
        ax.set_title(f"{cls} (J={J:.2f} @ {threshold:.3g})", fontsize=9)
        ax.set_xticks([0, 1], ["pred +", "pred -"], fontsize=7)
        ax.set_yticks([0, 1], ["true +", "true -"], fontsize=7)
    fig.tight_layout()
    fig.savefig(path, **_SAVE)
    plt.close(fig)
    return path


def save_matrix_heatmap(
    matrix: np.ndarray,
    path: str | Path,
    node_names: Sequence[str] | None = None,
    title: str = "mean differential graph",
) -> Path:
    """Signed heatmap of a (sub)matrix, symmetric color scale around 0."""
    path = Path(path)
    matrix = np.asarray(matrix)
    bound = float(np.max(np.abs(matrix))) or 1.0
    fig, ax = plt.subplots(figsize=(4.6, 4.2))
    im = ax.imshow(matrix, cmap="RdBu_r", vmin=-bound, vmax=bound)
    fig.colorbar(im, ax=ax, shrink=0.85)
    ax.set_title(title, fontsize=10)
    if node_names is not None and len(node_names) <= 40:
        ax.set_xticks(range(len(node_names)))
        ax.set_xticklabels(node_names, rotation=90, fontsize=6)
        ax.set_yticks(range(len(node_names)))
        ax.set_yticklabels(node_names, fontsize=6)
    fig.tight_layout()
    fig.savefig(path, **_SAVE)
    plt.close(fig)
    return path
