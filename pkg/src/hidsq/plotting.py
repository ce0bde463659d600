"""SVG figures: overlaid syscall histograms, ROC curves, before/after bars.

Every figure is drawn from rows read back out of the CSV files the pipeline
writes, so plotted values and tabulated values come from one source.  SVG
output is byte-stable: fixed hash salt, no date metadata.
"""

from __future__ import annotations

import csv
import warnings
from pathlib import Path

import matplotlib
import numpy as np
from matplotlib.figure import Figure

SVG_RC = {"svg.hashsalt": "hidsq", "svg.fonttype": "path", "path.simplify": False}
CLASS_COLORS = {"normal": "#1f77b4", "intrusion": "#d62728"}
BAR_SERIES = (
    ("avg_recall_orig", "recall (original)", "#9ecae1"),
    ("avg_recall_proc", "recall (processed)", "#08519c"),
    ("avg_fpr_orig", "FPR (original)", "#fcae91"),
    ("avg_fpr_proc", "FPR (processed)", "#a50f15"),
)


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _save(fig: Figure, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with matplotlib.rc_context(SVG_RC):
        fig.savefig(path, format="svg", metadata={"Date": None})
    return path


def syscall_counts(grams) -> dict[int, int]:
    """Occurrences of each syscall id over all positions of all sequences."""
    grams = np.asarray(grams, dtype=np.int64)
    if grams.size == 0:
        return {}
    ids, counts = np.unique(grams.ravel(), return_counts=True)
    return {int(i): int(c) for i, c in zip(ids, counts)}


def pool_rows_to_classes(rows) -> tuple[np.ndarray, np.ndarray]:
    """Split pool CSV rows (s1..sn, label) into normal and intrusion arrays."""
    if not rows:
        return np.zeros((0, 0), np.int64), np.zeros((0, 0), np.int64)
    keys = [k for k in rows[0] if k != "label"]
    grams = np.array([[int(r[k]) for k in keys] for r in rows], dtype=np.int64)
    labels = np.array([int(r["label"]) for r in rows])
    return grams[labels == 0], grams[labels == 1]


def histogram_figure(normal, intrusion, path, title="") -> dict:
    """Overlaid per-syscall frequency bars for the two classes."""
    normal, intrusion = np.asarray(normal), np.asarray(intrusion)
    if normal.size == 0 and intrusion.size == 0:
        raise ValueError("histogram of an empty pool")
    counts = {"normal": syscall_counts(normal), "intrusion": syscall_counts(intrusion)}
    ids = sorted(set(counts["normal"]) | set(counts["intrusion"]))
    fig = Figure(figsize=(8, 3.5))
    ax = fig.add_subplot()
    for cls in ("normal", "intrusion"):
        heights = [counts[cls].get(i, 0) for i in ids]
        ax.bar(ids, heights, width=0.9, alpha=0.55, color=CLASS_COLORS[cls], label=cls)
    ax.set_xlabel("system call id")
    ax.set_ylabel("frequency")
    ax.set_title(title)
    ax.legend(frameon=False)
    fig.tight_layout()
    _save(fig, path)
    return counts


def roc_figure(curves, aucs, path, title="") -> list[str]:
    """One series per model; ``curves`` maps model -> (fpr, tpr).

    Models listed in ``aucs`` without a curve are skipped with a warning.
    Returns the legend labels in drawing order.
    """
    fig = Figure(figsize=(5, 5))
    ax = fig.add_subplot()
    ax.plot([0, 1], [0, 1], color="0.75", lw=0.8, ls="--")
    labels = []
    for model in sorted(aucs):
        if model not in curves:
            warnings.warn(f"no ROC curve for model {model!r}; series skipped", stacklevel=2)
            continue
        fpr, tpr = curves[model]
        label = f"{model} (AUC {float(aucs[model]):.3f})"
        ax.plot(fpr, tpr, lw=1.2, label=label, drawstyle="default")
        labels.append(label)
    ax.set_xlim(-0.01, 1.01)
    ax.set_ylim(-0.01, 1.01)
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.set_title(title)
    ax.legend(loc="lower right", fontsize=8, frameon=False)
    fig.tight_layout()
    _save(fig, path)
    return labels


def roc_rows_to_curves(rows) -> dict[str, tuple[list[float], list[float]]]:
    curves: dict[str, tuple[list[float], list[float]]] = {}
    for r in rows:
        fpr, tpr = curves.setdefault(r["model"], ([], []))
        fpr.append(float(r["fpr"]))
        tpr.append(float(r["tpr"]))
    return curves


def bar_order(rows) -> list[dict]:
    """Datasets by descending processed average FPR, then by name."""
    return sorted(rows, key=lambda r: (-float(r["avg_fpr_proc"]), r["dataset"]))


def bars_figure(rows, path, title="Average recall and FPR, original vs processed") -> list[tuple[str, str, float]]:
    """Clustered bars, four per dataset; returns ``(dataset, series, value)`` as drawn."""
    rows = bar_order(rows)
    fig = Figure(figsize=(max(4.0, 1.8 * len(rows) + 2), 4))
    ax = fig.add_subplot()
    width = 0.2
    drawn = []
    x = np.arange(len(rows))
    for k, (key, label, color) in enumerate(BAR_SERIES):
        values = [float(r[key]) for r in rows]
        bars = ax.bar(x + (k - 1.5) * width, values, width, label=label, color=color)
        ax.bar_label(bars, labels=[f"{v:.2f}" for v in values], fontsize=7, padding=1)
        drawn += [(r["dataset"], key, v) for r, v in zip(rows, values)]
    ax.set_xticks(x, [r["dataset"] for r in rows])
    ax.set_ylim(0, 1.12)
    ax.set_ylabel("rate")
    ax.set_title(title)
    ax.legend(fontsize=8, frameon=False, ncols=2, loc="upper right")
    fig.tight_layout()
    _save(fig, path)
    return drawn
