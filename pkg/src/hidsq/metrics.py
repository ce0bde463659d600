"""Confusion-matrix rates, ROC/AUC, the log10 recall/FPR ratio, and aggregation.

Positive class is intrusion (label 1).
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field, fields
from typing import NamedTuple

import numpy as np


class ConfusionMatrix(NamedTuple):
    tp: int
    fn: int
    fp: int
    tn: int

    @property
    def total(self):
        return self.tp + self.fn + self.fp + self.tn


def _labels(y, name):
    y = np.asarray(y).reshape(-1)
    if len(y) and not np.isin(y, (0, 1)).all():
        raise ValueError(f"{name} must contain only 0/1 labels")
    return y.astype(np.int8)


def confusion(y_true, y_pred) -> ConfusionMatrix:
    t, p = _labels(y_true, "y_true"), _labels(y_pred, "y_pred")
    if len(t) != len(p):
        raise ValueError(f"length mismatch: {len(t)} labels vs {len(p)} predictions")
    tp = int(((t == 1) & (p == 1)).sum())
    fn = int(((t == 1) & (p == 0)).sum())
    fp = int(((t == 0) & (p == 1)).sum())
    tn = int(((t == 0) & (p == 0)).sum())
    return ConfusionMatrix(tp, fn, fp, tn)


@dataclass
class Rates:
    accuracy: float
    precision: float
    recall: float
    fpr: float
    macro_f1: float
    warnings: list[str] = field(default_factory=list)


def _div(num, den, what, warns):
    if den == 0:
        warns.append(f"{what}: 0/0 set to 0")
        return 0.0
    return num / den


def _f1(p, r):
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


def classification_metrics(cm: ConfusionMatrix) -> Rates:
    tp, fn, fp, tn = cm
    if cm.total <= 0:
        raise ValueError("empty confusion matrix")
    w: list[str] = []
    precision = _div(tp, tp + fp, "precision", w)
    recall = _div(tp, tp + fn, "recall", w)
    fpr = _div(fp, fp + tn, "fpr", w)
    # class 0 seen as the positive class for its own F1
    npv = _div(tn, tn + fn, "negative predictive value", w)
    specificity = _div(tn, tn + fp, "specificity", w)
    macro_f1 = (_f1(precision, recall) + _f1(npv, specificity)) / 2
    return Rates((tp + tn) / cm.total, precision, recall, fpr, macro_f1, w)


@dataclass
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray  # thresholds[0] = +inf for the (0, 0) origin

    @property
    def points(self):
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))


def _both_classes(y):
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == len(y):
        raise ValueError("ROC/AUC need both classes present")
    return n_pos, len(y) - n_pos


def roc_curve(y_true, scores) -> RocCurve:
    """Sweep thresholds over distinct scores, highest first; tied scores form one step."""
    y = _labels(y_true, "y_true")
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    if len(y) != len(s):
        raise ValueError("labels and scores differ in length")
    n_pos, n_neg = _both_classes(y)
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    last = np.r_[np.flatnonzero(np.diff(s) != 0), len(s) - 1]
    tps = np.cumsum(y)[last]
    fps = (last + 1) - tps
    fpr = np.r_[0.0, fps / n_neg]
    tpr = np.r_[0.0, tps / n_pos]
    return RocCurve(fpr, tpr, np.r_[np.inf, s[last]])


def auc(y_true, scores) -> float:
    c = roc_curve(y_true, scores)
    return float(np.sum(np.diff(c.fpr) * (c.tpr[1:] + c.tpr[:-1]) / 2.0))


def log_ratio(recall: float, fpr: float, n_neg: int) -> tuple[float, float]:
    """log10(recall / fpr) with both floored at eps = 1 / (2 n_neg); returns (value, eps)."""
    if n_neg <= 0:
        raise ValueError("n_neg must be positive")
    eps = 1.0 / (2 * n_neg)
    return math.log10(max(recall, eps) / max(fpr, eps)), eps


@dataclass
class MetricsReport:
    dataset: str
    provenance: str
    model: str
    accuracy: float
    precision: float
    recall: float
    fpr: float
    macro_f1: float
    auc: float
    log_ratio: float
    log_ratio_eps: float
    tp: int
    fn: int
    fp: int
    tn: int
    n_train: int = 0
    n_test: int = 0
    warnings: str = ""

    @classmethod
    def columns(cls):
        return [f.name for f in fields(cls)]

    def row(self):
        return asdict(self)


def evaluate(y_true, scores, y_pred, *, dataset="", provenance="", model="", n_train=0) -> MetricsReport:
    cm = confusion(y_true, y_pred)
    r = classification_metrics(cm)
    y = _labels(y_true, "y_true")
    try:
        a = auc(y, scores)
    except ValueError:
        a = float("nan")
        r.warnings.append("auc undefined: single class")
    lr, eps = log_ratio(r.recall, r.fpr, max(cm.fp + cm.tn, 1))
    return MetricsReport(
        dataset, provenance, model, r.accuracy, r.precision, r.recall, r.fpr, r.macro_f1,
        a, lr, eps, cm.tp, cm.fn, cm.fp, cm.tn, n_train, len(y), "; ".join(r.warnings),
    )


AGG_FIELDS = ("accuracy", "precision", "recall", "fpr", "macro_f1", "auc", "log_ratio")


def aggregate(reports, group_by=("model",)) -> list[dict]:
    """Arithmetic means of the rate fields per group, sorted by group key."""
    if not reports:
        raise ValueError("nothing to aggregate")
    if isinstance(group_by, str):
        group_by = (group_by,)
    groups = defaultdict(list)
    for r in reports:
        groups[tuple(getattr(r, g) for g in group_by)].append(r)
    rows = []
    for key in sorted(groups):
        rs = groups[key]
        row = dict(zip(group_by, key))
        row["count"] = len(rs)
        for f in AGG_FIELDS:
            row[f] = float(np.mean([getattr(r, f) for r in rs]))
        rows.append(row)
    return rows


def safe_ratio(num: float, den: float, eps: float) -> float:
    """num / den with both floored at eps (same convention as ``log_ratio``)."""
    return max(num, eps) / max(den, eps)


def provenance_ratios(reports) -> list[dict]:
    """Per dataset: mean recall/FPR for each provenance and original/processed ratios."""
    rows = aggregate(reports, ("dataset", "provenance"))
    eps_by_ds = defaultdict(lambda: 0.0)
    for r in reports:
        eps_by_ds[r.dataset] = max(eps_by_ds[r.dataset], r.log_ratio_eps)
    by_ds = defaultdict(dict)
    for row in rows:
        by_ds[row["dataset"]][row["provenance"]] = row
    out = []
    for ds in sorted(by_ds):
        prov = by_ds[ds]
        missing = {"original", "processed"} - set(prov)
        if missing:
            raise ValueError(f"dataset {ds!r} lacks reports for provenance {sorted(missing)}")
        o, p = prov["original"], prov["processed"]
        eps = eps_by_ds[ds]
        out.append({
            "dataset": ds,
            "avg_recall_orig": o["recall"],
            "avg_recall_proc": p["recall"],
            "avg_fpr_orig": o["fpr"],
            "avg_fpr_proc": p["fpr"],
            "fpr_ratio": safe_ratio(o["fpr"], p["fpr"], eps),
            "recall_ratio": safe_ratio(p["recall"], o["recall"], eps),
            "eps": eps,
        })
    return out
