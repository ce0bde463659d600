"""Measurable data-quality dimensions and the per-dataset scorecard.

Reputation, relevance, timeliness and context have no computable definition
here; they are copied from manifest metadata as declared strings.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import RawDataset
from .metrics import provenance_ratios
from .preprocess import INTRUSION, NORMAL, PreparedSplit, SequencePool, _as_grams, _row_ids

DECLARED_KEYS = ("reputation", "relevance", "timeliness", "context")
UNDECLARED = "undeclared"


def _distinct(seqs: np.ndarray) -> int:
    return len(np.unique(seqs, axis=0)) if len(seqs) else 0


def duplication_rate(seqs) -> float:
    seqs = _as_grams(seqs)
    if len(seqs) == 0:
        raise ValueError("duplication rate of an empty collection")
    return 1.0 - _distinct(seqs) / len(seqs)


def cross_class_overlap(normal, intrusion) -> float:
    """Jaccard index of the two classes' distinct sequence values."""
    a, b = _as_grams(normal), _as_grams(intrusion)
    if len(a) == 0 or len(b) == 0:
        raise ValueError("cross-class overlap needs both classes non-empty")
    ida, idb = _row_ids(a, b)
    ua, ub = np.unique(ida), np.unique(idb)
    inter = len(np.intersect1d(ua, ub))
    return inter / len(np.union1d(ua, ub))


def class_balance(pool: SequencePool) -> float:
    n0, n1 = pool.counts()
    if n0 == 0 or n1 == 0:
        raise ValueError("class balance needs both classes present")
    return min(n0, n1) / max(n0, n1)


@dataclass
class Variety:
    distinct_grams: int
    vocabulary: int  # distinct syscall ids observed anywhere
    vocabulary_coverage: float  # vocabulary / vocab_size
    position_coverage: list[float]  # per position: distinct ids there / vocab_size


def variety(seqs, vocab_size: int) -> Variety:
    if vocab_size <= 0:
        raise ValueError("vocab_size must be positive")
    seqs = _as_grams(seqs)
    if len(seqs) == 0:
        return Variety(0, 0, 0.0, [0.0] * seqs.shape[1])
    vocab = len(np.unique(seqs))
    per_pos = [min(1.0, len(np.unique(seqs[:, i])) / vocab_size) for i in range(seqs.shape[1])]
    return Variety(_distinct(seqs), vocab, min(1.0, vocab / vocab_size), per_pos)


def split_pid_anomalies(traces) -> int:
    """Extra files a PID's records are spread over, summed across PIDs.

    Records are regrouped by PID within each file, so a PID occurring in k
    files of the same class has its sequence cut into k pieces.
    """
    files_per_pid: dict[int, int] = {}
    for t in traces:
        if t.pids is None:
            continue
        for pid in set(t.pids):
            files_per_pid[pid] = files_per_pid.get(pid, 0) + 1
    return sum(k - 1 for k in files_per_pid.values())


def consistency_check(ds: RawDataset, max_syscall: int) -> int:
    """Out-of-range syscall ids plus, for UNM input, PIDs split across files."""
    violations = 0
    for _, t in ds.traces():
        violations += sum(1 for v in t.events if v > max_syscall)
    if ds.manifest.format == "unm":
        violations += split_pid_anomalies(ds.normal_traces)
        violations += split_pid_anomalies(ds.intrusion_traces)
    return violations


@dataclass
class QualityScorecard:
    dataset: str
    duplication_rate_per_class: tuple[float, float]
    cross_class_overlap: float
    class_balance: float
    variety: Variety
    consistency_violations: int
    train_test_value_overlap: float
    declared: dict = field(default_factory=dict)
    # the same measurements on the cleaned (processed) pool
    processed_duplication_rate_per_class: tuple[float, float] = (0.0, 0.0)
    processed_cross_class_overlap: float = 0.0
    processed_class_balance: float = 0.0

    def row(self) -> dict:
        v = self.variety
        row = {
            "dataset": self.dataset,
            "duplication_normal": self.duplication_rate_per_class[0],
            "duplication_intrusion": self.duplication_rate_per_class[1],
            "cross_class_overlap": self.cross_class_overlap,
            "class_balance": self.class_balance,
            "processed_duplication_normal": self.processed_duplication_rate_per_class[0],
            "processed_duplication_intrusion": self.processed_duplication_rate_per_class[1],
            "processed_cross_class_overlap": self.processed_cross_class_overlap,
            "processed_class_balance": self.processed_class_balance,
            "distinct_grams": v.distinct_grams,
            "vocabulary": v.vocabulary,
            "vocabulary_coverage": v.vocabulary_coverage,
            "position_coverage_min": min(v.position_coverage) if v.position_coverage else 0.0,
            "position_coverage_mean": float(np.mean(v.position_coverage)) if v.position_coverage else 0.0,
            "consistency_violations": self.consistency_violations,
            "train_test_value_overlap": self.train_test_value_overlap,
        }
        for k in DECLARED_KEYS:
            row[f"declared_{k}"] = self.declared.get(k, UNDECLARED)
        return row


def _per_class_dup(pool: SequencePool):
    return tuple(
        duplication_rate(pool.of_class(c)) if (pool.labels == c).any() else 0.0
        for c in (NORMAL, INTRUSION)
    )


def _safe(fn, *args):
    try:
        return fn(*args)
    except ValueError:
        return 0.0


def scorecard(ds: RawDataset, pools, split: PreparedSplit) -> QualityScorecard:
    original, processed = pools
    meta = ds.manifest.metadata
    return QualityScorecard(
        dataset=ds.manifest.name,
        duplication_rate_per_class=_per_class_dup(original),
        cross_class_overlap=_safe(cross_class_overlap, original.of_class(0), original.of_class(1)),
        class_balance=_safe(class_balance, original),
        variety=variety(original.grams, ds.manifest.max_syscall + 1),
        consistency_violations=consistency_check(ds, ds.manifest.max_syscall),
        train_test_value_overlap=split.value_overlap,
        declared={k: str(meta[k]) if meta.get(k) not in (None, "") else UNDECLARED for k in DECLARED_KEYS},
        processed_duplication_rate_per_class=_per_class_dup(processed),
        processed_cross_class_overlap=_safe(
            cross_class_overlap, processed.of_class(0), processed.of_class(1)
        ),
        processed_class_balance=_safe(class_balance, processed),
    )


@dataclass
class DatasetComparison:
    dataset: str
    avg_recall_orig: float
    avg_recall_proc: float
    avg_fpr_orig: float
    avg_fpr_proc: float
    fpr_ratio: float  # original / processed
    recall_ratio: float  # processed / original
    eps: float


@dataclass
class BeforeAfterComparison:
    rows: list[DatasetComparison]

    def by_dataset(self):
        return {r.dataset: r for r in self.rows}


def before_after(reports) -> BeforeAfterComparison:
    """Average recall/FPR across models per (dataset, provenance) and their ratios."""
    return BeforeAfterComparison([DatasetComparison(**r) for r in provenance_ratios(reports)])
