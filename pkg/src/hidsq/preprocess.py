"""Data preparation: PID grouping, n-gram windows, cross-class de-duplication,
bootstrap balancing and a stratified train/test split.

Sequences are rows of an ``(m, n)`` integer array; a pool pairs such an array
with a parallel label vector (0 = normal, 1 = intrusion).
"""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .corpus import RawDataset, Trace
from .seeding import derive_seed

log = logging.getLogger(__name__)

NORMAL, INTRUSION = 0, 1
BALANCE_POLICIES = ("bootstrap_to_max", "none")


@dataclass(frozen=True)
class PipelineConfig:
    n: int = 6
    stride: int = 1
    balance: str = "bootstrap_to_max"
    ratio: float = 0.7
    seed: int = 0
    dedup: bool = True

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if not 1 <= self.stride <= self.n:
            raise ValueError("stride must satisfy 1 <= stride <= n")
        if not 0 < self.ratio < 1:
            raise ValueError("ratio must lie in (0, 1)")
        if self.balance not in BALANCE_POLICIES:
            raise ValueError(f"balance must be one of {BALANCE_POLICIES}")

    @classmethod
    def from_mapping(cls, d: dict, **overrides) -> "PipelineConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown pipeline keys: {sorted(extra)}")
        merged = {**d, **{k: v for k, v in overrides.items() if v is not None}}
        return cls(**merged)


@dataclass(frozen=True, eq=False)
class SequencePool:
    grams: np.ndarray  # (m, n) int64
    labels: np.ndarray  # (m,) int8
    provenance: str = "original"

    def __post_init__(self):
        if self.grams.ndim != 2 or len(self.grams) != len(self.labels):
            raise ValueError("grams must be (m, n) with one label per row")
        if self.provenance not in ("original", "processed"):
            raise ValueError("provenance must be 'original' or 'processed'")

    @classmethod
    def from_classes(cls, normal, intrusion, provenance="original") -> "SequencePool":
        normal = _as_grams(normal)
        intrusion = _as_grams(intrusion, normal.shape[1] if normal.size else None)
        if normal.shape[1] != intrusion.shape[1]:
            raise ValueError("classes have different gram lengths")
        grams = np.concatenate([normal, intrusion])
        labels = np.concatenate(
            [np.zeros(len(normal), np.int8), np.ones(len(intrusion), np.int8)]
        )
        return cls(grams, labels, provenance)

    def __len__(self):
        return len(self.labels)

    @property
    def n(self) -> int:
        return self.grams.shape[1]

    def of_class(self, label: int) -> np.ndarray:
        return self.grams[self.labels == label]

    def counts(self) -> tuple[int, int]:
        pos = int(self.labels.sum())
        return len(self.labels) - pos, pos

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join([f"s{i + 1}" for i in range(self.n)] + ["label"]) + "\n")
        for row, lab in zip(self.grams.tolist(), self.labels.tolist()):
            buf.write(",".join(map(str, row)) + f",{lab}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, provenance="original") -> "SequencePool":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise ValueError("empty pool CSV")
        header = lines[0].split(",")
        if header[-1] != "label":
            raise ValueError("last CSV column must be 'label'")
        rows = np.array([[int(v) for v in ln.split(",")] for ln in lines[1:]], dtype=np.int64)
        rows = rows.reshape(-1, len(header))
        return cls(rows[:, :-1].copy(), rows[:, -1].astype(np.int8), provenance)


@dataclass(frozen=True, eq=False)
class PreparedSplit:
    """Index partition of a (balanced) pool.  ``train_idx``/``test_idx`` index ``pool``."""

    pool: SequencePool
    train_idx: np.ndarray
    test_idx: np.ndarray
    seed: int
    ratio: float
    value_overlap: float = 0.0  # fraction of test rows whose value also occurs in train

    @property
    def X_train(self):
        return self.pool.grams[self.train_idx]

    @property
    def y_train(self):
        return self.pool.labels[self.train_idx]

    @property
    def X_test(self):
        return self.pool.grams[self.test_idx]

    @property
    def y_test(self):
        return self.pool.labels[self.test_idx]

    def to_bytes(self) -> bytes:
        parts = [self.train_idx, self.test_idx, self.X_train, self.y_train, self.X_test, self.y_test]
        head = f"{self.seed}|{self.ratio!r}|{self.value_overlap!r}|".encode()
        return head + b"".join(np.ascontiguousarray(p).tobytes() for p in parts)


@dataclass
class PipelineStats:
    short_traces: int = 0
    removed_shared: tuple[int, int] = (0, 0)
    resampled: int = 0
    notes: list[str] = field(default_factory=list)


def _as_grams(seqs, n=None) -> np.ndarray:
    arr = np.asarray(seqs, dtype=np.int64)
    if arr.size == 0:
        return np.zeros((0, n or (arr.shape[1] if arr.ndim == 2 else 0)), np.int64)
    if arr.ndim != 2:
        raise ValueError("sequences must form a 2-D array")
    return arr


def group_by_pid(records) -> list[Trace]:
    """One trace per PID in first-appearance order; record order kept within a PID."""
    order: dict[int, list[int]] = {}
    for pid, sc in records:
        order.setdefault(pid, []).append(sc)
    return [Trace(f"pid:{pid}", tuple(ev), (pid,) * len(ev)) for pid, ev in order.items()]


def tokenize_ngrams(trace, n: int = 6, stride: int = 1) -> np.ndarray:
    if n < 1 or not 1 <= stride <= n:
        raise ValueError("require n >= 1 and 1 <= stride <= n")
    events = trace.events if isinstance(trace, Trace) else trace
    ev = np.asarray(events, dtype=np.int64)
    if len(ev) < n:
        return np.zeros((0, n), np.int64)
    win = np.lib.stride_tricks.sliding_window_view(ev, n)[::stride]
    return np.ascontiguousarray(win)


def _row_ids(*blocks: np.ndarray) -> list[np.ndarray]:
    """Integer ids such that equal rows (across all blocks) get equal ids."""
    sizes = [len(b) for b in blocks]
    stacked = np.concatenate(blocks) if sum(sizes) else np.zeros((0, 1), np.int64)
    if len(stacked) == 0:
        return [np.zeros(0, np.int64) for _ in blocks]
    _, inv = np.unique(stacked, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    return np.split(inv, np.cumsum(sizes)[:-1])


def dedup_cross_class(normal, intrusion) -> tuple[np.ndarray, np.ndarray]:
    """Drop every occurrence of any sequence value seen in both classes.

    Repeats within a class of a value that survives are kept.
    """
    a, b = _as_grams(normal), _as_grams(intrusion)
    if a.size == 0 or b.size == 0:
        return a.copy(), b.copy()
    ida, idb = _row_ids(a, b)
    shared = np.intersect1d(ida, idb)
    return a[~np.isin(ida, shared)], b[~np.isin(idb, shared)]


def bootstrap_balance(pool: SequencePool, seed: int) -> SequencePool:
    """Resample the minority class with replacement up to the majority count."""
    n0, n1 = pool.counts()
    if n0 == 0 or n1 == 0:
        raise ValueError("cannot balance: empty class")
    if n0 == n1:
        return pool
    minority = NORMAL if n0 < n1 else INTRUSION
    need = abs(n0 - n1)
    rng = np.random.default_rng(seed)
    src = np.flatnonzero(pool.labels == minority)
    extra = src[rng.integers(0, len(src), size=need)]
    idx = np.concatenate([np.arange(len(pool)), extra])
    # keep class blocks contiguous: normal rows first, then intrusion
    idx = idx[np.argsort(pool.labels[idx], kind="stable")]
    return replace(pool, grams=pool.grams[idx], labels=pool.labels[idx])


def train_test_value_overlap(train: np.ndarray, test: np.ndarray) -> float:
    if len(test) == 0:
        return 0.0
    if len(train) == 0:
        return 0.0
    id_tr, id_te = _row_ids(train, test)
    return float(np.isin(id_te, id_tr).mean())


def split_train_test(pool: SequencePool, ratio: float = 0.7, seed: int = 0) -> PreparedSplit:
    """Stratified shuffle-then-cut: floor(ratio * count) of each class goes to train."""
    if not 0 < ratio < 1:
        raise ValueError("ratio must lie in (0, 1)")
    if len(pool) == 0:
        raise ValueError("cannot split an empty pool")
    rng = np.random.default_rng(seed)
    train, test = [], []
    for label in (NORMAL, INTRUSION):
        idx = np.flatnonzero(pool.labels == label)
        if len(idx) < 2:
            raise ValueError(f"cannot stratify: class {label} has {len(idx)} item(s)")
        idx = idx[rng.permutation(len(idx))]
        cut = int(np.floor(ratio * len(idx)))
        train.append(idx[:cut])
        test.append(idx[cut:])
    train_idx = np.concatenate(train)
    test_idx = np.concatenate(test)
    overlap = train_test_value_overlap(pool.grams[train_idx], pool.grams[test_idx])
    return PreparedSplit(pool, train_idx, test_idx, seed, ratio, overlap)


def pool_from_dataset(ds: RawDataset, cfg: PipelineConfig, stats: PipelineStats | None = None):
    """Tokenize every trace of ``ds``, grouping UNM records by PID first."""
    per_class = [[], []]
    short = 0
    for label, trace in ds.traces():
        if ds.manifest.format == "unm":
            pieces = group_by_pid(trace.records())
        else:
            pieces = [trace]
        for piece in pieces:
            grams = tokenize_ngrams(piece, cfg.n, cfg.stride)
            if len(grams) == 0:
                short += 1
                continue
            per_class[label].append(grams)
    if stats is not None:
        stats.short_traces = short
    normal, intrusion = (
        np.concatenate(c) if c else np.zeros((0, cfg.n), np.int64) for c in per_class
    )
    return normal, intrusion


def run_pipeline(ds: RawDataset, cfg: PipelineConfig, stats: PipelineStats | None = None):
    """Group -> tokenize -> (dedup) -> label -> balance -> split.

    Returns ``(split, original_pool, processed_pool)``.  Both pools are
    unbalanced; ``split.pool`` is the balanced pool the split indexes.  With
    ``cfg.dedup`` off the processed pool is the original one.
    """
    stats = stats if stats is not None else PipelineStats()
    normal, intrusion = pool_from_dataset(ds, cfg, stats)
    original = SequencePool.from_classes(normal, intrusion, "original")
    if cfg.dedup:
        dn, di = dedup_cross_class(normal, intrusion)
        stats.removed_shared = (len(normal) - len(dn), len(intrusion) - len(di))
        processed = SequencePool.from_classes(dn, di, "processed")
    else:
        processed = original
    if cfg.balance == "bootstrap_to_max":
        balanced = bootstrap_balance(processed, derive_seed(cfg.seed, "balance"))
        stats.resampled = len(balanced) - len(processed)
    else:
        balanced = processed
    split = split_train_test(balanced, cfg.ratio, derive_seed(cfg.seed, "split"))
    log.info(
        "%s: %d+%d grams, removed %s shared, %d short traces, train/test value overlap %.3f",
        ds.manifest.name, len(normal), len(intrusion), stats.removed_shared,
        stats.short_traces, split.value_overlap,
    )
    return split, original, processed

