import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hidsq.corpus import DatasetManifest, RawDataset, Trace
from hidsq.metrics import MetricsReport
from hidsq.preprocess import PipelineConfig, SequencePool, run_pipeline
from hidsq.quality import (
    UNDECLARED,
    before_after,
    class_balance,
    consistency_check,
    cross_class_overlap,
    duplication_rate,
    scorecard,
    variety,
)
from hidsq.synth import Defects, SynthSpec, distinct_gram_dataset, generate, inject_defects

A, B, C, D = (1, 1), (2, 2), (3, 3), (4, 4)


def test_duplication_examples():
    assert duplication_rate([A, A, B, C]) == 0.25
    assert duplication_rate([A, B, C]) == 0.0
    assert duplication_rate([A] * 8) == pytest.approx(1 - 1 / 8)
    with pytest.raises(ValueError):
        duplication_rate(np.empty((0, 2), np.int64))


@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=1, max_size=40), st.randoms())
def test_duplication_permutation_invariant(seqs, rnd):
    shuffled = list(seqs)
    rnd.shuffle(shuffled)
    assert duplication_rate(seqs) == duplication_rate(shuffled)
    assert duplication_rate(seqs) == 1 - len(set(seqs)) / len(seqs)


def test_overlap_examples():
    assert cross_class_overlap([A, B, C], [B, C, D]) == 0.5
    assert cross_class_overlap([A, B], [C, D]) == 0.0
    assert cross_class_overlap([A, B, B], [B, A]) == 1.0
    with pytest.raises(ValueError):
        cross_class_overlap([A], np.empty((0, 2), np.int64))


def _pool(n0, n1):
    return SequencePool.from_classes(np.zeros((n0, 2), np.int64), np.ones((n1, 2), np.int64))


def test_class_balance_examples():
    assert class_balance(_pool(7000, 7000)) == 1.0
    assert class_balance(_pool(100, 40)) == 0.4
    assert class_balance(_pool(1, 1000)) == 0.001
    with pytest.raises(ValueError):
        class_balance(_pool(3, 0))


def test_variety_examples():
    rng = np.random.default_rng(0)
    seqs = rng.integers(1, 11, (500, 6))
    seqs[0] = np.arange(1, 7)
    seqs[1] = np.arange(5, 11)
    assert variety(seqs, 100).vocabulary_coverage == pytest.approx(0.10)
    assert variety([A] * 5, 10).distinct_grams == 1
    full = np.array([[v, (v + 1) % 4] for v in range(4)])
    assert variety(full, 4).position_coverage == [1.0, 1.0]
    with pytest.raises(ValueError):
        variety(full, 0)


def _ds(fmt, normal, intrusion=()):
    m = DatasetManifest("q", fmt, tuple(t.source_id for t in normal), tuple(t.source_id for t in intrusion))
    return RawDataset(m, tuple(normal), tuple(intrusion))


def test_consistency_examples():
    assert consistency_check(_ds("adfa", [Trace("a", (1, 2, 3))]), 10) == 0
    assert consistency_check(_ds("adfa", [Trace("a", (1, 11, 3))]), 10) == 1
    # same pid in two files: counted for unm, skipped for adfa (no pids)
    split = [Trace("a", (1, 2), (5, 5)), Trace("b", (3,), (5,))]
    assert consistency_check(_ds("unm", split), 10) == 1
    assert consistency_check(_ds("adfa", [Trace("a", (1, 2)), Trace("b", (3,))]), 10) == 0


def _run(ds, **cfg):
    split, original, processed = run_pipeline(ds, PipelineConfig(**cfg))
    return scorecard(ds, (original, processed), split)


def test_scorecard_disjoint_signatures():
    ds = generate(SynthSpec(vocab_size=30, n_traces=40, signature_overlap=0.0, seed=2))
    sc = _run(ds)
    assert sc.cross_class_overlap == 0.0
    assert sc.processed_cross_class_overlap == 0.0
    assert sc.declared["context"] == "first-order Markov syscall chains"
    assert sc.declared["reputation"] == UNDECLARED
    for k, v in sc.row().items():
        if isinstance(v, float):
            assert 0.0 <= v <= 1.0, k


def test_scorecard_injected_duplication_exact():
    # 99 distinct + 33 copies = 132: the only class sizes where 0.25 is reachable exactly are multiples of 3
    ds = inject_defects(distinct_gram_dataset(99, 99), Defects(duplicate_injection_rate=0.25), 0)
    assert _run(ds).duplication_rate_per_class == (0.25, 0.25)
    ds = inject_defects(distinct_gram_dataset(100, 100), Defects(duplicate_injection_rate=0.25), 0)
    for measured in _run(ds).duplication_rate_per_class:
        assert abs(measured - 0.25) <= 1 / 133


def test_scorecard_missing_metadata():
    ds = distinct_gram_dataset(5, 5)
    sc = _run(ds)
    assert set(sc.declared.values()) == {UNDECLARED}
    assert sc.row()["declared_timeliness"] == UNDECLARED


def test_scorecard_processed_overlap_not_higher_and_deterministic():
    ds = generate(SynthSpec(vocab_size=20, n_traces=60, signature_overlap=0.5, seed=4))
    a, b = _run(ds, seed=3), _run(ds, seed=3)
    assert a.row() == b.row()
    assert a.cross_class_overlap > 0
    assert a.processed_cross_class_overlap == 0.0 <= a.cross_class_overlap


def _rep(ds, prov, recall, fpr):
    return MetricsReport(ds, prov, "m", 0, 0, recall, fpr, 0, 0.5, 0, 1e-4, 0, 0, 0, 0)


def test_before_after_examples():
    cmp = before_after([
        _rep("x", "original", 0.70, 0.20), _rep("x", "processed", 0.854, 0.01),
        _rep("y", "original", 0.5, 0.1), _rep("y", "processed", 0.5, 0.1),
    ]).by_dataset()
    assert cmp["x"].fpr_ratio == pytest.approx(20.0)
    assert round(cmp["x"].recall_ratio, 2) == 1.22
    assert cmp["y"].fpr_ratio == 1.0 and cmp["y"].recall_ratio == 1.0


def test_before_after_missing_provenance():
    with pytest.raises(ValueError, match="lonely"):
        before_after([_rep("lonely", "original", 0.5, 0.1)])
