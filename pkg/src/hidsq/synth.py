"""Seeded synthetic syscall corpora with controllable quality defects.

Each class is a first-order Markov chain over syscall ids.  Every state has
``branching`` high-probability successors; ``signature_overlap`` is the
fraction of states whose outgoing row is identical in both chains.  Rows that
are not shared use successor sets disjoint from the normal chain's, so with
overlap 0 no 2-gram (hence no n-gram) is producible by both classes.

Traces are emitted in UNM format: each file interleaves several processes
round-robin under distinct synthetic PIDs.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from .corpus import DatasetManifest, RawDataset, Trace, format_unm, parse_text, write_manifest
from .seeding import derive_rng


@dataclass(frozen=True)
class Defects:
    label_flip_rate: float = 0.0
    duplicate_injection_rate: float = 0.0
    imbalance_factor: float = 1.0  # fraction of intrusion traces kept

    def __post_init__(self):
        if not 0 <= self.label_flip_rate <= 1:
            raise ValueError("label_flip_rate must lie in [0, 1]")
        if not 0 <= self.duplicate_injection_rate < 1:
            raise ValueError("duplicate_injection_rate must lie in [0, 1)")
        if not 0 < self.imbalance_factor <= 1:
            raise ValueError("imbalance_factor must lie in (0, 1]")


@dataclass(frozen=True, eq=False)
class SynthSpec:
    name: str = "synthetic"
    vocab_size: int = 60
    n_traces: int = 200  # per class
    trace_len: tuple[int, int] = (10, 30)
    signature_overlap: float = 0.0
    branching: int = 3
    stickiness: float = 0.9
    traces_per_file: int = 10
    defects: Defects = field(default_factory=Defects)
    seed: int = 0
    normal_chain: np.ndarray | None = None
    intrusion_chain: np.ndarray | None = None

    def __post_init__(self):
        if self.vocab_size < 2:
            raise ValueError("vocab_size must be >= 2")
        if not 0 <= self.signature_overlap <= 1:
            raise ValueError("signature_overlap must lie in [0, 1]")
        if not 0 <= self.stickiness <= 1:
            raise ValueError("stickiness must lie in [0, 1]")
        lo, hi = self.trace_len
        if not 1 <= lo <= hi:
            raise ValueError("trace_len must satisfy 1 <= lo <= hi")
        if not 1 <= self.branching <= self.vocab_size // 2:
            raise ValueError("branching must lie in [1, vocab_size // 2]")
        if self.n_traces < 1 or self.traces_per_file < 1:
            raise ValueError("n_traces and traces_per_file must be >= 1")
        for chain in (self.normal_chain, self.intrusion_chain):
            if chain is not None:
                check_chain(chain, self.vocab_size)

    @classmethod
    def from_mapping(cls, d: dict) -> "SynthSpec":
        d = dict(d)
        if "defects" in d:
            d["defects"] = Defects(**(d["defects"] or {}))
        if "trace_len" in d:
            d["trace_len"] = tuple(d["trace_len"])
        for key in ("normal_chain", "intrusion_chain"):
            if d.get(key) is not None:
                d[key] = np.asarray(d[key], dtype=np.float64)
        return cls(**d)


def check_chain(chain, vocab_size):
    chain = np.asarray(chain, dtype=np.float64)
    if chain.shape != (vocab_size, vocab_size):
        raise ValueError(f"transition table must be {vocab_size}x{vocab_size}")
    if (chain < 0).any():
        raise ValueError("transition probabilities must be non-negative")
    if not np.allclose(chain.sum(axis=1), 1.0, rtol=0, atol=1e-9):
        raise ValueError("transition table rows must sum to 1")


def build_chains(vocab_size, signature_overlap, branching, rng, stickiness=0.9):
    """Transition tables for the two classes.

    The shared states S (``round(signature_overlap * V)`` of them) have
    identical rows in both chains; those rows stay inside S with probability
    ``stickiness`` and leave through one exit state otherwise, so shared
    behaviour shows up as runs long enough to form shared n-grams.  Other
    rows get disjoint successor sets per class.
    """
    V = vocab_size
    normal = np.zeros((V, V))
    intrusion = np.zeros((V, V))
    n_shared = int(round(signature_overlap * V))
    perm = rng.permutation(V)
    shared = np.zeros(V, bool)
    shared[perm[:n_shared]] = True
    inside, outside = np.flatnonzero(shared), np.flatnonzero(~shared)
    for s in range(V):
        if shared[s] and len(outside) and len(inside) >= branching:
            succ = rng.choice(inside, size=branching, replace=False)
            normal[s, succ] = stickiness * rng.dirichlet(np.ones(branching))
            normal[s, rng.choice(outside)] += 1.0 - stickiness
            intrusion[s] = normal[s]
            continue
        succ = rng.choice(V, size=branching, replace=False)
        normal[s, succ] = rng.dirichlet(np.ones(branching))
        if shared[s]:
            intrusion[s] = normal[s]
        else:
            others = np.setdiff1d(np.arange(V), succ)
            alt = rng.choice(others, size=branching, replace=False)
            intrusion[s, alt] = rng.dirichlet(np.ones(branching))
    return normal, intrusion


def chains_for(spec: SynthSpec):
    normal, intrusion = build_chains(
        spec.vocab_size, spec.signature_overlap, spec.branching,
        derive_rng(spec.seed, "chains"), spec.stickiness,
    )
    if spec.normal_chain is not None:
        normal = np.asarray(spec.normal_chain, dtype=np.float64)
    if spec.intrusion_chain is not None:
        intrusion = np.asarray(spec.intrusion_chain, dtype=np.float64)
    return normal, intrusion


def sample_trace(chain, length, rng):
    cdf = np.cumsum(chain, axis=1)
    cdf[:, -1] = 1.0
    u = rng.random(length)
    out = np.empty(length, np.int64)
    s = int(rng.integers(chain.shape[0]))
    out[0] = s
    for t in range(1, length):
        s = int(np.searchsorted(cdf[s], u[t], side="right"))
        out[t] = s
    return out


def interleave(traces, pids) -> str:
    """UNM text with the given traces interleaved round-robin."""
    records = []
    longest = max(len(t) for t in traces)
    for step in range(longest):
        for tr, pid in zip(traces, pids):
            if step < len(tr):
                records.append((pid, int(tr[step])))
    return format_unm(records)


def render_files(spec: SynthSpec) -> dict[str, dict[str, str]]:
    """File texts per class: ``{"normal": {name: text}, "intrusion": {...}}``."""
    chains = chains_for(spec)
    lo, hi = spec.trace_len
    out = {}
    for label, (cls, chain) in enumerate(zip(("normal", "intrusion"), chains)):
        rng = derive_rng(spec.seed, f"traces:{cls}")
        lengths = rng.integers(lo, hi + 1, size=spec.n_traces)
        traces = [sample_trace(chain, int(L), rng) for L in lengths]
        files = {}
        base_pid = 1000 + label * 1_000_000
        for f, start in enumerate(range(0, len(traces), spec.traces_per_file)):
            group = traces[start:start + spec.traces_per_file]
            pids = [base_pid + start + i for i in range(len(group))]
            files[f"{cls}/{cls}-{f:05d}.txt"] = interleave(group, pids)
        out[cls] = files
    return out


def _manifest(spec: SynthSpec, normal_paths, intrusion_paths) -> DatasetManifest:
    return DatasetManifest(
        name=spec.name,
        format="unm",
        normal_paths=tuple(normal_paths),
        intrusion_paths=tuple(intrusion_paths),
        metadata={
            "source": f"synthetic (seed {spec.seed})",
            "context": "first-order Markov syscall chains",
            "year": "n/a",
            "duration": "n/a",
        },
        max_syscall=spec.vocab_size - 1,
    )


def generate(spec: SynthSpec) -> RawDataset:
    files = render_files(spec)
    normal = tuple(parse_text(t, "unm", name) for name, t in sorted(files["normal"].items()))
    intrusion = tuple(parse_text(t, "unm", name) for name, t in sorted(files["intrusion"].items()))
    ds = RawDataset(
        _manifest(spec, sorted(files["normal"]), sorted(files["intrusion"])), normal, intrusion
    )
    d = spec.defects
    if d != Defects():
        ds = inject_defects(ds, d, spec.seed)
        # same order load_dataset() produces for the written corpus
        ds = replace(
            ds,
            normal_traces=tuple(sorted(ds.normal_traces, key=lambda t: t.source_id)),
            intrusion_traces=tuple(sorted(ds.intrusion_traces, key=lambda t: t.source_id)),
        )
    return ds


def write_corpus(spec: SynthSpec, outdir) -> Path:
    """Write the trace files and a manifest under ``outdir``; returns the manifest path.

    Defects are applied to the written files too, so loading the manifest
    reproduces ``generate(spec)``.
    """
    outdir = Path(outdir)
    ds = generate(spec)
    paths = {0: [], 1: []}
    for label, trace in ds.traces():
        path = outdir / trace.source_id
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(trace_text(trace))
        paths[label].append(str(path))
    manifest_path = outdir / "manifest.yaml"
    write_manifest(_manifest(spec, paths[0], paths[1]), manifest_path)
    with open(outdir / "synth-spec.yaml", "w") as fh:
        yaml.safe_dump(spec_to_mapping(spec), fh, sort_keys=False)
    return manifest_path


def trace_text(trace: Trace) -> str:
    return format_unm(trace.records()) if trace.pids is not None else " ".join(map(str, trace.events)) + "\n"


def spec_to_mapping(spec: SynthSpec) -> dict:
    return {
        "name": spec.name,
        "vocab_size": spec.vocab_size,
        "n_traces": spec.n_traces,
        "trace_len": list(spec.trace_len),
        "signature_overlap": spec.signature_overlap,
        "branching": spec.branching,
        "stickiness": spec.stickiness,
        "traces_per_file": spec.traces_per_file,
        "defects": {
            "label_flip_rate": spec.defects.label_flip_rate,
            "duplicate_injection_rate": spec.defects.duplicate_injection_rate,
            "imbalance_factor": spec.defects.imbalance_factor,
        },
        "seed": spec.seed,
    }


def _relabel(trace: Trace, suffix: str, pid_offset: int | None) -> Trace:
    pids = trace.pids
    if pids is not None and pid_offset is not None:
        pids = tuple(p + pid_offset for p in pids)
    stem, dot, ext = trace.source_id.rpartition(".")
    sid = f"{stem}{suffix}.{ext}" if dot else trace.source_id + suffix
    return Trace(sid, trace.events, pids)


def duplicate_count(n: int, rate: float) -> int:
    """Copies to add so that copies make up ``rate`` of the grown collection."""
    return int(round(rate * n / (1.0 - rate))) if rate > 0 else 0


def inject_defects(ds: RawDataset, defects: Defects, seed: int) -> RawDataset:
    """Apply label flips, then intrusion down-sampling, then duplicate injection.

    * flips move ``round(rate * count)`` whole traces of each class to the other;
    * down-sampling keeps ``round(imbalance_factor * count)`` intrusion traces;
    * duplication appends ``round(r * N / (1 - r))`` copies per class, so the
      copies form a fraction ``r`` of the class.  Copies get fresh PIDs.
    """
    rng = derive_rng(seed, "defects")
    normal, intrusion = list(ds.normal_traces), list(ds.intrusion_traces)

    if defects.label_flip_rate > 0:
        fn = rng.permutation(len(normal))[: int(round(defects.label_flip_rate * len(normal)))]
        fi = rng.permutation(len(intrusion))[: int(round(defects.label_flip_rate * len(intrusion)))]
        to_i = [_relabel(normal[i], "#flip", None) for i in sorted(fn)]
        to_n = [_relabel(intrusion[i], "#flip", None) for i in sorted(fi)]
        fn_set, fi_set = set(fn.tolist()), set(fi.tolist())
        normal = [t for i, t in enumerate(normal) if i not in fn_set] + to_n
        intrusion = [t for i, t in enumerate(intrusion) if i not in fi_set] + to_i

    if defects.imbalance_factor < 1:
        keep = int(round(defects.imbalance_factor * len(intrusion)))
        idx = np.sort(rng.permutation(len(intrusion))[:keep])
        intrusion = [intrusion[i] for i in idx]

    if defects.duplicate_injection_rate > 0:
        all_pids = [p for t in normal + intrusion if t.pids for p in t.pids]
        next_pid = (max(all_pids) + 1) if all_pids else 0
        grown = []
        for cls in (normal, intrusion):
            d = duplicate_count(len(cls), defects.duplicate_injection_rate)
            if d <= len(cls):
                src = rng.permutation(len(cls))[:d]
            else:
                src = rng.integers(0, len(cls), size=d)
            copies = []
            for k, i in enumerate(src):
                copies.append(_relabel(cls[int(i)], f"#dup{k}", next_pid))
                if cls[int(i)].pids:
                    next_pid += max(cls[int(i)].pids) + 1
            grown.append(cls + copies)
        normal, intrusion = grown

    return replace(ds, normal_traces=tuple(normal), intrusion_traces=tuple(intrusion))


def distinct_gram_dataset(n_normal: int, n_intrusion: int, n: int = 6, seed: int = 0,
                          name: str = "distinct-grams") -> RawDataset:
    """Traces of exactly one n-gram each, all distinct across both classes."""
    rng = derive_rng(seed, "distinct")
    total = n_normal + n_intrusion
    seen = set()
    grams = []
    while len(grams) < total:
        g = tuple(int(v) for v in rng.integers(0, 256, size=n))
        if g not in seen:
            seen.add(g)
            grams.append(g)
    traces = [
        Trace(f"{'normal' if i < n_normal else 'intrusion'}/{i:05d}.txt", g, (i + 1,) * n)
        for i, g in enumerate(grams)
    ]
    manifest = DatasetManifest(
        name, "unm",
        tuple(t.source_id for t in traces[:n_normal]),
        tuple(t.source_id for t in traces[n_normal:]),
        max_syscall=255,
    )
    return RawDataset(manifest, tuple(traces[:n_normal]), tuple(traces[n_normal:]))
