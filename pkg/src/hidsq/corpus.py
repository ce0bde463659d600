"""Trace ingestion: UNM / ADFA-LD parsers, dataset manifests and validation.

UNM files carry one ``pid syscall`` pair per line; records from concurrently
running processes are interleaved.  ADFA-LD files hold a single process trace
as whitespace-separated syscall numbers with no PID.
"""

from __future__ import annotations

import glob
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, NamedTuple, Sequence

import yaml

FORMATS = ("unm", "adfa")
DEFAULT_MAX_SYSCALL = 512
METADATA_KEYS = ("year", "duration", "context", "source", "reputation", "relevance", "timeliness")


class ParseError(ValueError):
    """Malformed trace text.  ``line`` (UNM) or ``position`` (ADFA) locate the fault."""

    def __init__(self, message, *, line=None, position=None, path=None):
        self.line = line
        self.position = position
        self.path = path
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if position is not None:
            where.append(f"token {position}")
        prefix = ":".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class ManifestError(ValueError):
    pass


class SyscallRecord(NamedTuple):
    pid: int
    syscall: int


@dataclass(frozen=True)
class Trace:
    """Ordered syscall events of one file (ADFA) or one file/process (UNM).

    ``pids`` is kept only for UNM input, where it runs parallel to ``events``
    so that the preprocessing stage can regroup records by process.
    """

    source_id: str
    events: tuple[int, ...]
    pids: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.pids is not None and len(self.pids) != len(self.events):
            raise ValueError("pids and events differ in length")

    def __len__(self):
        return len(self.events)

    def records(self) -> list[SyscallRecord]:
        if self.pids is None:
            raise ValueError(f"{self.source_id}: trace carries no PIDs")
        return [SyscallRecord(p, s) for p, s in zip(self.pids, self.events)]


def _parse_int(tok: str) -> int:
    # int() accepts "+5", "1_0" and unicode digits; the formats only allow plain decimal
    if not tok.isascii() or not tok.isdigit():
        if tok.startswith("-") and tok[1:].isascii() and tok[1:].isdigit():
            raise ValueError(f"negative value {tok!r}")
        raise ValueError(f"non-integer token {tok!r}")
    return int(tok)


def parse_unm_trace(text: str) -> list[SyscallRecord]:
    records = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        toks = line.split()
        if not toks:
            continue
        if len(toks) != 2:
            raise ParseError(f"expected 'pid syscall', got {len(toks)} token(s)", line=lineno)
        try:
            records.append(SyscallRecord(_parse_int(toks[0]), _parse_int(toks[1])))
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno) from None
    return records


def parse_adfa_trace(text: str, source_id: str = "<string>") -> Trace:
    events = []
    for pos, tok in enumerate(text.split()):
        try:
            events.append(_parse_int(tok))
        except ValueError as exc:
            raise ParseError(str(exc), position=pos) from None
    return Trace(source_id, tuple(events))


def format_unm(records: Sequence[SyscallRecord]) -> str:
    return "".join(f"{pid} {sc}\n" for pid, sc in records)


def format_adfa(trace: Trace) -> str:
    return " ".join(map(str, trace.events)) + ("\n" if trace.events else "")


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    format: str
    normal_paths: tuple[str, ...]
    intrusion_paths: tuple[str, ...]
    metadata: dict = field(default_factory=dict)
    max_syscall: int = DEFAULT_MAX_SYSCALL
    pipeline: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.format not in FORMATS:
            raise ManifestError(f"format must be one of {FORMATS}, got {self.format!r}")
        shared = set(map(os.path.abspath, self.normal_paths)) & set(
            map(os.path.abspath, self.intrusion_paths)
        )
        if shared:
            raise ManifestError(f"paths listed as both normal and intrusion: {sorted(shared)}")
        if self.max_syscall <= 0:
            raise ManifestError("max_syscall must be positive")


def _expand(patterns, base: Path) -> tuple[str, ...]:
    out = []
    for pat in patterns:
        full = pat if os.path.isabs(pat) else str(base / pat)
        if glob.has_magic(full):
            hits = sorted(glob.glob(full))
            if not hits:
                raise ManifestError(f"pattern matched no files: {pat}")
            out.extend(hits)
        else:
            out.append(full)
    return tuple(sorted(set(out)))


def read_manifest(path) -> DatasetManifest:
    """Load a YAML manifest.  Relative paths and globs resolve against its directory."""
    path = Path(path)
    with open(path) as fh:
        doc = yaml.safe_load(fh) or {}
    if not isinstance(doc, dict):
        raise ManifestError(f"{path}: top level must be a mapping")
    try:
        name, fmt = doc["name"], doc["format"]
    except KeyError as exc:
        raise ManifestError(f"{path}: missing required key {exc.args[0]!r}") from None
    base = path.parent
    unknown = set(doc) - {"name", "format", "normal", "intrusion", "metadata", "max_syscall", "pipeline"}
    if unknown:
        raise ManifestError(f"{path}: unknown keys {sorted(unknown)}")
    return DatasetManifest(
        name=str(name),
        format=str(fmt),
        normal_paths=_expand(doc.get("normal", []), base),
        intrusion_paths=_expand(doc.get("intrusion", []), base),
        metadata={str(k): str(v) for k, v in (doc.get("metadata") or {}).items()},
        max_syscall=int(doc.get("max_syscall", DEFAULT_MAX_SYSCALL)),
        pipeline=dict(doc.get("pipeline") or {}),
    )


def write_manifest(manifest: DatasetManifest, path) -> None:
    path = Path(path)
    base = path.parent.resolve()

    def rel(p):
        try:
            return str(Path(p).resolve().relative_to(base))
        except ValueError:
            return str(Path(p).resolve())

    doc = {
        "name": manifest.name,
        "format": manifest.format,
        "max_syscall": manifest.max_syscall,
        "normal": [rel(p) for p in manifest.normal_paths],
        "intrusion": [rel(p) for p in manifest.intrusion_paths],
        "metadata": dict(manifest.metadata),
    }
    if manifest.pipeline:
        doc["pipeline"] = dict(manifest.pipeline)
    with open(path, "w") as fh:
        yaml.safe_dump(doc, fh, sort_keys=False)


@dataclass(frozen=True)
class RawDataset:
    manifest: DatasetManifest
    normal_traces: tuple[Trace, ...]
    intrusion_traces: tuple[Trace, ...]
    dropped_empty: tuple[str, ...] = ()

    def traces(self) -> Iterator[tuple[int, Trace]]:
        for t in self.normal_traces:
            yield 0, t
        for t in self.intrusion_traces:
            yield 1, t


def parse_text(text: str, fmt: str, source_id: str) -> Trace:
    if fmt == "adfa":
        return parse_adfa_trace(text, source_id)
    recs = parse_unm_trace(text)
    return Trace(source_id, tuple(r.syscall for r in recs), tuple(r.pid for r in recs))


def _load_file(path: str, fmt: str) -> Trace:
    try:
        with open(path, encoding="ascii", errors="strict") as fh:
            text = fh.read()
    except OSError as exc:
        raise OSError(f"cannot read trace file {path}: {exc.strerror or exc}") from exc
    except UnicodeDecodeError as exc:
        raise ParseError(f"non-ASCII content ({exc.reason})", path=path) from None
    try:
        return parse_text(text, fmt, path)
    except ParseError as exc:
        raise ParseError(str(exc), line=exc.line, position=exc.position, path=path) from None


def load_dataset(manifest: DatasetManifest, workers: int = 1) -> RawDataset:
    """Parse every file of ``manifest``; empty files are dropped and recorded.

    Files are loaded in lexicographic path order per class, so the result does
    not depend on ``workers``.
    """
    classes = []
    dropped = []
    for paths in (manifest.normal_paths, manifest.intrusion_paths):
        paths = sorted(paths)
        if workers > 1:
            with ThreadPoolExecutor(workers) as ex:
                traces = list(ex.map(lambda p: _load_file(p, manifest.format), paths))
        else:
            traces = [_load_file(p, manifest.format) for p in paths]
        kept = []
        for t in traces:
            if t.events:
                kept.append(t)
            else:
                dropped.append(t.source_id)
        classes.append(tuple(kept))
    return RawDataset(manifest, classes[0], classes[1], tuple(dropped))


@dataclass
class ValidationReport:
    trace_counts: tuple[int, int]
    event_counts: tuple[int, int]
    out_of_range: list[tuple[str, int, int]]  # (source_id, event index, value)
    empty_traces: list[str]
    max_syscall: int

    @property
    def n_violations(self) -> int:
        return len(self.out_of_range)

    def lines(self) -> list[str]:
        out = [
            f"normal traces: {self.trace_counts[0]}  events: {self.event_counts[0]}",
            f"intrusion traces: {self.trace_counts[1]}  events: {self.event_counts[1]}",
            f"empty traces dropped: {len(self.empty_traces)}",
            f"syscalls outside [0, {self.max_syscall}]: {self.n_violations}",
        ]
        out.extend(f"  {src}[{i}] = {v}" for src, i, v in self.out_of_range[:50])
        if self.n_violations > 50:
            out.append(f"  ... {self.n_violations - 50} more")
        return out


def validate_dataset(ds: RawDataset, max_syscall: int) -> ValidationReport:
    if max_syscall <= 0:
        raise ValueError("max_syscall must be positive")
    bad = []
    for cls in (ds.normal_traces, ds.intrusion_traces):
        for t in cls:
            bad.extend((t.source_id, i, v) for i, v in enumerate(t.events) if v > max_syscall)
    empties = list(ds.dropped_empty) + [
        t.source_id for _, t in ds.traces() if not t.events
    ]
    return ValidationReport(
        trace_counts=(len(ds.normal_traces), len(ds.intrusion_traces)),
        event_counts=(
            sum(len(t) for t in ds.normal_traces),
            sum(len(t) for t in ds.intrusion_traces),
        ),
        out_of_range=bad,
        empty_traces=empties,
        max_syscall=max_syscall,
    )
