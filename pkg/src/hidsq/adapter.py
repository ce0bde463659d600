"""Line protocol for scoring sequences with an external classifier process.

Parent to child (stdin)::

    HELLO 1 <n>
    TRAIN <count>
    <label>\\t<s1> <s2> ... <sn>      (count lines)
    TEST <count>
    <s1> <s2> ... <sn>               (count lines)
    END

Child to parent (stdout): ``READY`` after the HELLO line, then one real score
per TEST record in order, higher meaning more intrusive.  Anything the child
writes to stderr is captured and attached to errors.
"""

from __future__ import annotations

import math
import queue
import shlex
import subprocess
import threading
import time
from dataclasses import dataclass

import numpy as np

from .metrics import MetricsReport, evaluate

PROTOCOL_VERSION = 1
_EOF = object()


class AdapterError(RuntimeError):
    def __init__(self, message, diagnostics=""):
        if diagnostics:
            message = f"{message}\n--- child stderr ---\n{diagnostics}"
        super().__init__(message)
        self.diagnostics = diagnostics


class HandshakeError(AdapterError):
    pass


class ProtocolError(AdapterError):
    def __init__(self, message, diagnostics="", line=None):
        super().__init__(message, diagnostics)
        self.line = line


class AdapterTimeout(AdapterError):
    pass


class ChildTerminated(AdapterError):
    pass


@dataclass(frozen=True)
class ExternalModelSpec:
    command: str
    timeout: float = 60.0
    name: str = "external"
    threshold: float = 0.5

    def __post_init__(self):
        if not self.command or not self.command.strip():
            raise ValueError("external model command must be non-empty")
        if not self.timeout > 0:
            raise ValueError("timeout must be positive")

    def argv(self):
        return shlex.split(self.command)


def _seq(row) -> str:
    return " ".join(str(int(v)) for v in row)


def encode_session(X_train, y_train, X_test) -> list[str]:
    X_train, X_test = np.asarray(X_train), np.asarray(X_test)
    n = X_test.shape[1] if X_test.ndim == 2 else X_train.shape[1]
    lines = [f"HELLO {PROTOCOL_VERSION} {n}"]
    body = [f"TRAIN {len(X_train)}"]
    body += [f"{int(lab)}\t{_seq(row)}" for row, lab in zip(X_train, y_train)]
    body.append(f"TEST {len(X_test)}")
    body += [_seq(row) for row in X_test]
    body.append("END")
    return lines + body


def parse_score(text: str, line: int) -> float:
    try:
        value = float(text.strip())
    except ValueError:
        raise ProtocolError(f"response line {line}: not a number: {text.strip()!r}", line=line) from None
    if not math.isfinite(value):
        raise ProtocolError(f"response line {line}: non-finite score {text.strip()!r}", line=line)
    return value


class _Child:
    def __init__(self, argv, deadline):
        self.deadline = deadline
        try:
            self.proc = subprocess.Popen(
                argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE, stderr=subprocess.PIPE,
                text=True, bufsize=1,
            )
        except OSError as exc:
            raise HandshakeError(f"cannot start external model {argv!r}: {exc}") from exc
        self.lines: queue.Queue = queue.Queue()
        self._err: list[str] = []
        threading.Thread(target=self._pump_out, daemon=True).start()
        self._err_thread = threading.Thread(target=self._pump_err, daemon=True)
        self._err_thread.start()

    def _pump_out(self):
        for line in self.proc.stdout:
            self.lines.put(line.rstrip("\r\n"))
        self.lines.put(_EOF)

    def _pump_err(self):
        for line in self.proc.stderr:
            self._err.append(line)

    def diagnostics(self) -> str:
        self._err_thread.join(timeout=0.5)
        return "".join(self._err)[-4000:]

    def remaining(self) -> float:
        return max(0.0, self.deadline - time.monotonic())

    def readline(self):
        try:
            return self.lines.get(timeout=self.remaining())
        except queue.Empty:
            self.kill()
            raise AdapterTimeout("external model timed out", self.diagnostics()) from None

    def send(self, lines):
        """Write all lines on a helper thread so a stalled reader cannot hang us."""
        failure = []

        def run():
            try:
                for line in lines:
                    self.proc.stdin.write(line + "\n")
                self.proc.stdin.close()
            except (BrokenPipeError, OSError) as exc:
                failure.append(exc)

        t = threading.Thread(target=run, daemon=True)
        t.start()
        return t, failure

    def kill(self):
        if self.proc.poll() is None:
            self.proc.kill()
        self.proc.wait()

    def exit_code(self):
        try:
            return self.proc.wait(timeout=self.remaining())
        except subprocess.TimeoutExpired:
            self.kill()
            raise AdapterTimeout("external model did not exit after END", self.diagnostics()) from None


def run_external(spec: ExternalModelSpec, X_train, y_train, X_test) -> np.ndarray:
    """Run one protocol session and return the test scores in order."""
    X_test = np.asarray(X_test)
    lines = encode_session(X_train, y_train, X_test)
    child = _Child(spec.argv(), time.monotonic() + spec.timeout)
    try:
        child.proc.stdin.write(lines[0] + "\n")
        child.proc.stdin.flush()
    except (BrokenPipeError, OSError):
        child.kill()
        raise HandshakeError("external model closed its input before HELLO", child.diagnostics()) from None
    reply = child.readline()
    if reply is _EOF:
        child.kill()
        raise HandshakeError("external model exited before READY", child.diagnostics())
    if reply.strip() != "READY":
        child.kill()
        raise HandshakeError(f"expected READY, got {reply!r}", child.diagnostics())

    writer, failure = child.send(lines[1:])
    expected = len(X_test)
    scores = []
    for k in range(1, expected + 1):
        line = child.readline()
        if line is _EOF:
            code = child.exit_code()
            if code != 0:
                raise ChildTerminated(
                    f"external model exited with status {code} after {k - 1} of {expected} scores",
                    child.diagnostics(),
                )
            raise ProtocolError(f"count mismatch: expected {expected} scores, got {k - 1}",
                                child.diagnostics(), line=k)
        try:
            scores.append(parse_score(line, k))
        except ProtocolError as exc:
            child.kill()
            raise ProtocolError(str(exc), child.diagnostics(), line=k) from None
    extra = []
    while True:
        line = child.readline()
        if line is _EOF:
            break
        if line.strip():
            extra.append(line)
    code = child.exit_code()
    writer.join(timeout=child.remaining())
    if extra:
        raise ProtocolError(
            f"count mismatch: expected {expected} scores, got {expected + len(extra)}",
            child.diagnostics(), line=expected + 1,
        )
    if code != 0:
        raise ChildTerminated(f"external model exited with status {code}", child.diagnostics())
    if failure:
        raise ChildTerminated(f"external model stopped reading input: {failure[0]}", child.diagnostics())
    return np.asarray(scores, dtype=np.float64)


def evaluate_external(spec: ExternalModelSpec, split, dataset: str = "", provenance: str = "") -> MetricsReport:
    scores = run_external(spec, split.X_train, split.y_train, split.X_test)
    pred = (scores > spec.threshold).astype(np.int64)
    return evaluate(split.y_test, scores, pred, dataset=dataset, provenance=provenance,
                    model=spec.name, n_train=len(split.y_train))


def conformance_checks(spec: ExternalModelSpec):
    """Run a tiny fixed session; yield ``(check, passed, detail)`` tuples."""
    X_train = np.array([[1, 2, 3, 4, 5, 6], [7, 8, 9, 10, 11, 12]])
    y_train = np.array([0, 1])
    X_test = np.array([[1, 2, 3, 4, 5, 6], [7, 8, 9, 10, 11, 12], [0, 0, 0, 0, 0, 0]])
    try:
        scores = run_external(spec, X_train, y_train, X_test)
    except HandshakeError as exc:
        return [("handshake", False, str(exc).splitlines()[0])]
    except AdapterError as exc:
        return [("handshake", True, "READY received"),
                ("session", False, f"{type(exc).__name__}: {str(exc).splitlines()[0]}")]
    return [
        ("handshake", True, "READY received"),
        ("session", True, f"{len(scores)} scores for {len(X_test)} records"),
        ("ordering", bool(scores[1] > scores[0]), f"scores {scores[0]:g} / {scores[1]:g} for normal / intrusion"),
    ]
