"""Reference external model: exact lookup of training sequences.

Run as ``python -m hidsq.echo_model``.  A test sequence seen in training
scores the mean label it was seen with; anything unseen scores 0.5.

``--fault`` makes it misbehave in one specific way, for exercising the
parent's error handling.
"""

import argparse
import sys
import time

FAULTS = ("none", "bad-handshake", "non-numeric", "exit-mid-test", "short", "extra", "hang", "crash")


def serve(inp, out, fault="none"):
    header = inp.readline().split()
    if len(header) != 3 or header[0] != "HELLO":
        print(f"bad header {header!r}", file=sys.stderr)
        return 2
    if fault == "bad-handshake":
        out.write("HELLO?\n")
        out.flush()
        return 0
    if fault == "crash":
        print("model failed to load", file=sys.stderr)
        return 3
    out.write("READY\n")
    out.flush()

    table: dict[str, list[int]] = {}
    kind, count = inp.readline().split()
    assert kind == "TRAIN"
    for _ in range(int(count)):
        label, seq = inp.readline().rstrip("\n").split("\t")
        table.setdefault(seq.strip(), []).append(int(label))

    kind, count = inp.readline().split()
    assert kind == "TEST"
    count = int(count)
    for i in range(count):
        seq = inp.readline().strip()
        if fault == "exit-mid-test" and i == count // 2:
            print("dying mid-test", file=sys.stderr)
            out.flush()
            return 1
        if fault == "hang" and i == count // 2:
            out.flush()
            time.sleep(3600)
        if fault == "short" and i == count - 1:
            break
        seen = table.get(seq)
        score = sum(seen) / len(seen) if seen else 0.5
        out.write("n/a\n" if fault == "non-numeric" and i == 1 else f"{score!r}\n")
    if fault == "extra":
        out.write("0.5\n")
    out.flush()
    inp.readline()  # END
    return 0


def main(argv=None):
    ap = argparse.ArgumentParser(prog="python -m hidsq.echo_model")
    ap.add_argument("--fault", choices=FAULTS, default="none")
    args = ap.parse_args(argv)
    return serve(sys.stdin, sys.stdout, args.fault)


if __name__ == "__main__":
    sys.exit(main())
