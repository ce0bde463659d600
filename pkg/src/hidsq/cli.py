"""Command-line entry point.

Exit codes: 0 success, 1 a data/cell failure, 2 usage or configuration error.
The output directory is ``--out``, else ``$HIDSQ_OUTPUT_DIR``, else ``./hidsq-out``.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import re
import sys
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .adapter import AdapterError, ExternalModelSpec, conformance_checks, run_external
from .corpus import ManifestError, ParseError, load_dataset, read_manifest, validate_dataset
from .metrics import MetricsReport, evaluate, provenance_ratios, roc_curve
from .models import MODEL_KINDS, REGISTRY, ModelSpec, fit, save_model
from .models.base import ConvergenceWarning
from .plotting import (
    bars_figure,
    histogram_figure,
    pool_rows_to_classes,
    read_csv,
    roc_figure,
    roc_rows_to_curves,
)
from .preprocess import PipelineConfig, run_pipeline
from .quality import scorecard
from .seeding import derive_seed
from .synth import SynthSpec, spec_to_mapping, write_corpus

log = logging.getLogger("hidsq")

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2
OUTPUT_ENV = "HIDSQ_OUTPUT_DIR"
DEFAULT_OUTPUT = "hidsq-out"
PROVENANCES = (("original", False), ("processed", True))


class UsageError(Exception):
    pass


def output_dir(arg) -> Path:
    return Path(arg or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT)


def parse_models(text: str) -> list[str]:
    if text.strip() == "all":
        return list(MODEL_KINDS)
    names = [t.strip() for t in text.split(",") if t.strip()]
    if not names:
        raise argparse.ArgumentTypeError("no models selected")
    unknown = [n for n in names if n not in MODEL_KINDS]
    if unknown:
        raise argparse.ArgumentTypeError(
            f"unknown model(s) {', '.join(unknown)}; choose from {', '.join(MODEL_KINDS)} or 'all'"
        )
    return list(dict.fromkeys(names))


def parse_hyperparams(items) -> dict[str, dict]:
    """``kind.key=value`` pairs, values parsed as YAML scalars."""
    out: dict[str, dict] = {}
    for item in items or ():
        m = re.fullmatch(r"(\w+)\.(\w+)=(.*)", item)
        if not m:
            raise UsageError(f"bad --hp {item!r}; expected kind.key=value")
        kind, key, raw = m.groups()
        if kind not in REGISTRY:
            raise UsageError(f"--hp names unknown model {kind!r}")
        if key not in REGISTRY[kind].defaults:
            raise UsageError(f"--hp: {kind} has no hyperparameter {key!r}")
        out.setdefault(kind, {})[key] = yaml.safe_load(raw)
    return out


def parse_externals(items, timeout) -> list[ExternalModelSpec]:
    specs = []
    for item in items or ():
        name, sep, command = item.partition("=")
        name = name.strip()
        if not sep or not name:
            raise UsageError(f"bad --external {item!r}; expected NAME=COMMAND")
        if name in MODEL_KINDS:
            raise UsageError(f"external model name {name!r} clashes with a native model")
        try:
            specs.append(ExternalModelSpec(command, timeout=timeout, name=name))
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    return specs


def _safe_name(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", name) or "dataset"


def write_csv(path, columns, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([r.get(c, "") for c in columns])
    path.write_text(buf.getvalue())
    return path


ROC_COLUMNS = ["dataset", "provenance", "model", "fpr", "tpr", "threshold"]
ERROR_COLUMNS = ["dataset", "provenance", "model", "stage", "error"]
BEFORE_AFTER_COLUMNS = ["dataset", "avg_recall_orig", "avg_recall_proc", "avg_fpr_orig",
                        "avg_fpr_proc", "fpr_ratio", "recall_ratio", "eps"]


# -- pipeline ---------------------------------------------------------------

@dataclass
class RunConfig:
    manifests: list
    models: list[str]
    out: Path
    seed: int = 0
    overrides: dict = field(default_factory=dict)
    hyperparams: dict = field(default_factory=dict)
    externals: list[ExternalModelSpec] = field(default_factory=list)
    save_models: bool = False


@dataclass
class RunResult:
    reports: list[MetricsReport] = field(default_factory=list)
    roc_rows: list[dict] = field(default_factory=list)
    scorecards: list[dict] = field(default_factory=list)
    errors: list[dict] = field(default_factory=list)


def _error(res, ds, prov, model, stage, exc):
    msg = f"{type(exc).__name__}: {exc}".splitlines()[0]
    res.errors.append({"dataset": ds, "provenance": prov, "model": model, "stage": stage, "error": msg})
    log.error("%s/%s/%s failed at %s: %s", ds, prov, model, stage, msg)


def _cell_name(cell) -> str:
    return cell.name if isinstance(cell, ExternalModelSpec) else cell


def _score_cell(cfg: RunConfig, cell, split, name, prov):
    if isinstance(cell, ExternalModelSpec):
        scores = run_external(cell, split.X_train, split.y_train, split.X_test)
        pred = (scores > cell.threshold).astype(np.int64)
        return scores, pred, []
    spec = ModelSpec(cell, cfg.hyperparams.get(cell, {}), seed=derive_seed(cfg.seed, f"model:{cell}"))
    model = fit(spec, split.X_train, split.y_train)
    if cfg.save_models:
        save_model(model, cfg.out / "models" / _safe_name(name) / prov / f"{cell}.json")
    notes = [] if model.summary.converged else [f"did not converge in {model.summary.iterations} iterations"]
    return model.score(split.X_test), model.predict(split.X_test), notes


def run_dataset(cfg: RunConfig, manifest, res: RunResult):
    name = manifest.name
    cells = list(cfg.models) + list(cfg.externals)
    try:
        base = PipelineConfig.from_mapping(manifest.pipeline, seed=cfg.seed, **cfg.overrides)
        ds = load_dataset(manifest)
    except (OSError, ValueError) as exc:
        for prov, _ in PROVENANCES:
            for cell in cells:
                _error(res, name, prov, _cell_name(cell), "load", exc)
        return
    for prov, dedup in PROVENANCES:
        try:
            split, original, processed = run_pipeline(ds, replace(base, dedup=dedup))
        except ValueError as exc:
            for cell in cells:
                _error(res, name, prov, _cell_name(cell), "pipeline", exc)
            continue
        if dedup:
            pools = cfg.out / "pools" / _safe_name(name)
            pools.mkdir(parents=True, exist_ok=True)
            (pools / "original.csv").write_text(original.to_csv())
            (pools / "processed.csv").write_text(processed.to_csv())
            res.scorecards.append(scorecard(ds, (original, processed), split).row())
        for cell in cells:
            label = _cell_name(cell)
            try:
                scores, pred, notes = _score_cell(cfg, cell, split, name, prov)
                rep = evaluate(split.y_test, scores, pred, dataset=name, provenance=prov,
                               model=label, n_train=len(split.y_train))
                curve = roc_curve(split.y_test, scores)
            except (ValueError, AdapterError, ArithmeticError) as exc:
                _error(res, name, prov, label, "model", exc)
                continue
            rep.warnings = "; ".join(w for w in [rep.warnings, *notes] if w)
            res.reports.append(rep)
            for f, t, th in zip(curve.fpr.tolist(), curve.tpr.tolist(), curve.thresholds.tolist()):
                res.roc_rows.append({"dataset": name, "provenance": prov, "model": label,
                                     "fpr": f, "tpr": t, "threshold": th})


def run(cfg: RunConfig) -> RunResult:
    """Every manifest x provenance x model; writes CSVs, figures and summary.md under ``cfg.out``."""
    manifests = [read_manifest(p) for p in cfg.manifests]
    names = [m.name for m in manifests]
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        raise UsageError(f"dataset names must be unique across manifests: {', '.join(dupes)}")
    cfg.out.mkdir(parents=True, exist_ok=True)
    res = RunResult()
    for manifest in sorted(manifests, key=lambda m: m.name):
        run_dataset(cfg, manifest, res)

    order = {k: i for i, k in enumerate(list(MODEL_KINDS) + [e.name for e in cfg.externals])}
    prov_order = {p: i for i, (p, _) in enumerate(PROVENANCES)}
    res.reports.sort(key=lambda r: (r.dataset, prov_order[r.provenance], order[r.model]))
    write_csv(cfg.out / "metrics.csv", MetricsReport.columns(), [r.row() for r in res.reports])
    for ds in sorted({r["dataset"] for r in res.roc_rows}):
        rows = [r for r in res.roc_rows if r["dataset"] == ds]
        write_csv(cfg.out / "roc" / f"{_safe_name(ds)}.csv", ROC_COLUMNS, rows)
    if res.scorecards:
        write_csv(cfg.out / "scorecard.csv", list(res.scorecards[0]), res.scorecards)
    complete = [
        ds for ds in sorted({r.dataset for r in res.reports})
        if {r.provenance for r in res.reports if r.dataset == ds} == {"original", "processed"}
    ]
    ratios = provenance_ratios([r for r in res.reports if r.dataset in complete]) if complete else []
    write_csv(cfg.out / "before_after.csv", BEFORE_AFTER_COLUMNS, ratios)
    write_csv(cfg.out / "errors.csv", ERROR_COLUMNS, res.errors)
    with open(cfg.out / "run.yaml", "w") as fh:
        yaml.safe_dump({
            "hidsq_version": __version__,
            "manifests": [str(p) for p in cfg.manifests],
            "models": list(cfg.models),
            "external": {e.name: e.command for e in cfg.externals},
            "seed": cfg.seed,
            "pipeline_overrides": dict(cfg.overrides),
            "hyperparameters": cfg.hyperparams,
        }, fh, sort_keys=True)
    render_report(cfg.out)
    return res


# -- figures and summary, rebuilt from the CSVs ------------------------------

def _fmt(v, nd=4):
    if isinstance(v, int) or (isinstance(v, str) and re.fullmatch(r"-?\d+", v)):
        return str(v)
    try:
        return f"{float(v):.{nd}f}"
    except (TypeError, ValueError):
        return str(v)


def _md_table(rows, columns, nd=4) -> list[str]:
    if not rows:
        return ["(none)", ""]
    out = ["| " + " | ".join(columns) + " |", "|" + "---|" * len(columns)]
    for r in rows:
        cells = [r[c] if c in ("dataset", "provenance", "model", "stage", "error") else _fmt(r[c], nd)
                 for c in columns]
        out.append("| " + " | ".join(str(c).replace("|", "/") for c in cells) + " |")
    return out + [""]


def render_report(run_dir) -> list[Path]:
    """Draw every figure from the CSVs in ``run_dir`` and write summary.md."""
    run_dir = Path(run_dir)
    figures = run_dir / "figures"
    made = []
    metrics = read_csv(run_dir / "metrics.csv") if (run_dir / "metrics.csv").exists() else []
    for pool_dir in sorted(p for p in (run_dir / "pools").glob("*") if p.is_dir()):
        for prov in ("original", "processed"):
            path = pool_dir / f"{prov}.csv"
            if path.exists():
                normal, intrusion = pool_rows_to_classes(read_csv(path))
                if normal.size or intrusion.size:
                    made.append(figures / pool_dir.name / f"histogram_{prov}.svg")
                    histogram_figure(normal, intrusion, made[-1], f"{pool_dir.name}: {prov}")
    for roc_path in sorted((run_dir / "roc").glob("*.csv")):
        rows = read_csv(roc_path)
        for prov in ("original", "processed"):
            sub = [r for r in rows if r["provenance"] == prov]
            if not sub:
                continue
            ds = sub[0]["dataset"]
            aucs = {m["model"]: m["auc"] for m in metrics if m["dataset"] == ds and m["provenance"] == prov}
            made.append(figures / roc_path.stem / f"roc_{prov}.svg")
            roc_figure(roc_rows_to_curves(sub), aucs, made[-1], f"{ds}: {prov}")
    ba = read_csv(run_dir / "before_after.csv") if (run_dir / "before_after.csv").exists() else []
    if ba:
        made.append(figures / "bars.svg")
        bars_figure(ba, made[-1])
    write_summary(run_dir, metrics, ba, made)
    return made


def write_summary(run_dir, metrics, before_after, figures):
    run_dir = Path(run_dir)
    scorecard_rows = read_csv(run_dir / "scorecard.csv") if (run_dir / "scorecard.csv").exists() else []
    errors = read_csv(run_dir / "errors.csv") if (run_dir / "errors.csv").exists() else []
    lines = ["# hidsq run summary", ""]
    lines += ["## Detection metrics (test split)", ""]
    lines += _md_table(metrics, ["dataset", "provenance", "model", "accuracy", "precision", "recall",
                                 "fpr", "macro_f1", "auc", "log_ratio"])
    lines += ["## Original vs processed", ""]
    lines += _md_table(before_after, BEFORE_AFTER_COLUMNS[:-1], nd=3)
    lines += ["## Data-quality scorecard", ""]
    for row in scorecard_rows:
        lines += [f"### {row['dataset']}", "", "| measurement | value |", "|---|---|"]
        lines += [f"| {k} | {v if k.startswith('declared_') else _fmt(v)} |"
                  for k, v in row.items() if k != "dataset"]
        lines.append("")
    if not scorecard_rows:
        lines += ["(none)", ""]
    lines += ["## Failed cells", ""]
    lines += _md_table(errors, ERROR_COLUMNS)
    lines += ["## Figures", ""]
    lines += [f"- [{p.relative_to(run_dir)}]({p.relative_to(run_dir)})" for p in figures] or ["(none)"]
    (run_dir / "summary.md").write_text("\n".join(lines) + "\n")


# -- subcommands ------------------------------------------------------------

def cmd_ingest_validate(args) -> int:
    status = EXIT_OK
    for path in args.manifest:
        manifest = read_manifest(path)
        try:
            ds = load_dataset(manifest, workers=args.workers)
        except (OSError, ParseError) as exc:
            print(f"{manifest.name}: load failed: {exc}")
            status = EXIT_FAILURE
            continue
        rep = validate_dataset(ds, args.max_syscall if args.max_syscall is not None else manifest.max_syscall)
        print(f"== {manifest.name} ({manifest.format})")
        for line in rep.lines():
            print(line)
        if args.strict and rep.n_violations:
            status = EXIT_FAILURE
    return status


def cmd_synth(args) -> int:
    base = {}
    if args.spec:
        with open(args.spec) as fh:
            base = yaml.safe_load(fh) or {}
        if not isinstance(base, dict):
            raise UsageError(f"{args.spec}: synthetic spec must be a mapping")
    flags = {
        "name": args.name, "vocab_size": args.vocab_size, "n_traces": args.n_traces,
        "trace_len": args.trace_len, "signature_overlap": args.overlap, "branching": args.branching,
        "stickiness": args.stickiness, "traces_per_file": args.traces_per_file, "seed": args.seed,
    }
    base.update({k: v for k, v in flags.items() if v is not None})
    defects = dict(base.get("defects") or {})
    for key, v in (("label_flip_rate", args.flip_rate), ("duplicate_injection_rate", args.dup_rate),
                   ("imbalance_factor", args.imbalance)):
        if v is not None:
            defects[key] = v
    base["defects"] = defects
    try:
        spec = SynthSpec.from_mapping(base)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid synthetic spec: {exc}") from None
    out = output_dir(args.out)
    manifest = write_corpus(spec, out)
    print(manifest)
    log.info("synthetic spec: %s", spec_to_mapping(spec))
    return EXIT_OK


def _overrides(args) -> dict:
    keys = ("n", "stride", "balance", "ratio")
    return {k: getattr(args, k) for k in keys if getattr(args, k) is not None}


def cmd_pipeline(args) -> int:
    overrides = _overrides(args)
    try:
        PipelineConfig(**overrides)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    cfg = RunConfig(
        manifests=[Path(p) for p in args.manifest],
        models=args.models,
        out=output_dir(args.out),
        seed=args.seed,
        overrides=overrides,
        hyperparams=parse_hyperparams(args.hp),
        externals=parse_externals(args.external, args.external_timeout),
        save_models=args.save_models,
    )
    res = run(cfg)
    print(f"{len(res.reports)} report rows, {len(res.errors)} failed cells -> {cfg.out}")
    return EXIT_FAILURE if res.errors else EXIT_OK


def cmd_histogram(args) -> int:
    normal, intrusion = pool_rows_to_classes(read_csv(args.pool))
    counts = histogram_figure(normal, intrusion, args.output, args.title or Path(args.pool).stem)
    print(args.output)
    for cls in ("normal", "intrusion"):
        log.info("%s: %d distinct syscalls", cls, len(counts[cls]))
    return EXIT_OK


def cmd_roc(args) -> int:
    rows = read_csv(args.roc)
    provs = sorted({r["provenance"] for r in rows})
    prov = args.provenance or (provs[-1] if provs else "processed")
    rows = [r for r in rows if r["provenance"] == prov]
    if not rows:
        raise UsageError(f"{args.roc}: no ROC points for provenance {prov!r}")
    ds = rows[0]["dataset"]
    aucs = {m["model"]: m["auc"] for m in read_csv(args.metrics)
            if m["dataset"] == ds and m["provenance"] == prov}
    roc_figure(roc_rows_to_curves(rows), aucs, args.output, args.title or f"{ds}: {prov}")
    print(args.output)
    return EXIT_OK


def cmd_bars(args) -> int:
    rows = read_csv(args.comparison)
    if not rows:
        raise UsageError(f"{args.comparison}: no datasets")
    bars_figure(rows, args.output)
    print(args.output)
    return EXIT_OK


def cmd_adapter_check(args) -> int:
    try:
        spec = ExternalModelSpec(args.command, timeout=args.timeout, name="candidate")
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    ok = True
    for check, passed, detail in conformance_checks(spec):
        print(f"{'PASS' if passed else 'FAIL'} {check}: {detail}")
        ok &= passed
    return EXIT_OK if ok else EXIT_FAILURE


def cmd_report(args) -> int:
    run_dir = Path(args.run_dir)
    if not (run_dir / "metrics.csv").exists():
        raise UsageError(f"{run_dir} has no metrics.csv; run 'hidsq pipeline' first")
    for p in render_report(run_dir):
        print(p)
    print(run_dir / "summary.md")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hidsq", description="Syscall-trace HIDS experiments with data-quality measurements.")
    ap.add_argument("--version", action="version", version=f"hidsq {__version__}")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest-validate", help="parse manifests and report range/consistency problems")
    p.add_argument("manifest", nargs="+")
    p.add_argument("--max-syscall", type=int)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--strict", action="store_true", help="exit 1 when violations are found")
    p.set_defaults(func=cmd_ingest_validate)

    p = sub.add_parser("synth", help="write a synthetic corpus and its manifest")
    p.add_argument("--spec", help="YAML synthetic spec; flags override its values")
    p.add_argument("--out")
    p.add_argument("--name")
    p.add_argument("--vocab-size", type=int)
    p.add_argument("--n-traces", type=int, help="traces per class")
    p.add_argument("--trace-len", type=int, nargs=2, metavar=("MIN", "MAX"))
    p.add_argument("--overlap", type=float, help="signature overlap in [0, 1]")
    p.add_argument("--branching", type=int)
    p.add_argument("--stickiness", type=float)
    p.add_argument("--traces-per-file", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--flip-rate", type=float)
    p.add_argument("--dup-rate", type=float)
    p.add_argument("--imbalance", type=float, help="fraction of intrusion traces kept")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("pipeline", help="run every model on both provenances of each dataset")
    p.add_argument("manifest", nargs="+")
    p.add_argument("--models", type=parse_models, default=list(MODEL_KINDS),
                   help="comma-separated model kinds or 'all' (default)")
    p.add_argument("--out")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, help="n-gram length")
    p.add_argument("--stride", type=int)
    p.add_argument("--balance", choices=("bootstrap_to_max", "none"))
    p.add_argument("--ratio", type=float, help="train fraction")
    p.add_argument("--hp", action="append", metavar="KIND.KEY=VALUE", help="model hyperparameter override")
    p.add_argument("--external", action="append", metavar="NAME=COMMAND",
                   help="also evaluate an external model over the line protocol")
    p.add_argument("--external-timeout", type=float, default=600.0)
    p.add_argument("--save-models", action="store_true")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("histogram", help="overlaid per-syscall histogram from a pool CSV")
    p.add_argument("pool")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--title")
    p.set_defaults(func=cmd_histogram)

    p = sub.add_parser("roc", help="ROC curves of one dataset from its ROC CSV and metrics.csv")
    p.add_argument("roc")
    p.add_argument("--metrics", required=True)
    p.add_argument("--provenance", choices=("original", "processed"))
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--title")
    p.set_defaults(func=cmd_roc)

    p = sub.add_parser("bars", help="before/after bar chart from before_after.csv")
    p.add_argument("comparison")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_bars)

    p = sub.add_parser("adapter-check", help="run the protocol conformance checks against a command")
    p.add_argument("--command", required=True)
    p.add_argument("--timeout", type=float, default=30.0)
    p.set_defaults(func=cmd_adapter_check)

    p = sub.add_parser("report", help="redraw figures and summary.md of a finished run")
    p.add_argument("run_dir")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    warnings.simplefilter("ignore", ConvergenceWarning)
    try:
        return args.func(args)
    except (UsageError, ManifestError) as exc:
        print(f"hidsq {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"hidsq {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
