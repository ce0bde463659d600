import csv
import re
import shlex
import sys
import warnings

import pytest

from hidsq.cli import main
from hidsq.metrics import auc
from hidsq.plotting import bars_figure, histogram_figure, read_csv, roc_figure, syscall_counts


def tree_bytes(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    assert main(["synth", "--out", str(out), "--n-traces", "40", "--vocab-size", "30",
                 "--overlap", "0.3", "--trace-len", "8", "20", "--seed", "2"]) == 0
    return out / "manifest.yaml"


@pytest.fixture(scope="module")
def full_run(corpus, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    code = main(["pipeline", str(corpus), "--out", str(out), "--models", "all",
                 "--hp", "rforest.n_trees=10", "--seed", "4"])
    return code, out


def test_all_models_give_sixteen_rows(full_run):
    code, out = full_run
    assert code == 0
    rows = read_csv(out / "metrics.csv")
    assert len(rows) == 16
    assert {(r["provenance"], r["model"]) for r in rows} == {
        (p, m) for p in ("original", "processed")
        for m in ("kmeans", "logreg", "svm_poly", "mlp", "dtree", "rforest", "knn", "gnb")
    }
    assert read_csv(out / "errors.csv") == []
    for name in ("scorecard.csv", "before_after.csv", "summary.md", "figures/bars.svg",
                 "figures/synthetic/roc_processed.svg", "figures/synthetic/histogram_original.svg",
                 "pools/synthetic/processed.csv", "roc/synthetic.csv"):
        assert (out / name).exists(), name


def test_same_config_twice_is_byte_identical(corpus, full_run, tmp_path):
    _, first = full_run
    assert main(["pipeline", str(corpus), "--out", str(tmp_path), "--models", "all",
                 "--hp", "rforest.n_trees=10", "--seed", "4"]) == 0
    assert tree_bytes(tmp_path) == tree_bytes(first)


def test_report_regenerates_identical_figures(full_run, tmp_path):
    _, out = full_run
    before = tree_bytes(out)
    assert main(["report", str(out)]) == 0
    assert tree_bytes(out) == before


def test_legend_auc_matches_metrics(full_run):
    _, out = full_run
    svg = (out / "figures/synthetic/roc_processed.svg").read_text()
    for r in read_csv(out / "metrics.csv"):
        if r["provenance"] == "processed":
            assert f"{r['model']} (AUC {float(r['auc']):.3f})" in svg


def test_roc_csv_reproduces_metrics_auc(full_run):
    _, out = full_run
    pts = read_csv(out / "roc" / "synthetic.csv")
    for r in read_csv(out / "metrics.csv"):
        xs = [(float(p["fpr"]), float(p["tpr"])) for p in pts
              if p["model"] == r["model"] and p["provenance"] == r["provenance"]]
        area = sum((x1 - x0) * (y0 + y1) / 2 for (x0, y0), (x1, y1) in zip(xs, xs[1:]))
        assert area == pytest.approx(float(r["auc"]), abs=1e-12)


def test_unknown_model_is_usage_error_before_work(corpus, tmp_path, capsys):
    out = tmp_path / "never"
    with pytest.raises(SystemExit) as exc:
        main(["pipeline", str(corpus), "--out", str(out), "--models", "dtree,xgboost"])
    assert exc.value.code == 2
    assert not out.exists()
    assert "xgboost" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    ["--hp", "dtree.depth=3"],
    ["--hp", "nosuch.k=1"],
    ["--ratio", "1.5"],
    ["--external", "=cmd"],
])
def test_bad_configuration_exit_2(corpus, tmp_path, argv):
    assert main(["pipeline", str(corpus), "--out", str(tmp_path / "o"), "--models", "gnb", *argv]) == 2
    assert not (tmp_path / "o").exists()


def test_missing_manifest_exit_2(tmp_path):
    assert main(["pipeline", str(tmp_path / "nope.yaml"), "--out", str(tmp_path / "o")]) == 2


def test_failed_cell_exit_1(tmp_path):
    d = tmp_path / "same"
    d.mkdir()
    for cls in ("n", "i"):
        (d / f"{cls}.txt").write_text(" ".join(map(str, range(30))))
    (d / "m.yaml").write_text("name: twins\nformat: adfa\nnormal: [n.txt]\nintrusion: [i.txt]\n")
    out = tmp_path / "o"
    assert main(["pipeline", str(d / "m.yaml"), "--out", str(out), "--models", "gnb,knn"]) == 1
    errors = read_csv(out / "errors.csv")
    # original provenance (no dedup) still runs; processed empties both classes
    assert {(e["provenance"], e["model"]) for e in errors} == {("processed", "gnb"), ("processed", "knn")}
    assert all("cannot balance" in e["error"] for e in errors)
    assert len(read_csv(out / "metrics.csv")) == 2
    assert "twins" in (out / "summary.md").read_text()


def test_output_dir_env(corpus, tmp_path, monkeypatch):
    monkeypatch.setenv("HIDSQ_OUTPUT_DIR", str(tmp_path / "env-out"))
    assert main(["pipeline", str(corpus), "--models", "gnb"]) == 0
    assert (tmp_path / "env-out" / "metrics.csv").exists()


def test_external_model_through_pipeline(corpus, tmp_path):
    cmd = f"{shlex.quote(sys.executable)} -m hidsq.echo_model"
    assert main(["pipeline", str(corpus), "--out", str(tmp_path), "--models", "gnb",
                 "--external", f"echo={cmd}"]) == 0
    rows = read_csv(tmp_path / "metrics.csv")
    assert [r["model"] for r in rows] == ["gnb", "echo", "gnb", "echo"]


def test_failing_external_model_is_a_cell_failure(corpus, tmp_path):
    cmd = f"{shlex.quote(sys.executable)} -m hidsq.echo_model --fault short"
    assert main(["pipeline", str(corpus), "--out", str(tmp_path), "--models", "gnb",
                 "--external", f"bad={cmd}"]) == 1
    errors = read_csv(tmp_path / "errors.csv")
    assert {e["model"] for e in errors} == {"bad"} and "count mismatch" in errors[0]["error"]


def test_synth_invalid_spec_exit_2(tmp_path):
    assert main(["synth", "--out", str(tmp_path), "--overlap", "1.5"]) == 2


def test_synth_spec_file_with_flag_override(tmp_path):
    spec = tmp_path / "s.yaml"
    spec.write_text("name: from-file\nn_traces: 12\ndefects: {imbalance_factor: 0.5}\n")
    assert main(["synth", "--spec", str(spec), "--seed", "3", "--out", str(tmp_path / "c")]) == 0
    text = (tmp_path / "c" / "manifest.yaml").read_text()
    assert "from-file" in text
    assert "seed: 3" in (tmp_path / "c" / "synth-spec.yaml").read_text()


def test_ingest_validate(corpus, capsys):
    assert main(["ingest-validate", str(corpus)]) == 0
    assert "syscalls outside [0, 29]: 0" in capsys.readouterr().out


def test_adapter_check(capsys):
    cmd = f"{shlex.quote(sys.executable)} -m hidsq.echo_model"
    assert main(["adapter-check", "--command", cmd]) == 0
    assert main(["adapter-check", "--command", cmd + " --fault bad-handshake"]) == 1
    assert "FAIL handshake" in capsys.readouterr().out


def test_standalone_figure_commands(full_run, tmp_path):
    _, out = full_run
    assert main(["histogram", str(out / "pools/synthetic/original.csv"), "-o", str(tmp_path / "h.svg")]) == 0
    assert main(["roc", str(out / "roc/synthetic.csv"), "--metrics", str(out / "metrics.csv"),
                 "--provenance", "processed", "-o", str(tmp_path / "r.svg")]) == 0
    assert main(["bars", str(out / "before_after.csv"), "-o", str(tmp_path / "b.svg")]) == 0
    assert (tmp_path / "r.svg").read_bytes() == (out / "figures/synthetic/roc_processed.svg").read_bytes()
    assert (tmp_path / "b.svg").read_bytes() == (out / "figures/bars.svg").read_bytes()


# -- figure contents -----------------------------------------------------------

def test_histogram_counts_example():
    assert syscall_counts([[1, 2], [2, 3]]) == {1: 1, 2: 2, 3: 1}


def test_histogram_disjoint_and_identical(tmp_path):
    counts = histogram_figure([[1, 2], [2, 3]], [[7, 8]], tmp_path / "d.svg")
    assert not set(counts["normal"]) & set(counts["intrusion"])
    counts = histogram_figure([[1, 2], [2, 3]], [[1, 2], [2, 3]], tmp_path / "i.svg")
    assert counts["normal"] == counts["intrusion"]
    with pytest.raises(ValueError):
        histogram_figure([], [], tmp_path / "e.svg")


def _svg_polyline_points(svg):
    return re.findall(r'<path d="M ([^"]+)"', svg)


def test_roc_perfect_and_constant(tmp_path):
    y = [0, 0, 1, 1]
    from hidsq.metrics import roc_curve

    perfect = roc_curve(y, [0.1, 0.2, 0.8, 0.9])
    const = roc_curve(y, [0.5] * 4)
    assert (0.0, 1.0) in perfect.points
    assert const.points == [(0.0, 0.0), (1.0, 1.0)]
    labels = roc_figure({"p": (perfect.fpr, perfect.tpr), "c": (const.fpr, const.tpr)},
                        {"p": auc(y, [0.1, 0.2, 0.8, 0.9]), "c": 0.5}, tmp_path / "r.svg")
    assert labels == ["c (AUC 0.500)", "p (AUC 1.000)"]


def test_roc_missing_curve_skipped_with_warning(tmp_path):
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        labels = roc_figure({"a": ([0, 1], [0, 1])}, {"a": 0.5, "b": 0.7}, tmp_path / "r.svg")
    assert labels == ["a (AUC 0.500)"]
    assert any("'b'" in str(x.message) for x in w)


def _ba(ds, fpr_proc, fpr_orig=0.3):
    return {"dataset": ds, "avg_recall_orig": 0.7, "avg_recall_proc": 0.9,
            "avg_fpr_orig": fpr_orig, "avg_fpr_proc": fpr_proc}


def test_bars_sorted_and_counted(tmp_path):
    drawn = bars_figure([_ba("low", 0.01), _ba("high", 0.2)], tmp_path / "b.svg")
    assert len(drawn) == 8
    datasets_in_order = list(dict.fromkeys(d for d, _, _ in drawn))
    assert datasets_in_order == ["high", "low"]
    assert len(bars_figure([_ba("one", 0.1)], tmp_path / "c.svg")) == 4


def test_bars_zero_height_labelled(tmp_path):
    drawn = bars_figure([_ba("z", 0.0)], tmp_path / "b.svg")
    assert ("z", "avg_fpr_proc", 0.0) in drawn
    assert "<!-- 0.00 -->" in (tmp_path / "b.svg").read_text()


def test_bar_values_equal_csv(full_run):
    _, out = full_run
    drawn = bars_figure(read_csv(out / "before_after.csv"), out / "figures" / "bars.svg")
    with open(out / "before_after.csv") as fh:
        row = next(csv.DictReader(fh))
    for ds, key, value in drawn:
        assert value == float(row[key])
        assert f"<!-- {value:.2f} -->" in (out / "figures/bars.svg").read_text()
