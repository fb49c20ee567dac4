import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from lwis.cli import EXIT_FAILED, EXIT_INVALID, EXIT_OK, ExperimentSpec, load_spec, main, read_score_table
from lwis.data import load_csv, synth_two_gaussians
from lwis.errors import ContractViolation
from tests.test_stats import MARGIN_TABLE


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_minimal_bench(tmp_path):
    out = tmp_path / "o"
    code = main(["bench", "--datasets", "iris", "--strategies", "lwis", "--budgets", "50", "--runs", "2",
                 "--max-epochs", "2", "--out-dir", str(out)])
    assert code == EXIT_OK
    r = rows(out / "results.csv")
    assert len(r) == 2
    assert list(r[0]) == ["dataset", "strategy", "budget", "run", "accuracy", "seconds", "seed"]
    summary = json.loads((out / "summary.json").read_text())
    assert summary["cells"][0]["runs"] == 2
    curve = rows(out / "curves" / "iris__lwis.csv")
    assert [c["budget"] for c in curve] == ["50"]


def test_unknown_strategy_fails_before_work(tmp_path):
    out = tmp_path / "o"
    code = main(["bench", "--datasets", "iris", "--strategies", "bogus", "--out-dir", str(out)])
    assert code == EXIT_INVALID
    assert not out.exists()


def test_missing_dataset_file(tmp_path):
    assert main(["bench", "--datasets", str(tmp_path / "nope.csv"), "--out-dir", str(tmp_path)]) == EXIT_INVALID


def test_rerun_is_byte_identical(tmp_path):
    args = ["bench", "--datasets", "iris", "--strategies", "lwis", "random", "--budgets", "30", "60",
            "--runs", "2", "--max-epochs", "2", "--no-timing", "--seed", "5"]
    assert main(args + ["--out-dir", str(tmp_path / "a")]) == EXIT_OK
    assert main(args + ["--out-dir", str(tmp_path / "b")]) == EXIT_OK
    for name in ("results.csv", "summary.json", "curves/iris__lwis.csv", "curves/iris__random.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert len(rows(tmp_path / "a" / "results.csv")) == 1 * 2 * 2 * 2


def test_timed_rerun_differs_only_in_seconds(tmp_path):
    args = ["bench", "--datasets", "iris", "--strategies", "lwis", "--budgets", "30", "--runs", "2", "--max-epochs", "2"]
    main(args + ["--out-dir", str(tmp_path / "a")])
    main(args + ["--out-dir", str(tmp_path / "b")])
    strip = lambda rs: [{k: v for k, v in r.items() if k != "seconds"} for r in rs]
    assert strip(rows(tmp_path / "a" / "results.csv")) == strip(rows(tmp_path / "b" / "results.csv"))


def test_spec_file_and_flag_override(tmp_path):
    spec = tmp_path / "exp.yaml"
    spec.write_text("datasets: [iris]\nstrategies: [random]\nbudgets: [20]\nruns: 3\nmargin: 1.5\nmax_epochs: 1\n")
    loaded = load_spec(spec)
    assert loaded.runs == 3 and loaded.train == {"margin": 1.5, "max_epochs": 1}
    out = tmp_path / "o"
    assert main(["bench", "--spec", str(spec), "--runs", "1", "--out-dir", str(out)]) == EXIT_OK
    assert len(rows(out / "results.csv")) == 1
    spec.write_text("datasets: [iris]\nwhatever: 3\n")
    assert main(["bench", "--spec", str(spec), "--out-dir", str(out)]) == EXIT_INVALID


def test_resume_skips_complete_cells(tmp_path):
    out = tmp_path / "o"
    base = ["bench", "--datasets", "iris", "--strategies", "random", "--runs", "2", "--max-epochs", "1",
            "--no-timing", "--out-dir", str(out)]
    main(base + ["--budgets", "20"])
    first = rows(out / "results.csv")
    main(base + ["--budgets", "20", "30", "--resume"])
    second = rows(out / "results.csv")
    assert second[:2] == first
    assert [r["budget"] for r in second] == ["20", "20", "30", "30"]


def test_total_failure_exit_code(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("".join(f"{i},a\n" for i in range(5)) + "9,b\n")
    code = main(["bench", "--datasets", str(path), "--strategies", "lwis", "--budgets", "5", "--runs", "1",
                 "--out-dir", str(tmp_path / "o")])
    assert code == EXIT_FAILED


def test_stats_on_wide_margin_table(tmp_path, capsys):
    table = tmp_path / "margins.csv"
    with open(table, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["dataset", "g1", "g2", "g3", "g4", "g5"])
        for i, row in enumerate(MARGIN_TABLE):
            w.writerow([f"d{i}", *row])
    assert main(["stats", str(table), "--out-dir", str(tmp_path)]) == EXIT_OK
    text = (tmp_path / "stats_report.txt").read_text()
    assert "Friedman chi2_F = 5.5250" in text
    pairs = {(r["method_a"], r["method_b"]): r for r in rows(tmp_path / "stats_pairwise.csv")}
    for (a, b), r in pairs.items():
        assert pairs[b, a]["rank_gap"] == r["rank_gap"]
        assert pairs[b, a]["significant"] == r["significant"]


def test_stats_dominant_strategy(tmp_path):
    results = tmp_path / "results.csv"
    with open(results, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["dataset", "strategy", "budget", "run", "accuracy", "seconds", "seed"])
        for d in range(4):
            for run in range(3):
                w.writerow([f"d{d}", "lwis", 50, run, 0.9, "", run])
                w.writerow([f"d{d}", "random", 50, run, 0.8, "", run])
    scores, methods, datasets = read_score_table(results)
    assert methods == ["lwis", "random"] and len(datasets) == 4
    assert main(["stats", str(results), "--out-dir", str(tmp_path)]) == EXIT_OK
    ranks = rows(tmp_path / "stats_ranks.csv")
    assert all(r["lwis"] == "1.0" and r["random"] == "2.0" for r in ranks[:-1])
    # With k = 2 the largest possible statistic is N.
    assert "Friedman chi2_F = 4.0000" in (tmp_path / "stats_report.txt").read_text()


def test_stats_needs_two_of_each(tmp_path):
    table = tmp_path / "t.csv"
    table.write_text("dataset,a,b\nd0,0.9,0.8\n")
    assert main(["stats", str(table), "--out-dir", str(tmp_path)]) == EXIT_INVALID
    with pytest.raises(ContractViolation):
        read_score_table(table)


def test_weights_dump(tmp_path):
    out = tmp_path / "w"
    code = main(["weights", "--datasets", "two_gaussians", "--margin", "1", "--weight-rate", "0.1",
                 "--no-scale", "--seed", "0", "--out-dir", str(out)])
    assert code == EXIT_OK
    data = rows(out / "weights.csv")
    by_iter = {}
    for r in data:
        by_iter.setdefault(int(r["iteration"]), []).append(r)
    assert sorted(by_iter) == [0, 20, 50, 100]
    n = len(by_iter[0])
    assert all(float(r["weight"]) == 1 / n for r in by_iter[0])
    for it in by_iter:
        assert sum(float(r["weight"]) for r in by_iter[it]) == pytest.approx(1.0, abs=1e-12)
    hist = rows(out / "weights_hist.csv")
    for it in by_iter:
        assert sum(int(h["frequency"]) for h in hist if int(h["iteration"]) == it) == n

    # Ground truth from the generator, recomputed independently of the dump.
    _, truth = synth_two_gaussians(seed=0)
    final = by_iter[100]
    X = np.array([[float(r["x"]), float(r["y"])] for r in final])
    inside = truth.overlap_mask(X)
    assert inside.tolist() == [bool(int(r["overlap"])) for r in final]
    w = np.array([float(r["weight"]) for r in final])
    top = np.argsort(-w, kind="stable")[: n // 10]
    assert inside[top].mean() > inside.mean()


def test_weights_rejects_other_strategies(tmp_path):
    code = main(["weights", "--datasets", "iris", "--strategies", "random", "--out-dir", str(tmp_path)])
    assert code == EXIT_INVALID


def test_synth_command(tmp_path):
    path = tmp_path / "toy.csv"
    assert main(["synth", str(path), "--n-per-class", "30", "--seed", "4"]) == EXIT_OK
    d = load_csv(path, header=True)
    ref, _ = synth_two_gaussians(n_per_class=30, seed=4)
    assert np.array_equal(d.features, ref.features)
    assert main(["synth", str(tmp_path / "b.csv"), "--kind", "blobs", "--n", "50", "--p", "3"]) == EXIT_OK
    assert load_csv(tmp_path / "b.csv", header=True).p == 3


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "lwis", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "bench" in proc.stdout and "weights" in proc.stdout


def test_spec_validation_rules():
    with pytest.raises(ContractViolation):
        ExperimentSpec(datasets=[]).validate()
    with pytest.raises(ContractViolation):
        ExperimentSpec(datasets=["iris"], budgets=["x"]).validate()
    with pytest.raises(ContractViolation):
        ExperimentSpec(datasets=["iris"], train={"margin": -1}).validate()
