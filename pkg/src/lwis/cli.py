"""Command-line entry point.

Subcommands: ``bench`` (cross-validated grid), ``stats`` (rank tests on a
results table), ``weights`` (weight evolution dump) and ``synth`` (write a
toy dataset). Options come from an optional YAML experiment file and are
overridden by flags.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from .data import BUILTIN, DEFAULT_SEPARATION, Dataset, load_builtin, load_csv, standardize, synth_blobs, synth_two_gaussians, write_csv
from .errors import ContractViolation, ParseError
from .evaluation import benchmark_grid, mean_ci, resolve_budget
from .learner import TrainConfig, train
from .selection import Lwis, make_strategy
from .stats import significance_report

EXIT_OK, EXIT_INVALID, EXIT_FAILED = 0, 1, 2
RESULT_COLUMNS = ("dataset", "strategy", "budget", "run", "accuracy", "seconds", "seed")
SYNTH_NAME = "two_gaussians"
CONFIG_FIELDS = {f.name for f in fields(TrainConfig)} - {"seed", "budget"}


@dataclass
class ExperimentSpec:
    datasets: list = field(default_factory=list)
    strategies: list = field(default_factory=lambda: ["lwis"])
    budgets: list | None = None
    folds: int = 2
    runs: int = 10
    k: int = 3
    seed: int = 0
    jobs: int = 1
    out_dir: str = "."
    scale: bool = True
    timing: bool = True
    delimiter: str = ","
    header: bool = False
    label_column: int = -1
    iterations: list = field(default_factory=lambda: [0, 20, 50, 100])
    bins: int = 20
    train: dict = field(default_factory=dict)

    def config(self, **extra) -> TrainConfig:
        return TrainConfig(**{**self.train, **extra})

    def validate(self) -> None:
        """Fail before any work on unknown strategies, missing files or bad options."""
        if not self.datasets:
            raise ContractViolation("no datasets given")
        for token in self.datasets:
            if _dataset_kind(token) == "file" and not Path(token).is_file():
                raise ContractViolation(f"dataset file not found: {token}")
        if not self.strategies:
            raise ContractViolation("no strategies given")
        for s in self.strategies:
            make_strategy(s)
        if self.budgets is not None:
            if not self.budgets:
                raise ContractViolation("empty budget list")
            for b in self.budgets:
                try:
                    if resolve_budget(b, 1) < 1:
                        raise ValueError
                except ValueError:
                    raise ContractViolation(f"bad budget {b!r}") from None
        if self.folds < 2 or self.runs < 1 or self.k < 1 or self.jobs < 1 or self.bins < 1:
            raise ContractViolation("folds >= 2, runs >= 1, k >= 1, jobs >= 1 and bins >= 1 are required")
        unknown = set(self.train) - CONFIG_FIELDS
        if unknown:
            raise ContractViolation(f"unknown training options: {sorted(unknown)}")
        self.config()


SPEC_KEYS = {f.name for f in fields(ExperimentSpec)} - {"train"}


def load_spec(path) -> ExperimentSpec:
    """Read a flat YAML mapping; training options sit at top level."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = yaml.safe_load(fh) or {}
    except FileNotFoundError:
        raise ContractViolation(f"spec file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ContractViolation(f"spec file {path} is not valid YAML: {exc}") from None
    if not isinstance(doc, dict):
        raise ContractViolation("spec file must be a key-value mapping")
    spec = ExperimentSpec()
    for key, value in doc.items():
        if key in SPEC_KEYS:
            if key in ("datasets", "strategies", "budgets", "iterations") and not isinstance(value, list):
                value = [value]
            setattr(spec, key, value)
        elif key in CONFIG_FIELDS:
            spec.train[key] = value
        else:
            raise ContractViolation(f"unknown spec key {key!r}")
    return spec


def _dataset_kind(token: str) -> str:
    if token.lower() in BUILTIN:
        return "builtin"
    if token.lower() == SYNTH_NAME:
        return "synth"
    return "file"


def load_dataset(token: str, spec: ExperimentSpec) -> Dataset:
    kind = _dataset_kind(token)
    if kind == "builtin":
        return load_builtin(token)
    if kind == "synth":
        return synth_two_gaussians(seed=spec.seed)[0]
    return load_csv(token, delimiter=spec.delimiter, header=spec.header, label_column=spec.label_column)


# ---------------------------------------------------------------- bench


def _read_existing(path: Path):
    """Rows already present in a results file, and the cells they complete."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != RESULT_COLUMNS:
            raise ContractViolation(f"{path} does not have the results header {RESULT_COLUMNS}")
        rows = list(reader)
    return rows


def _format_seconds(value: float, timing: bool) -> str:
    return repr(float(value)) if timing else ""


def cmd_bench(spec: ExperimentSpec, resume: bool = False) -> int:
    spec.validate()
    strategies = [(s, make_strategy(s)) for s in spec.strategies]
    datasets = [load_dataset(t, spec) for t in spec.datasets]
    names = [d.name for d in datasets]
    if len(set(names)) != len(names):
        raise ContractViolation(f"dataset names must be distinct, got {names}")
    out = Path(spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results_path = out / "results.csv"

    previous = _read_existing(results_path) if resume and results_path.exists() else []
    done = {}
    for row in previous:
        key = (row["dataset"], row["strategy"], int(row["budget"]))
        done[key] = done.get(key, 0) + 1
    skip = {key for key, count in done.items() if count >= spec.runs}
    previous = [r for r in previous if (r["dataset"], r["strategy"], int(r["budget"])) in skip]

    results = []
    with open(results_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RESULT_COLUMNS)
        for row in previous:
            writer.writerow([row[c] for c in RESULT_COLUMNS])
        for res in benchmark_grid(
            datasets,
            strategies,
            spec.budgets,
            spec.config(),
            folds=spec.folds,
            runs=spec.runs,
            k=spec.k,
            master_seed=spec.seed,
            jobs=spec.jobs,
            scale=spec.scale,
            skip=skip,
        ):
            results.append(res)
            if res.error:
                print(f"warning: {res.dataset}/{res.strategy}/budget={res.budget} failed: {res.error}", file=sys.stderr)
            for r, (acc, sec, sd) in enumerate(zip(res.accuracies, res.seconds, res.seeds)):
                writer.writerow([res.dataset, res.strategy, res.budget, r, repr(acc), _format_seconds(sec, spec.timing), sd])
            fh.flush()

    cells = _cells_from_rows(previous) + [_cell_summary(res, spec.timing) for res in results]
    cells.sort(key=lambda c: (c["dataset"], c["strategy"], c["budget"]))
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump({"master_seed": spec.seed, "folds": spec.folds, "runs": spec.runs, "k": spec.k, "cells": cells}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_curves(out / "curves", cells)

    if results and all(res.error for res in results):
        print("error: every benchmark cell failed", file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


def _cell_summary(res, timing: bool) -> dict:
    s = res.summary()
    if not timing:
        s["mean_seconds"] = None
    for key in ("mean_accuracy", "ci95_half_width", "mean_seconds"):
        if isinstance(s[key], float) and math.isnan(s[key]):
            s[key] = None
    return s


def _cells_from_rows(rows) -> list[dict]:
    grouped: dict = {}
    for row in rows:
        grouped.setdefault((row["dataset"], row["strategy"], int(row["budget"])), []).append(row)
    cells = []
    for (d, s, b), group in grouped.items():
        accs = [float(r["accuracy"]) for r in group]
        secs = [float(r["seconds"]) for r in group if r["seconds"]]
        m, h = mean_ci(accs)
        cells.append({
            "dataset": d, "strategy": s, "budget": b, "runs": len(accs),
            "mean_accuracy": m, "ci95_half_width": h,
            "mean_seconds": float(np.mean(secs)) if secs else None,
            "seeds": [int(r["seed"]) for r in group], "error": None,
        })
    return cells


def _write_curves(directory: Path, cells) -> None:
    """One accuracy/time-versus-budget table per (dataset, strategy)."""
    directory.mkdir(exist_ok=True)
    curves: dict = {}
    for c in cells:
        if c["error"] is None:
            curves.setdefault((c["dataset"], c["strategy"]), []).append(c)
    for (d, s), rows in curves.items():
        safe = "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in f"{d}__{s}")
        with open(directory / f"{safe}.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["budget", "mean_accuracy", "ci95_half_width", "mean_seconds"])
            for c in sorted(rows, key=lambda r: r["budget"]):
                secs = "" if c["mean_seconds"] is None else repr(c["mean_seconds"])
                w.writerow([c["budget"], repr(c["mean_accuracy"]), repr(c["ci95_half_width"]), secs])


# ---------------------------------------------------------------- stats


def read_score_table(path, budget=None):
    """(scores N x k, methods, datasets) from a results file or a wide table.

    A results file (long format) is averaged over runs and, unless ``budget``
    is given, over budgets. A wide table has a dataset column followed by
    one numeric column per method.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ContractViolation(f"{path} is empty")
    head = [h.strip() for h in rows[0]]
    body = [r for r in rows[1:] if r and any(cell.strip() for cell in r)]
    if {"dataset", "strategy", "accuracy"} <= set(head):
        col = {h: i for i, h in enumerate(head)}
        acc: dict = {}
        for lineno, r in enumerate(body, start=2):
            if budget is not None and int(r[col["budget"]]) != budget:
                continue
            try:
                value = float(r[col["accuracy"]])
            except (ValueError, IndexError):
                raise ParseError(lineno, "bad accuracy value") from None
            acc.setdefault((r[col["dataset"]], r[col["strategy"]]), []).append(value)
        datasets = sorted({d for d, _ in acc})
        methods = sorted({s for _, s in acc})
        _require_table(datasets, methods)
        missing = [(d, s) for d in datasets for s in methods if (d, s) not in acc]
        if missing:
            raise ContractViolation(f"results lack some (dataset, strategy) cells: {missing}")
        scores = np.array([[np.mean(acc[d, s]) for s in methods] for d in datasets])
        return scores, methods, datasets
    methods = head[1:]
    datasets = [r[0] for r in body]
    try:
        scores = np.array([[float(v) for v in r[1:]] for r in body])
    except ValueError:
        raise ContractViolation(f"{path}: non-numeric score in wide table") from None
    if scores.ndim != 2 or scores.shape[1] != len(methods):
        raise ContractViolation(f"{path}: ragged wide table")
    _require_table(datasets, methods)
    return scores, methods, datasets


def _require_table(datasets, methods):
    if len(datasets) < 2 or len(methods) < 2:
        raise ContractViolation(f"need at least 2 datasets and 2 methods, got {len(datasets)} and {len(methods)}")


def cmd_stats(path, out_dir=".", alpha_level: float = 0.05, budget=None):
    scores, methods, datasets = read_score_table(path, budget)
    report = significance_report(scores, methods, datasets, alpha_level)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    text = report.text()
    (out / "stats_report.txt").write_text(text + "\n", encoding="utf-8")
    with open(out / "stats_pairwise.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method_a", "method_b", "rank_gap", "critical_difference", "significant"])
        for a, b, gap, cd, sig in report.pairwise_rows():
            w.writerow([a, b, repr(gap), repr(cd), int(sig)])
    with open(out / "stats_ranks.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["dataset", *methods])
        for d, row in zip(datasets, report.ranks.ranks):
            w.writerow([d, *(repr(float(v)) for v in row)])
        w.writerow(["average", *(repr(float(v)) for v in report.ranks.average)])
    print(text)
    return report


# ---------------------------------------------------------------- weights


def cmd_weights(spec: ExperimentSpec):
    """Train one LWIS model and dump the ledger at the requested iterations."""
    if len(spec.datasets) != 1:
        raise ContractViolation("weights takes exactly one dataset")
    if len(spec.strategies) != 1:
        raise ContractViolation("weights takes exactly one strategy")
    strategy = make_strategy(spec.strategies[0])
    if not isinstance(strategy, Lwis):
        raise ContractViolation(f"weights needs the lwis strategy, got {strategy.name!r}")
    spec.validate()
    iterations = sorted({int(i) for i in spec.iterations})
    if not iterations or iterations[0] < 0:
        raise ContractViolation("snapshot iterations must be nonnegative")
    token = spec.datasets[0]
    truth = None
    if _dataset_kind(token) == "synth":
        data, truth = synth_two_gaussians(seed=spec.seed)
    else:
        data = load_dataset(token, spec)
    overlap = truth.overlap_mask(data.features) if truth is not None else None
    if spec.scale:
        data = standardize(data)
    last = max(iterations[-1], 1)
    train_opts = dict(spec.train)
    if spec.budgets:
        train_opts["budget"] = resolve_budget(spec.budgets[0], data.n)
    else:
        train_opts.setdefault("budget", last)
        train_opts.setdefault("max_epochs", 1)
    config = TrainConfig(**train_opts, seed=spec.seed)
    result = train(data, strategy, config, snapshot_at=iterations)

    out = Path(spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    two_d = data.p == 2
    with open(out / "weights.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "index", *(["x", "y"] if two_d else []), "label", *(["overlap"] if overlap is not None else []), "weight"])
        for it in sorted(result.snapshots):
            for i, weight in enumerate(result.snapshots[it]):
                xy = [repr(float(v)) for v in data.features[i]] if two_d else []
                ov = [int(overlap[i])] if overlap is not None else []
                w.writerow([it, i, *xy, int(data.labels[i]), *ov, repr(float(weight))])
    with open(out / "weights_hist.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "bin_left", "bin_right", "frequency"])
        for it in sorted(result.snapshots):
            counts, edges = np.histogram(result.snapshots[it], bins=spec.bins)
            for c, lo, hi in zip(counts, edges[:-1], edges[1:]):
                w.writerow([it, repr(float(lo)), repr(float(hi)), int(c)])
    missing = [i for i in iterations if i not in result.snapshots]
    if missing:
        print(f"note: training stopped at iteration {result.iterations}; no snapshot for {missing}", file=sys.stderr)
    return result


# ---------------------------------------------------------------- synth


def cmd_synth(output, *, kind="two_gaussians", n_per_class=100, separation=DEFAULT_SEPARATION, sd=1.0,
              n=1000, p=10, classes=2, seed=0) -> Dataset:
    if kind == "two_gaussians":
        data, _ = synth_two_gaussians(n_per_class, mean_b=(separation * sd, 0.0), sd=sd, seed=seed)
    elif kind == "blobs":
        data = synth_blobs(n, p, classes, seed=seed)
    else:
        raise ContractViolation(f"unknown synthetic kind {kind!r}")
    Path(output).parent.mkdir(parents=True, exist_ok=True)
    write_csv(data, output)
    return data


# ---------------------------------------------------------------- parser


def _add_global(parser, default):
    parser.add_argument("--seed", type=int, default=default, help="master seed")
    parser.add_argument("--jobs", type=int, default=default, help="parallel worker processes")
    parser.add_argument("--out-dir", default=default, help="output directory")


def _add_experiment(parser):
    parser.add_argument("--spec", help="YAML experiment file; flags override its values")
    parser.add_argument("--datasets", nargs="+", help="builtin name, 'two_gaussians', or CSV path")
    parser.add_argument("--strategies", nargs="+", help="e.g. lwis random liu_vemuri:a=3 mei:refresh_period=10")
    parser.add_argument("--budgets", nargs="+", help="integers or multiples of n such as n, 2n, 0.5n")
    parser.add_argument("--runs", type=int)
    parser.add_argument("--folds", type=int)
    parser.add_argument("-k", type=int)
    parser.add_argument("--margin", type=float)
    parser.add_argument("--weight-rate", type=float)
    parser.add_argument("--max-epochs", type=int)
    parser.add_argument("--constraint-kind", choices=["similar", "dissimilar", "triplet", "relative"])
    parser.add_argument("--loss-on", choices=["constraint", "pairs"])
    parser.add_argument("--no-scale", action="store_true", help="skip z-scoring of features")
    parser.add_argument("--delimiter")
    parser.add_argument("--header", action="store_true", help="CSV files start with a header row")
    parser.add_argument("--label-column", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lwis", description="Metric learning with loss-weighted constraint sampling.")
    _add_global(parser, None)
    sub = parser.add_subparsers(dest="command", required=True)

    bench = sub.add_parser("bench", help="cross-validated benchmark grid")
    _add_global(bench, argparse.SUPPRESS)
    _add_experiment(bench)
    bench.add_argument("--resume", action="store_true", help="keep complete cells of an existing results.csv")
    bench.add_argument("--no-timing", action="store_true", help="leave the seconds columns empty (byte-reproducible files)")

    stats = sub.add_parser("stats", help="Friedman and Nemenyi tests on a results table")
    _add_global(stats, argparse.SUPPRESS)
    stats.add_argument("table", help="results.csv from bench, or a wide dataset x method table")
    stats.add_argument("--alpha", type=float, default=0.05, choices=[0.05, 0.10])
    stats.add_argument("--budget", type=int, help="use only this budget from a results file")

    weights = sub.add_parser("weights", help="dump weight snapshots of one LWIS run")
    _add_global(weights, argparse.SUPPRESS)
    _add_experiment(weights)
    weights.add_argument("--iterations", nargs="+", type=int)
    weights.add_argument("--bins", type=int)

    synth = sub.add_parser("synth", help="write a synthetic dataset as CSV")
    _add_global(synth, argparse.SUPPRESS)
    synth.add_argument("output")
    synth.add_argument("--kind", choices=["two_gaussians", "blobs"], default="two_gaussians")
    synth.add_argument("--n-per-class", type=int, default=100)
    synth.add_argument("--separation", type=float, default=DEFAULT_SEPARATION, help="mean distance in units of sd")
    synth.add_argument("--sd", type=float, default=1.0)
    synth.add_argument("--n", type=int, default=1000)
    synth.add_argument("--p", type=int, default=10)
    synth.add_argument("--classes", type=int, default=2)
    return parser


def spec_from_args(args) -> ExperimentSpec:
    spec = load_spec(args.spec) if args.spec else ExperimentSpec()
    direct = {
        "datasets": args.datasets, "strategies": args.strategies, "budgets": args.budgets,
        "runs": args.runs, "folds": args.folds, "k": args.k, "seed": args.seed, "jobs": args.jobs,
        "out_dir": args.out_dir, "delimiter": args.delimiter, "label_column": args.label_column,
        "iterations": getattr(args, "iterations", None), "bins": getattr(args, "bins", None),
    }
    for key, value in direct.items():
        if value is not None:
            setattr(spec, key, value)
    if args.no_scale:
        spec.scale = False
    if args.header:
        spec.header = True
    if getattr(args, "no_timing", False):
        spec.timing = False
    for key in ("margin", "weight_rate", "max_epochs", "constraint_kind", "loss_on"):
        value = getattr(args, key)
        if value is not None:
            spec.train[key] = value
    return spec


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "bench":
            return cmd_bench(spec_from_args(args), resume=args.resume)
        if args.command == "stats":
            cmd_stats(args.table, args.out_dir or ".", args.alpha, args.budget)
        elif args.command == "weights":
            cmd_weights(spec_from_args(args))
        elif args.command == "synth":
            seed = 0 if args.seed is None else args.seed
            cmd_synth(args.output, kind=args.kind, n_per_class=args.n_per_class, separation=args.separation,
                      sd=args.sd, n=args.n, p=args.p, classes=args.classes, seed=seed)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
