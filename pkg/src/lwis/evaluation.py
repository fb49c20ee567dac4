"""k-NN under a learned metric, cross-validated benchmarking, and the
accuracy-versus-budget grid."""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats as sps

from .data import Dataset, apply_standardization, standardize
from .errors import ContractViolation
from .learner import TrainConfig, train
from .metric import MetricMatrix, pairwise_sq


def knn_predict(A: MetricMatrix, train_data: Dataset, query, k: int = 3) -> int:
    """Label of ``query`` by majority vote among its k nearest training rows."""
    query = np.asarray(query, dtype=float)[None, :]
    return int(knn_classify(A, train_data, query, k)[0])


def knn_classify(A: MetricMatrix, train_data: Dataset, queries, k: int = 3) -> np.ndarray:
    """Vectorized k-NN.

    Equal distances are ordered by training index. A tied vote goes to the
    label of the single nearest neighbour.
    """
    X = np.asarray(train_data.features, dtype=float)
    y = np.asarray(train_data.labels)
    if X.shape[0] == 0:
        raise ContractViolation("empty training set")
    if not 1 <= k <= X.shape[0]:
        raise ContractViolation(f"k={k} must lie in [1, {X.shape[0]}]")
    Q = np.atleast_2d(np.asarray(queries, dtype=float))
    D = pairwise_sq(A, Q, X)
    nearest = np.argsort(D, axis=1, kind="stable")[:, :k]
    votes = y[nearest]
    n_labels = int(y.max()) + 1
    out = np.empty(Q.shape[0], dtype=np.int64)
    for r, row in enumerate(votes):
        counts = np.bincount(row, minlength=n_labels)
        best = np.flatnonzero(counts == counts.max())
        out[r] = best[0] if best.size == 1 else row[0]
    return out


def stratified_folds(labels, folds: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Shuffle each class and deal its members round-robin into folds."""
    labels = np.asarray(labels)
    if folds < 2:
        raise ContractViolation("need at least two folds")
    parts = [[] for _ in range(folds)]
    offset = 0
    for c in np.unique(labels):
        members = rng.permutation(np.flatnonzero(labels == c))
        if members.size < folds:
            raise ContractViolation(f"class {c} has {members.size} members, fewer than {folds} folds")
        for r, idx in enumerate(members):
            parts[(r + offset) % folds].append(idx)
        offset += members.size
    return [np.sort(np.array(p, dtype=np.int64)) for p in parts]


def mean_ci(values, level: float = 0.95) -> tuple[float, float]:
    """Mean and CI half-width; t quantile below 30 samples, normal above."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return float("nan"), float("nan")
    if v.size == 1:
        return float(v[0]), 0.0
    sd = v.std(ddof=1)
    q = sps.t.ppf(0.5 + level / 2, v.size - 1) if v.size < 30 else sps.norm.ppf(0.5 + level / 2)
    return float(v.mean()), float(q * sd / math.sqrt(v.size))


@dataclass
class BenchmarkResult:
    dataset: str
    strategy: str
    budget: int
    accuracies: list = field(default_factory=list)
    seconds: list = field(default_factory=list)
    seeds: list = field(default_factory=list)
    error: str | None = None

    @property
    def runs(self) -> int:
        return len(self.accuracies)

    @property
    def mean_accuracy(self) -> float:
        return mean_ci(self.accuracies)[0]

    @property
    def ci_half_width(self) -> float:
        return mean_ci(self.accuracies)[1]

    @property
    def mean_seconds(self) -> float:
        return float(np.mean(self.seconds)) if self.seconds else float("nan")

    def summary(self) -> dict:
        return {
            "dataset": self.dataset,
            "strategy": self.strategy,
            "budget": self.budget,
            "runs": self.runs,
            "mean_accuracy": self.mean_accuracy,
            "ci95_half_width": self.ci_half_width,
            "mean_seconds": self.mean_seconds,
            "seeds": list(self.seeds),
            "error": self.error,
        }


def run_seeds(seed, runs: int) -> list[int]:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(runs)]


def evaluate_split(data: Dataset, train_idx, test_idx, strategy, config: TrainConfig, k: int = 3, *, scale: bool = True):
    """Train on ``train_idx`` only, classify ``test_idx``; returns (accuracy, seconds)."""
    tr = data.take(train_idx)
    te = data.take(test_idx)
    if scale and not data.standardized:
        tr = standardize(tr)
        te = apply_standardization(te, tr)
    start = time.perf_counter()
    metric = train(tr, strategy, config).metric
    elapsed = time.perf_counter() - start
    pred = knn_classify(metric, tr, te.features, k)
    return float(np.mean(pred == te.labels)), elapsed


def cross_validate(
    data: Dataset,
    strategy,
    config: TrainConfig,
    folds: int = 2,
    runs: int = 10,
    k: int = 3,
    seed=0,
    *,
    scale: bool = True,
    strategy_name: str | None = None,
) -> BenchmarkResult:
    """Repeated stratified k-fold evaluation of one strategy.

    Each run draws a fresh split, trains on every training fold, scores the
    held-out fold, and averages fold accuracies. Features are z-scored with
    training-fold statistics unless ``scale`` is false. Seconds count
    training only.
    """
    counts = data.class_counts()
    if counts.min() < folds:
        raise ContractViolation(f"smallest class has {counts.min()} members, fewer than {folds} folds")
    result = BenchmarkResult(data.name, strategy_name or strategy.name, config.budget)
    for run_seed in run_seeds(seed, runs):
        rng = np.random.default_rng(run_seed)
        parts = stratified_folds(data.labels, folds, rng)
        accs, secs = [], 0.0
        for f, test_idx in enumerate(parts):
            train_idx = np.sort(np.concatenate([q for g, q in enumerate(parts) if g != f]))
            cfg = replace(config, seed=int(rng.integers(2**63)))
            acc, elapsed = evaluate_split(data, train_idx, test_idx, strategy, cfg, k, scale=scale)
            accs.append(acc)
            secs += elapsed
        result.accuracies.append(float(np.mean(accs)))
        result.seconds.append(secs)
        result.seeds.append(run_seed)
    return result


def default_budgets(n: int) -> list[int]:
    """{50, ceil(n/2), n, 2n}, each at least 50, without duplicates."""
    return sorted({max(50, b) for b in (50, math.ceil(n / 2), n, 2 * n)})


def resolve_budget(token, n: int) -> int:
    """An integer, or a multiple of n written like ``"n"``, ``"2n"``, ``"0.5n"``."""
    if isinstance(token, (int, np.integer)):
        return int(token)
    text = str(token).strip().lower()
    if text.endswith("n"):
        factor = float(text[:-1]) if text[:-1] else 1.0
        return max(1, math.ceil(factor * n))
    return int(text)


@dataclass(frozen=True)
class GridCell:
    dataset_index: int
    strategy_index: int
    budget: int
    seed: int


def _run_cell(args):
    data, strategy, name, config, folds, runs, k, seed, scale = args
    try:
        return cross_validate(data, strategy, config, folds, runs, k, seed, scale=scale, strategy_name=name)
    except Exception as exc:  # recorded per cell, grid continues
        return BenchmarkResult(data.name, name, config.budget, error=f"{type(exc).__name__}: {exc}")


def grid_cells(datasets, strategies, budgets, master_seed=0):
    """Cartesian product of the axes with an independent seed per cell."""
    root = np.random.SeedSequence(master_seed)
    for di, data in enumerate(datasets):
        axis = default_budgets(data.n) if budgets is None else [resolve_budget(b, data.n) for b in budgets]
        for si, _ in enumerate(strategies):
            for b in axis:
                child = np.random.SeedSequence(root.entropy, spawn_key=(di, si, b))
                yield GridCell(di, si, b, int(child.generate_state(1)[0]))


def benchmark_grid(
    datasets,
    strategies,
    budgets=None,
    config: TrainConfig | None = None,
    *,
    folds: int = 2,
    runs: int = 10,
    k: int = 3,
    master_seed=0,
    jobs: int = 1,
    scale: bool = True,
    skip=frozenset(),
):
    """Yield one BenchmarkResult per (dataset, strategy, budget) cell, in order.

    ``strategies`` is a sequence of (name, strategy) pairs or strategies.
    ``budgets=None`` uses :func:`default_budgets` per dataset. Cells whose
    (dataset name, strategy name, budget) appear in ``skip`` are not run.
    A failing cell yields a result with ``error`` set.
    """
    if not datasets or not strategies:
        raise ContractViolation("benchmark grid needs at least one dataset and one strategy")
    if budgets is not None and len(budgets) == 0:
        raise ContractViolation("benchmark grid needs at least one budget")
    config = config or TrainConfig()
    named = [s if isinstance(s, tuple) else (s.name, s) for s in strategies]
    tasks = []
    for cell in grid_cells(datasets, named, budgets, master_seed):
        data = datasets[cell.dataset_index]
        name, strategy = named[cell.strategy_index]
        if (data.name, name, cell.budget) in skip:
            continue
        cfg = replace(config, budget=cell.budget)
        tasks.append((data, strategy, name, cfg, folds, runs, k, cell.seed, scale))
    if jobs <= 1:
        for task in tasks:
            yield _run_cell(task)
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            yield from pool.map(_run_cell, tasks)
