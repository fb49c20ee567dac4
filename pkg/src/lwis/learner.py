"""Training loop: pick a constraint, take ITML steps, score it, reweight."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .constraints import (
    KINDS,
    ConstraintSet,
    DissimilarPair,
    Relative,
    SimilarPair,
    Triplet,
    triplet_to_pairs,
    validate_constraint,
)
from .errors import ContractViolation, NumericalFailure, UnsatisfiableConstraintError
from .loss import alpha, constraint_loss, reference_distance
from .metric import DISSIMILAR, SIMILAR, ItmlState, MetricMatrix, _itml_step
from .selection import (
    LiuVemuriPrior,
    Lwis,
    MeiDynamic,
    RandomPrior,
    WeightLedger,
    init_uniform,
    liu_vemuri_triplets,
    lwis_update,
    mei_select,
    sample_constraint,
)


@dataclass(frozen=True)
class TrainConfig:
    margin: float = 2.0
    weight_rate: float = 1.0
    budget: int = 100
    constraint_kind: str = "triplet"
    max_epochs: int = 50
    convergence_tol: float = 1e-5
    convergence_patience: int = 10
    seed: int | None = None
    slack_tradeoff: float = 1.0
    similar_percentile: float = 5.0
    dissimilar_percentile: float = 95.0
    dual_init: float = 0.0
    alpha_cap: float = 10.0
    loss_on: str = "constraint"

    def __post_init__(self):
        for name in ("margin", "weight_rate", "convergence_tol", "slack_tradeoff", "alpha_cap"):
            if not getattr(self, name) > 0:
                raise ContractViolation(f"{name} must be positive")
        if self.budget < 1:
            raise ContractViolation("budget must be at least 1")
        if self.max_epochs < 0:
            raise ContractViolation("max_epochs must be nonnegative")
        if self.convergence_patience < 1:
            raise ContractViolation("convergence_patience must be positive")
        if self.constraint_kind not in KINDS:
            raise ContractViolation(f"constraint_kind must be one of {KINDS}")
        if self.loss_on not in ("constraint", "pairs"):
            raise ContractViolation("loss_on must be 'constraint' or 'pairs'")
        if not 0 <= self.similar_percentile < self.dissimilar_percentile <= 100:
            raise ContractViolation("need 0 <= similar_percentile < dissimilar_percentile <= 100")


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    loss: float
    entropy: float
    delta: float


@dataclass
class TrainResult:
    metric: MetricMatrix
    ledger: WeightLedger
    trace: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    snapshots: dict = field(default_factory=dict)

    def __iter__(self):
        return iter((self.metric, self.ledger, self.trace))


def write_trace(trace, path) -> None:
    """One JSON object per line: iteration, loss, delta, entropy."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in trace:
            fh.write(json.dumps(asdict(rec)) + "\n")


def read_trace(path) -> list[TraceRecord]:
    with open(path, encoding="utf-8") as fh:
        return [TraceRecord(**json.loads(line)) for line in fh if line.strip()]


def has_converged(frobenius_deltas, tol: float, patience: int) -> bool:
    """True iff the last ``patience`` relative changes are all below ``tol``."""
    window = list(frobenius_deltas)
    if len(window) < patience:
        return False
    return all(d < tol for d in window[-patience:])


def _pairs(c):
    """(i, j, kind) ITML steps implied by one constraint."""
    if isinstance(c, Triplet):
        return ((c.i, c.j, SIMILAR), (c.i, c.k, DISSIMILAR))
    if isinstance(c, SimilarPair):
        return ((c.i, c.j, SIMILAR),)
    if isinstance(c, DissimilarPair):
        return ((c.i, c.k, DISSIMILAR),)
    if isinstance(c, Relative):
        return ((c.i, c.j, SIMILAR), (c.k, c.l, DISSIMILAR))
    raise ContractViolation(f"unknown constraint type {type(c).__name__}")


def _scored_parts(c):
    """Pair constraints whose losses are scored when ``loss_on="pairs"``."""
    if isinstance(c, Triplet):
        return triplet_to_pairs(c)
    if isinstance(c, Relative):
        return (SimilarPair(c.i, c.j), DissimilarPair(c.k, c.l))
    return (c,)


def build_prior_pool(data, strategy, config: TrainConfig, rng, cs: ConstraintSet | None = None) -> list:
    """The fixed constraint pool used by a prior selection strategy."""
    if isinstance(strategy, RandomPrior):
        cs = cs or ConstraintSet(data.labels)
        uniform = init_uniform(data.n)
        return [sample_constraint(uniform, cs, config.constraint_kind, rng) for _ in range(config.budget)]
    if isinstance(strategy, LiuVemuriPrior):
        triplets = liu_vemuri_triplets(data, strategy.a)
        if len(triplets) <= config.budget:
            return triplets
        pick = rng.choice(len(triplets), size=config.budget, replace=False)
        return [triplets[t] for t in pick]
    raise ContractViolation(f"{type(strategy).__name__} is not a prior strategy")


def train(data, strategy, config: TrainConfig, *, pool=None, snapshot_at=()) -> TrainResult:
    """Learn a metric on ``data`` with the given constraint selection strategy.

    Prior strategies build a pool of ``config.budget`` constraints once and
    cycle through it for at most ``max_epochs`` passes. Dynamic strategies
    pick a fresh constraint each iteration, for at most
    ``budget * max_epochs`` iterations. Every constraint is applied as one or
    two ITML pair steps; its hinge loss under the updated metric then drives
    the LWIS weight update. Training stops early once the relative Frobenius
    change of A stays below ``convergence_tol`` for ``convergence_patience``
    consecutive iterations.

    ``pool`` replaces the generated pool of a prior strategy.
    ``snapshot_at`` lists iterations whose weight vectors are kept in
    ``result.snapshots`` (iteration 0 is the initial ledger).
    """
    X = np.asarray(data.features, dtype=float)
    n, p = X.shape
    if np.unique(data.labels).size < 2:
        raise UnsatisfiableConstraintError("training needs at least two classes")
    rng = np.random.default_rng(config.seed)
    a = np.eye(p)
    ledger = init_uniform(n)
    snapshot_at = set(snapshot_at)
    result = TrainResult(MetricMatrix(a), ledger)
    if 0 in snapshot_at:
        result.snapshots[0] = ledger.weights
    if config.max_epochs == 0:
        return result

    state = ItmlState.from_data(
        X,
        rng,
        similar_percentile=config.similar_percentile,
        dissimilar_percentile=config.dissimilar_percentile,
        slack_tradeoff=config.slack_tradeoff,
        dual_init=config.dual_init,
    )
    cs = ConstraintSet(data.labels)
    delta_rate = config.weight_rate
    if isinstance(strategy, Lwis) and strategy.delta is not None:
        delta_rate = strategy.delta

    if strategy.dynamic:
        max_iter = config.budget * config.max_epochs

        def constraints():
            mei_pool = None
            for t in range(max_iter):
                if isinstance(strategy, MeiDynamic):
                    if t % strategy.refresh_period == 0:
                        mei_pool, _ = mei_select(data, MetricMatrix(a), config.budget)
                    yield mei_pool[int(rng.integers(len(mei_pool)))]
                else:
                    yield sample_constraint(ledger, cs, config.constraint_kind, rng)

    else:
        if pool is None:
            pool = build_prior_pool(data, strategy, config, rng, cs)
        pool = list(pool)
        for c in pool:
            validate_constraint(c, n)
        if not pool:
            raise ContractViolation("empty constraint pool")

        def constraints():
            for _ in range(config.max_epochs):
                yield from pool

    deltas = []
    update_weights = isinstance(strategy, Lwis)
    t = 0
    for c in constraints():
        t += 1
        prev = a
        for u, v, kind in _pairs(c):
            key = (min(u, v), max(u, v), kind)
            out = _itml_step(a, state, X[u] - X[v], kind, key)
            if out is not None:
                a = out
        if not np.all(np.isfinite(a)):
            raise NumericalFailure(t)
        metric = MetricMatrix(a)
        scored = _scored_parts(c) if config.loss_on == "pairs" else (c,)
        loss = 0.0
        for part in scored:
            part_loss = constraint_loss(part, metric, X, config.margin)
            loss += part_loss
            if update_weights:
                a_val = alpha(part_loss, reference_distance(part, metric, X), cap=config.alpha_cap)
                ledger = lwis_update(ledger, c.anchor, a_val, delta_rate)
        delta = float(np.linalg.norm(a - prev) / max(np.linalg.norm(prev), 1.0))
        deltas.append(delta)
        result.trace.append(TraceRecord(t, loss, ledger.entropy(), delta))
        if t in snapshot_at:
            result.snapshots[t] = ledger.weights
        if has_converged(deltas[-config.convergence_patience :], config.convergence_tol, config.convergence_patience):
            result.converged = True
            break

    result.metric = MetricMatrix(a)
    result.ledger = ledger
    result.iterations = t
    return result
