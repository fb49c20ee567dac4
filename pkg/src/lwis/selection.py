"""Constraint selection: uniform and weighted sampling, the exponential
weight update, and the Liu & Vemuri and Mei et al. baselines."""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy.spatial.distance import cdist

from .constraints import ConstraintSet, DissimilarPair, Relative, SimilarPair, Triplet
from .errors import ContractViolation, ResourceLimitError, UnsatisfiableConstraintError
from .metric import MetricMatrix, pairwise_sq

MEI_MAX_N = 20000
WEIGHT_FLOOR = 1e-300


@dataclass(frozen=True)
class RandomPrior:
    name = "random"
    dynamic = False


@dataclass(frozen=True)
class LiuVemuriPrior:
    a: int = 3
    name = "liu_vemuri"
    dynamic = False

    def __post_init__(self):
        if self.a < 1:
            raise ContractViolation("a must be a positive integer")


@dataclass(frozen=True)
class MeiDynamic:
    refresh_period: int = 1
    name = "mei"
    dynamic = True

    def __post_init__(self):
        if self.refresh_period < 1:
            raise ContractViolation("refresh_period must be a positive integer")


@dataclass(frozen=True)
class Lwis:
    """Loss-weighted anchor sampling. ``delta=None`` defers to the
    training config's weight rate."""

    delta: float | None = None
    name = "lwis"
    dynamic = True

    def __post_init__(self):
        if self.delta is not None and self.delta <= 0:
            raise ContractViolation("delta must be positive")


SelectionStrategy = Union[RandomPrior, LiuVemuriPrior, MeiDynamic, Lwis]
STRATEGIES = {cls.name: cls for cls in (RandomPrior, LiuVemuriPrior, MeiDynamic, Lwis)}


def make_strategy(spec: str) -> SelectionStrategy:
    """Build a strategy from ``name`` or ``name:key=value[,key=value]``."""
    name, _, params = spec.partition(":")
    name = name.strip().lower().replace("-", "_")
    if name not in STRATEGIES:
        raise ContractViolation(f"unknown strategy {name!r}; expected one of {sorted(STRATEGIES)}")
    cls = STRATEGIES[name]
    kwargs = {}
    for item in filter(None, (p.strip() for p in params.split(","))):
        key, eq, value = item.partition("=")
        if not eq or key not in cls.__dataclass_fields__:
            raise ContractViolation(f"bad parameter {item!r} for strategy {name!r}")
        kwargs[key] = float(value) if key == "delta" else int(value)
    return cls(**kwargs)


@dataclass(frozen=True, eq=False)
class WeightLedger:
    """Sampling distribution over observations."""

    weights: np.ndarray
    generation: int = 0
    _cdf: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.weights.size

    def cdf(self) -> np.ndarray:
        if self._cdf is None:
            object.__setattr__(self, "_cdf", np.cumsum(self.weights))
        return self._cdf

    def entropy(self) -> float:
        w = self.weights
        return float(-np.sum(w * np.log(w)))

    def is_valid(self, tol: float = 1e-12) -> bool:
        return bool(np.all(self.weights > 0) and abs(self.weights.sum() - 1.0) <= tol)


def init_uniform(n: int) -> WeightLedger:
    if n < 2:
        raise ContractViolation("a weight ledger needs at least two observations")
    return WeightLedger(np.full(n, 1.0 / n))


def draw_anchor(ledger: WeightLedger, rng: np.random.Generator) -> int:
    cdf = ledger.cdf()
    i = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return min(i, ledger.n - 1)


def sample_constraint(ledger: WeightLedger, cs: ConstraintSet, kind: str, rng: np.random.Generator):
    """Draw an anchor from the ledger, then its partners uniformly.

    ``relative`` yields the triplet-compatible form ``Relative(i, j, i, k)``.
    """
    if ledger.n != cs.n:
        raise ContractViolation("ledger and constraint set sizes differ")
    i = draw_anchor(ledger, rng)
    if kind == "similar":
        return SimilarPair(i, cs.draw_similar_partner(i, rng))
    if kind == "dissimilar":
        return DissimilarPair(i, cs.draw_dissimilar_partner(i, rng))
    if kind in ("triplet", "relative"):
        # Check the dissimilar side first so single-class data fails clearly.
        k = cs.draw_dissimilar_partner(i, rng)
        j = cs.draw_similar_partner(i, rng)
        return Triplet(i, j, k) if kind == "triplet" else Relative(i, j, i, k)
    raise ContractViolation(f"unknown constraint kind {kind!r}")


def lwis_update(ledger: WeightLedger, anchor: int, alpha_val: float, delta: float) -> WeightLedger:
    """Multiply the anchor's weight by exp(delta * alpha) and renormalize."""
    if alpha_val == 0.0:
        return WeightLedger(ledger.weights, ledger.generation + 1)
    w = ledger.weights.copy()
    w[anchor] *= np.exp(delta * alpha_val)
    w /= w.sum()
    if w.min() < WEIGHT_FLOOR:
        np.maximum(w, WEIGHT_FLOOR, out=w)
        w /= w.sum()
    return WeightLedger(w, ledger.generation + 1)


def _grouped(labels):
    if np.unique(labels).size < 2:
        raise UnsatisfiableConstraintError("need at least two classes to form triplets")


def liu_vemuri_triplets(data, a: int = 3) -> list[Triplet]:
    """Prior triplets pairing each point's farthest same-class neighbours
    with its nearest other-class neighbours, by rank, in Euclidean space."""
    if a < 1:
        raise ContractViolation("a must be a positive integer")
    X = np.asarray(data.features, dtype=float)
    labels = np.asarray(data.labels)
    _grouped(labels)
    D = cdist(X, X, "sqeuclidean")
    idx_all = np.arange(labels.size)
    out: list[Triplet] = []
    for i in range(labels.size):
        same = idx_all[(labels == labels[i]) & (idx_all != i)]
        other = idx_all[labels != labels[i]]
        m = min(a, same.size, other.size)
        if m == 0:
            continue
        far = same[np.argsort(-D[i, same], kind="stable")[:m]]
        near = other[np.argsort(D[i, other], kind="stable")[:m]]
        out.extend(Triplet(i, int(j), int(k)) for j, k in zip(far, near))
    return out


def _per_class_blocks(D, labels):
    """Yield (anchors, same-class idx matrix, same dists, other idx, other dists)."""
    n = labels.size
    idx_all = np.arange(n)
    for c in np.unique(labels):
        members = idx_all[labels == c]
        other = idx_all[labels != c]
        m = members.size
        if m < 2 or other.size == 0:
            continue
        off = ~np.eye(m, dtype=bool)
        same_idx = np.broadcast_to(members, (m, m))[off].reshape(m, m - 1)
        Ds = D[np.ix_(members, members)][off].reshape(m, m - 1)
        Dd = D[np.ix_(members, other)]
        yield members, same_idx, Ds, other, Dd


def disorder_count(D: np.ndarray, labels) -> int:
    """Number of (i, j, k) with j same-class, k other-class and d_ij >= d_ik."""
    labels = np.asarray(labels)
    total = 0
    for _, _, Ds, _, Dd in _per_class_blocks(D, labels):
        nd = Dd.shape[1]
        both = np.concatenate([Dd, Ds], axis=1)
        # Stable sort keeps other-class entries first among equal distances.
        order = np.argsort(both, axis=1, kind="stable")
        is_other = order < nd
        seen = np.cumsum(is_other, axis=1)
        total += int(seen[~is_other].sum())
    return total


def mei_select(data, A: MetricMatrix, budget: int) -> tuple[list[Triplet], int]:
    """Disorder of the metric and the ``budget`` most violated triplets.

    Violation of (i, j, k) is d_ij - d_ik. Ties go to the lower anchor index,
    then to the partner ranks within the anchor's sorted distance lists.
    """
    if budget < 1:
        raise ContractViolation("budget must be positive")
    X = np.asarray(data.features, dtype=float)
    labels = np.asarray(data.labels)
    if labels.size > MEI_MAX_N:
        raise ResourceLimitError(f"mei_select needs the full distance matrix; n={labels.size} exceeds {MEI_MAX_N}")
    _grouped(labels)
    D = pairwise_sq(A, X)
    disorder = 0
    blocks = []
    heap = []
    for members, same_idx, Ds, other, Dd in _per_class_blocks(D, labels):
        nd = Dd.shape[1]
        order = np.argsort(np.concatenate([Dd, Ds], axis=1), axis=1, kind="stable")
        is_other = order < nd
        disorder += int(np.cumsum(is_other, axis=1)[~is_other].sum())

        fs = np.argsort(-Ds, axis=1, kind="stable")
        ns = np.argsort(Dd, axis=1, kind="stable")
        far_d = np.take_along_axis(Ds, fs, axis=1)
        near_d = np.take_along_axis(Dd, ns, axis=1)
        blk = len(blocks)
        blocks.append((np.take_along_axis(same_idx, fs, axis=1), far_d, other[ns], near_d))
        top = far_d[:, 0] - near_d[:, 0]
        heap.extend(zip((-top).tolist(), members.tolist(), [0] * members.size, [0] * members.size,
                        [blk] * members.size, range(members.size)))
    heapq.heapify(heap)
    out: list[Triplet] = []
    while heap and len(out) < budget:
        _, i, a, b, blk, r = heapq.heappop(heap)
        far_idx, far_d, near_idx, near_d = blocks[blk]
        out.append(Triplet(i, int(far_idx[r, a]), int(near_idx[r, b])))
        if b + 1 < near_d.shape[1]:
            heapq.heappush(heap, (-float(far_d[r, a] - near_d[r, b + 1]), i, a, b + 1, blk, r))
        if b == 0 and a + 1 < far_d.shape[1]:
            heapq.heappush(heap, (-float(far_d[r, a + 1] - near_d[r, 0]), i, a + 1, 0, blk, r))
    return out, disorder
