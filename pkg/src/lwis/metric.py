"""Mahalanobis metric matrices, their factorization, and the ITML rank-one step."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .errors import ContractViolation

SYMMETRY_TOL = 1e-10
PSD_TOL = 1e-8
RANK_TOL = 1e-10
DEGENERATE_PAIR_TOL = 1e-12
SIMILAR = "similar"
DISSIMILAR = "dissimilar"


@dataclass(frozen=True, eq=False)
class MetricMatrix:
    """A p x p symmetric positive semi-definite matrix defining d_A.

    The wrapped array is made read-only; operations return new instances.
    """

    entries: np.ndarray

    def __post_init__(self):
        a = np.array(self.entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
            raise ContractViolation(f"metric matrix must be square and non-empty, got shape {a.shape}")
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @classmethod
    def identity(cls, dim: int) -> "MetricMatrix":
        return cls(np.eye(dim))

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.entries).min())

    def is_symmetric(self, tol: float = SYMMETRY_TOL) -> bool:
        return bool(np.max(np.abs(self.entries - self.entries.T)) <= tol)

    def check(self) -> "MetricMatrix":
        """Raise unless the symmetric and PSD invariants hold."""
        if not np.all(np.isfinite(self.entries)):
            raise ContractViolation("metric matrix has non-finite entries")
        if not self.is_symmetric():
            raise ContractViolation("metric matrix is not symmetric")
        lo = self.min_eigenvalue()
        if lo < -PSD_TOL:
            raise ContractViolation(f"metric matrix is not PSD (min eigenvalue {lo:.3e})")
        return self

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)


@dataclass(frozen=True, eq=False)
class ProjectionFactor:
    """k x p matrix L with L^T L equal to the source metric."""

    entries: np.ndarray

    @property
    def rows(self) -> int:
        return self.entries.shape[0]

    def transform(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.entries.T


def _as_array(A) -> np.ndarray:
    return A.entries if isinstance(A, MetricMatrix) else np.asarray(A, dtype=float)


def mahalanobis_sq(A: MetricMatrix, x, y) -> float:
    """Squared Mahalanobis distance (x - y)^T A (x - y)."""
    a = _as_array(A)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != (a.shape[0],) or y.shape != (a.shape[0],):
        raise ContractViolation(
            f"vectors of shape {x.shape} and {y.shape} do not match metric dimension {a.shape[0]}"
        )
    v = x - y
    value = float(v @ a @ v)
    if -1e-9 <= value < 0.0:
        return 0.0
    return value


def projection_factor(A: MetricMatrix) -> ProjectionFactor:
    """Factor A as L^T L using its eigendecomposition.

    Negative eigenvalues are clipped to zero first; only eigenvalues above
    ``RANK_TOL`` contribute rows, so ``L.rows`` is the numerical rank.
    """
    a = _as_array(A)
    vals, vecs = np.linalg.eigh((a + a.T) / 2.0)
    keep = vals > RANK_TOL
    L = np.sqrt(vals[keep])[:, None] * vecs[:, keep].T
    return ProjectionFactor(L)


def psd_project(M) -> MetricMatrix:
    """Nearest PSD matrix in Frobenius norm, by eigenvalue clipping.

    Input that is already PSD is returned unchanged.
    """
    m = np.asarray(M, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ContractViolation(f"expected a square matrix, got shape {m.shape}")
    if np.max(np.abs(m - m.T)) > SYMMETRY_TOL:
        raise ContractViolation("psd_project requires a symmetric matrix")
    vals, vecs = np.linalg.eigh(m)
    if vals.min() >= 0.0:
        return MetricMatrix(m)
    clipped = (vecs * np.clip(vals, 0.0, None)) @ vecs.T
    return MetricMatrix((clipped + clipped.T) / 2.0)


def pairwise_sq(A: MetricMatrix, X: np.ndarray, Y: np.ndarray | None = None) -> np.ndarray:
    """Matrix of squared Mahalanobis distances between rows of X and Y."""
    L = projection_factor(A)
    ZX = L.transform(X)
    ZY = ZX if Y is None else L.transform(Y)
    if L.rows == 0:
        return np.zeros((ZX.shape[0], ZY.shape[0]))
    return cdist(ZX, ZY, "sqeuclidean")


@dataclass
class ItmlState:
    """Dual variables and running targets of ITML, keyed per constraint.

    ``upper_bound`` is the target squared distance for similar pairs and
    ``lower_bound`` the target for dissimilar ones. Keys are created lazily
    the first time a constraint is seen.
    """

    upper_bound: float
    lower_bound: float
    slack_tradeoff: float = 1.0
    dual_init: float = 0.0
    duals: dict = field(default_factory=dict)
    targets: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.slack_tradeoff <= 0:
            raise ContractViolation("slack_tradeoff must be positive")
        if not 0 < self.upper_bound < self.lower_bound:
            raise ContractViolation(
                f"need 0 < upper_bound < lower_bound, got {self.upper_bound}, {self.lower_bound}"
            )
        if self.dual_init < 0:
            raise ContractViolation("dual_init must be nonnegative")

    @classmethod
    def from_data(
        cls,
        X: np.ndarray,
        rng: np.random.Generator,
        *,
        n_pairs: int = 1000,
        similar_percentile: float = 5.0,
        dissimilar_percentile: float = 95.0,
        slack_tradeoff: float = 1.0,
        dual_init: float = 0.0,
    ) -> "ItmlState":
        """Set the bounds from percentiles of squared Euclidean distances
        over random pairs of rows."""
        X = np.asarray(X, dtype=float)
        n = X.shape[0]
        i = rng.integers(0, n, size=n_pairs)
        j = rng.integers(0, n, size=n_pairs)
        distinct = i != j
        d = np.sum((X[i[distinct]] - X[j[distinct]]) ** 2, axis=1)
        d = d[d > DEGENERATE_PAIR_TOL]
        if d.size == 0:
            raise ContractViolation("cannot set ITML bounds: all sampled pairs coincide")
        u, l = np.percentile(d, [similar_percentile, dissimilar_percentile])
        if not u < l:
            # Nearly constant distances; keep the ordering the update needs.
            l = u * (1.0 + 1e-6) + 1e-12
        return cls(float(u), float(l), slack_tradeoff=slack_tradeoff, dual_init=dual_init)

    def _lookup(self, key, kind):
        if key not in self.duals:
            self.duals[key] = self.dual_init
            self.targets[key] = self.upper_bound if kind == SIMILAR else self.lower_bound
        return self.duals[key], self.targets[key]


def _itml_step(a: np.ndarray, state: ItmlState, v: np.ndarray, kind: str, key) -> np.ndarray | None:
    """One Bregman projection; returns the new array, or None for no change."""
    Av = a @ v
    p = float(v @ Av)
    if p <= DEGENERATE_PAIR_TOL:
        return None
    sign = 1.0 if kind == SIMILAR else -1.0
    lam, xi = state._lookup(key, kind)
    g = state.slack_tradeoff
    step = min(lam, 0.5 * sign * (1.0 / p - g / xi))
    state.duals[key] = lam - step
    state.targets[key] = g * xi / (g + sign * step * xi)
    if step == 0.0:
        return None
    beta = sign * step / (1.0 - sign * step * p)
    out = a + beta * np.outer(Av, Av)
    return (out + out.T) * 0.5


def itml_update(A: MetricMatrix, state: ItmlState, i_vec, j_vec, kind: str, key) -> MetricMatrix:
    """Project A onto the constraint for one similar or dissimilar pair.

    Updates the pair's dual variable and slack target in ``state`` and returns
    ``A + beta A v v^T A`` with ``v = i_vec - j_vec``. Pairs whose current
    distance is numerically zero leave A untouched.
    """
    if kind not in (SIMILAR, DISSIMILAR):
        raise ContractViolation(f"kind must be {SIMILAR!r} or {DISSIMILAR!r}, got {kind!r}")
    a = _as_array(A)
    i_vec = np.asarray(i_vec, dtype=float)
    j_vec = np.asarray(j_vec, dtype=float)
    if i_vec.shape != (a.shape[0],) or j_vec.shape != (a.shape[0],):
        raise ContractViolation("pair vectors do not match the metric dimension")
    out = _itml_step(a, state, i_vec - j_vec, kind, key)
    if out is None:
        return A if isinstance(A, MetricMatrix) else MetricMatrix(a)
    return MetricMatrix(out)
