"""Hinge losses per constraint kind and the normalized error fed to the weights."""

from __future__ import annotations

import numpy as np

from .constraints import DissimilarPair, Relative, SimilarPair, Triplet
from .errors import ContractViolation
from .metric import mahalanobis_sq

ALPHA_EPS = 1e-9
ALPHA_MAX = 10.0


def _rows(data):
    return np.asarray(getattr(data, "features", data), dtype=float)


def _dist(A, X, a, b):
    return mahalanobis_sq(A, X[a], X[b])


def _check(c, n):
    if any(not 0 <= t < n for t in c.indices):
        raise ContractViolation(f"{c} has an index outside [0, {n})")


def constraint_loss(c, A, data, margin: float) -> float:
    """Hinge loss of constraint ``c`` under metric ``A`` with margin ``margin``.

    Distances are squared Mahalanobis distances. ``data`` is a Dataset or a
    feature matrix.
    """
    if margin <= 0:
        raise ContractViolation("margin must be positive")
    X = _rows(data)
    _check(c, X.shape[0])
    if isinstance(c, SimilarPair):
        return max(0.0, _dist(A, X, c.i, c.j) - margin)
    if isinstance(c, DissimilarPair):
        return max(0.0, margin - _dist(A, X, c.i, c.k))
    if isinstance(c, Triplet):
        return max(0.0, margin - _dist(A, X, c.i, c.k) + _dist(A, X, c.i, c.j))
    if isinstance(c, Relative):
        return max(0.0, margin - _dist(A, X, c.k, c.l) + _dist(A, X, c.i, c.j))
    raise ContractViolation(f"unknown constraint type {type(c).__name__}")


def reference_distance(c, A, data) -> float:
    """Distance used to normalize the loss of ``c``.

    The similar partner for a similar pair, otherwise the pair that should be
    far apart (for a relative constraint that is ``(k, l)``).
    """
    X = _rows(data)
    _check(c, X.shape[0])
    if isinstance(c, SimilarPair):
        return _dist(A, X, c.i, c.j)
    if isinstance(c, (DissimilarPair, Triplet)):
        return _dist(A, X, c.i, c.k)
    if isinstance(c, Relative):
        return _dist(A, X, c.k, c.l)
    raise ContractViolation(f"unknown constraint type {type(c).__name__}")


def alpha(loss: float, d_ref: float, *, eps: float = ALPHA_EPS, cap: float = ALPHA_MAX) -> float:
    """Loss relative to the reference distance, floored and capped."""
    if loss <= 0.0:
        return 0.0
    return min(loss / max(d_ref, eps), cap)
