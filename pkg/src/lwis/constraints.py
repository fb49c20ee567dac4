"""Constraint types and the label-derived similar/dissimilar sets."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property
from itertools import combinations
from typing import Union

import numpy as np

from .errors import ContractViolation, ParseError, ResourceLimitError, UnsatisfiableConstraintError

ENUMERATION_LIMIT = 2000


@dataclass(frozen=True)
class SimilarPair:
    i: int
    j: int
    kind = "similar"

    @property
    def anchor(self) -> int:
        return self.i

    @property
    def indices(self) -> tuple:
        return (self.i, self.j)


@dataclass(frozen=True)
class DissimilarPair:
    i: int
    k: int
    kind = "dissimilar"

    @property
    def anchor(self) -> int:
        return self.i

    @property
    def indices(self) -> tuple:
        return (self.i, self.k)


@dataclass(frozen=True)
class Triplet:
    """x_i should be closer to x_j (same class) than to x_k (other class)."""

    i: int
    j: int
    k: int
    kind = "triplet"

    @property
    def anchor(self) -> int:
        return self.i

    @property
    def indices(self) -> tuple:
        return (self.i, self.j, self.k)


@dataclass(frozen=True)
class Relative:
    """d(x_i, x_j) should be below d(x_k, x_l)."""

    i: int
    j: int
    k: int
    l: int
    kind = "relative"

    @property
    def anchor(self) -> int:
        return self.i

    @property
    def indices(self) -> tuple:
        return (self.i, self.j, self.k, self.l)


Constraint = Union[SimilarPair, DissimilarPair, Triplet, Relative]
KINDS = ("similar", "dissimilar", "triplet", "relative")
_FILE_CODES = {"s": SimilarPair, "d": DissimilarPair, "t": Triplet, "r": Relative}
_CODE_OF = {cls: code for code, cls in _FILE_CODES.items()}


def validate_constraint(c: Constraint, n: int) -> None:
    """Raise if an index is out of range or the constraint repeats an index.

    A relative constraint may share its first index between both pairs
    (``Relative(i, j, i, k)``), which is the triplet-compatible form.
    """
    idx = c.indices
    if any(not 0 <= t < n for t in idx):
        raise ContractViolation(f"{c} has an index outside [0, {n})")
    if isinstance(c, Relative):
        if c.i == c.j or c.k == c.l or {c.i, c.j} == {c.k, c.l}:
            raise ContractViolation(f"{c} is degenerate")
        if len(set(idx)) < 3 or (len(set(idx)) == 3 and c.i != c.k):
            raise ContractViolation(f"{c} repeats an index")
    elif len(set(idx)) != len(idx):
        raise ContractViolation(f"{c} repeats an index")


def triplet_to_pairs(t: Triplet) -> tuple[SimilarPair, DissimilarPair]:
    return SimilarPair(t.i, t.j), DissimilarPair(t.i, t.k)


class ConstraintSet:
    """Similar (S) and dissimilar (D) index pairs implied by class labels.

    Pairs are kept implicitly as per-class index lists; ``similar`` and
    ``dissimilar`` enumerate them explicitly only up to ``ENUMERATION_LIMIT``
    observations.
    """

    def __init__(self, labels):
        labels = np.asarray(labels)
        if labels.ndim != 1 or labels.size < 2:
            raise ContractViolation("need at least two observations to build constraints")
        self.labels = labels
        self.n = labels.size
        classes, inverse = np.unique(labels, return_inverse=True)
        self.classes = classes
        self._class_of = inverse
        # Indices grouped by class, classes laid out in contiguous blocks.
        self._order = np.argsort(inverse, kind="stable")
        counts = np.bincount(inverse, minlength=classes.size)
        self._start = np.concatenate([[0], np.cumsum(counts)[:-1]])
        self._size = counts
        self._position = np.empty(self.n, dtype=np.int64)
        self._position[self._order] = np.arange(self.n) - self._start[inverse[self._order]]

    def members(self, c: int) -> np.ndarray:
        s = self._start[c]
        return self._order[s : s + self._size[c]]

    @property
    def n_similar(self) -> int:
        return int(np.sum(self._size * (self._size - 1) // 2))

    @property
    def n_dissimilar(self) -> int:
        return self.n * (self.n - 1) // 2 - self.n_similar

    def _check_enumerable(self):
        if self.n > ENUMERATION_LIMIT:
            raise ResourceLimitError(
                f"explicit pair enumeration is limited to {ENUMERATION_LIMIT} observations, got {self.n}"
            )

    @cached_property
    def similar(self) -> list[tuple[int, int]]:
        self._check_enumerable()
        pairs = []
        for c in range(self.classes.size):
            pairs.extend(combinations(sorted(self.members(c).tolist()), 2))
        return sorted(pairs)

    @cached_property
    def dissimilar(self) -> list[tuple[int, int]]:
        self._check_enumerable()
        lab = self._class_of
        return [(a, b) for a in range(self.n) for b in range(a + 1, self.n) if lab[a] != lab[b]]

    def same_class_count(self, i: int) -> int:
        return int(self._size[self._class_of[i]] - 1)

    def other_class_count(self, i: int) -> int:
        return int(self.n - self._size[self._class_of[i]])

    def draw_similar_partner(self, i: int, rng: np.random.Generator) -> int:
        """Uniform draw of j != i sharing i's label."""
        c = self._class_of[i]
        size = self._size[c]
        if size < 2:
            raise UnsatisfiableConstraintError(f"observation {i} has no same-class partner")
        r = int(rng.integers(size - 1))
        if r >= self._position[i]:
            r += 1
        return int(self._order[self._start[c] + r])

    def draw_dissimilar_partner(self, i: int, rng: np.random.Generator) -> int:
        """Uniform draw of k with a label different from i's."""
        c = self._class_of[i]
        size = self._size[c]
        if self.n - size < 1:
            raise UnsatisfiableConstraintError("all observations share one label; no dissimilar pair exists")
        r = int(rng.integers(self.n - size))
        if r >= self._start[c]:
            r += size
        return int(self._order[r])


def build_sd(labels) -> ConstraintSet:
    return ConstraintSet(labels)


def read_constraints(path) -> list[Constraint]:
    """Parse a ``kind,i,j[,k[,l]]`` file with kind one of s, d, t, r."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not "".join(row).strip() or row[0].lstrip().startswith("#"):
                continue
            code = row[0].strip().lower()
            if code not in _FILE_CODES:
                raise ParseError(lineno, f"unknown constraint kind {row[0]!r}")
            cls = _FILE_CODES[code]
            arity = len(cls.__dataclass_fields__)
            if len(row) - 1 != arity:
                raise ParseError(lineno, f"kind {code!r} takes {arity} indices, got {len(row) - 1}")
            try:
                idx = [int(v) for v in row[1:]]
            except ValueError:
                raise ParseError(lineno, "indices must be integers") from None
            out.append(cls(*idx))
    return out


def write_constraints(path, constraints) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        for c in constraints:
            w.writerow([_CODE_OF[type(c)], *c.indices])
