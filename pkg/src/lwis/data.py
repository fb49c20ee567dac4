"""Datasets: CSV ingestion, z-scoring, stratified subsampling, and the
two-Gaussian toy generator."""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.stats import norm

from .errors import ContractViolation, ParseError


@dataclass(frozen=True, eq=False)
class Dataset:
    name: str
    features: np.ndarray
    labels: np.ndarray
    standardized: bool = False
    mean: np.ndarray | None = None
    scale: np.ndarray | None = None

    def __post_init__(self):
        X = np.array(self.features, dtype=float)
        y = np.array(self.labels)
        if X.ndim != 2:
            raise ContractViolation(f"features must be a 2-D matrix, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise ContractViolation("one label per row is required")
        if X.shape[0] < 2:
            raise ContractViolation("a dataset needs at least two observations")
        if not np.all(np.isfinite(X)):
            raise ContractViolation("features contain non-finite values")
        if not np.issubdtype(y.dtype, np.integer) or y.min() < 0:
            raise ContractViolation("labels must be nonnegative integer class ids")
        if not np.array_equal(np.unique(y), np.arange(y.max() + 1)):
            raise ContractViolation("labels must be dense ids 0..C-1")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)

    def take(self, idx) -> "Dataset":
        """Rows ``idx`` in the given order; every class must remain present."""
        idx = np.asarray(idx, dtype=np.int64)
        return replace(self, features=self.features[idx], labels=self.labels[idx])


def _dense_labels(raw):
    mapping: dict = {}
    return np.array([mapping.setdefault(v, len(mapping)) for v in raw], dtype=np.int64), mapping


def load_csv(path, *, delimiter: str = ",", header: bool = False, label_column: int = -1, name=None) -> Dataset:
    """Read numeric features plus one label column.

    Labels are mapped to dense ids in order of first appearance.
    """
    path = Path(path)
    feats, raw_labels = [], []
    width = None
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        for lineno, row in enumerate(reader, start=1):
            if header and lineno == 1:
                continue
            if not row or all(not cell.strip() for cell in row):
                continue
            if width is None:
                width = len(row)
                if width < 2:
                    raise ParseError(lineno, "need at least one feature column and a label column")
            elif len(row) != width:
                raise ParseError(lineno, f"expected {width} fields, got {len(row)}")
            col = label_column % width
            try:
                values = [float(cell) for c, cell in enumerate(row) if c != col]
            except ValueError:
                raise ParseError(lineno, "non-numeric feature value") from None
            if not all(np.isfinite(values)):
                raise ParseError(lineno, "non-finite feature value")
            feats.append(values)
            raw_labels.append(row[col].strip())
    if not feats:
        raise ContractViolation(f"{path} contains no data rows")
    labels, _ = _dense_labels(raw_labels)
    return Dataset(name or path.stem, np.array(feats), labels)


def write_csv(data: Dataset, path, *, header: bool = True) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        if header:
            w.writerow([f"x{c}" for c in range(data.p)] + ["label"])
        for row, lab in zip(data.features, data.labels):
            w.writerow([repr(float(v)) for v in row] + [int(lab)])


BUILTIN = {
    "iris": "load_iris",
    "wine": "load_wine",
    "breast_cancer": "load_breast_cancer",
    "digits": "load_digits",
}


def load_builtin(name: str) -> Dataset:
    """UCI datasets bundled with scikit-learn (no download needed)."""
    from sklearn import datasets

    key = name.lower().replace("-", "_")
    if key not in BUILTIN:
        raise ContractViolation(f"unknown builtin dataset {name!r}; choose from {sorted(BUILTIN)}")
    bunch = getattr(datasets, BUILTIN[key])()
    labels, _ = _dense_labels(bunch.target.tolist())
    return Dataset(key, bunch.data, labels)


def standardize(data: Dataset) -> Dataset:
    """Z-score every feature with the sample standard deviation.

    Constant features become zero. The statistics are kept on the result so
    that held-out rows can reuse them through :func:`apply_standardization`.
    """
    if data.standardized:
        raise ContractViolation(f"dataset {data.name!r} is already standardized")
    mean = data.features.mean(axis=0)
    sd = data.features.std(axis=0, ddof=1)
    scale = np.where(sd > 0, sd, 1.0)
    Z = (data.features - mean) / scale
    Z[:, sd == 0] = 0.0
    return replace(data, features=Z, standardized=True, mean=mean, scale=scale)


def apply_standardization(data: Dataset, reference: Dataset) -> Dataset:
    """Standardize ``data`` with the statistics stored on ``reference``."""
    if not reference.standardized or reference.mean is None:
        raise ContractViolation("reference dataset carries no standardization statistics")
    if data.standardized:
        raise ContractViolation(f"dataset {data.name!r} is already standardized")
    Z = (data.features - reference.mean) / reference.scale
    return replace(data, features=Z, standardized=True, mean=reference.mean, scale=reference.scale)


def stratified_counts(class_counts, m: int) -> np.ndarray:
    """Per-class sample sizes summing to m, proportional by largest remainder.

    When m covers every class, each class keeps at least one member.
    """
    counts = np.asarray(class_counts, dtype=np.int64)
    exact = m * counts / counts.sum()
    take = np.floor(exact).astype(np.int64)
    short = m - take.sum()
    order = np.lexsort((np.arange(counts.size), -(exact - take)))
    take[order[:short]] += 1
    if m >= counts.size:
        for c in np.flatnonzero(take == 0):
            donor = int(np.argmax(take))
            take[donor] -= 1
            take[c] += 1
    return take


def subsample(data: Dataset, m: int, seed=None) -> Dataset:
    """Stratified uniform subsample of m rows, kept in original row order."""
    if not 1 <= m <= data.n:
        raise ContractViolation(f"subsample size {m} must lie in [1, {data.n}]")
    rng = np.random.default_rng(seed)
    take = stratified_counts(data.class_counts(), m)
    chosen = []
    for c, t in enumerate(take):
        members = np.flatnonzero(data.labels == c)
        chosen.append(rng.choice(members, size=int(t), replace=False))
    idx = np.sort(np.concatenate(chosen))
    sub = data.take(idx)
    present = np.unique(sub.labels)
    if present.size < data.n_classes:
        # Fewer rows than classes: relabel densely.
        remap = np.searchsorted(present, sub.labels)
        sub = replace(sub, labels=remap)
    return sub


DEFAULT_SEPARATION = 2.5


@dataclass(frozen=True)
class TwoGaussians:
    """Parameters of the toy generator, kept for ground-truth queries."""

    mean_a: tuple
    mean_b: tuple
    sd: float

    def posterior_a(self, X) -> np.ndarray:
        """P(class a | x) under equal priors."""
        X = np.asarray(X, dtype=float)
        ma, mb = np.asarray(self.mean_a), np.asarray(self.mean_b)
        llr = (np.sum((X - mb) ** 2, axis=1) - np.sum((X - ma) ** 2, axis=1)) / (2 * self.sd**2)
        return 1.0 / (1.0 + np.exp(-llr))

    def overlap_mask(self, X, band: float = 0.1) -> np.ndarray:
        """Points whose class posterior lies in [band, 1 - band]."""
        post = self.posterior_a(X)
        return (post >= band) & (post <= 1.0 - band)

    def bayes_accuracy(self) -> float:
        gap = np.linalg.norm(np.subtract(self.mean_b, self.mean_a))
        return float(norm.cdf(gap / (2 * self.sd)))


def synth_two_gaussians(
    n_per_class: int = 100,
    mean_a=(0.0, 0.0),
    mean_b=None,
    sd: float = 1.0,
    seed=None,
) -> tuple[Dataset, TwoGaussians]:
    """Two isotropic 2-D Gaussian classes that slightly overlap.

    By default the second mean sits 2.5 standard deviations from the first
    along the x axis.
    """
    if n_per_class < 10:
        raise ContractViolation("n_per_class must be at least 10")
    if sd <= 0:
        raise ContractViolation("sd must be positive")
    mean_a = tuple(float(v) for v in mean_a)
    if mean_b is None:
        mean_b = (mean_a[0] + DEFAULT_SEPARATION * sd, mean_a[1])
    mean_b = tuple(float(v) for v in mean_b)
    rng = np.random.default_rng(seed)
    Xa = rng.normal(mean_a, sd, size=(n_per_class, 2))
    Xb = rng.normal(mean_b, sd, size=(n_per_class, 2))
    X = np.vstack([Xa, Xb])
    y = np.repeat([0, 1], n_per_class)
    return Dataset("two_gaussians", X, y), TwoGaussians(mean_a, mean_b, sd)


def synth_blobs(n: int, p: int, n_classes: int = 2, spread: float = 1.5, seed=None) -> Dataset:
    """Gaussian classes with random unit-variance centres, for scaling runs."""
    rng = np.random.default_rng(seed)
    centres = rng.normal(0.0, spread, size=(n_classes, p))
    y = np.arange(n) % n_classes
    X = centres[y] + rng.normal(size=(n, p))
    return Dataset(f"blobs_{n}x{p}", X, y)
