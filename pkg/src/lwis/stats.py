"""Friedman rank test and Nemenyi critical difference for comparing
methods over several datasets."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2, rankdata

from .errors import ContractViolation

# Studentized range quantiles divided by sqrt(2), infinite degrees of freedom.
NEMENYI_Q = {
    0.05: {2: 1.960, 3: 2.343, 4: 2.569, 5: 2.728, 6: 2.850, 7: 2.949, 8: 3.031, 9: 3.102, 10: 3.164},
    0.10: {2: 1.645, 3: 2.052, 4: 2.291, 5: 2.459, 6: 2.589, 7: 2.693, 8: 2.780, 9: 2.855, 10: 2.920},
}


@dataclass(frozen=True, eq=False)
class RankMatrix:
    """Per-dataset ranks (rows) of each method (columns); 1 is best."""

    ranks: np.ndarray

    @property
    def n_datasets(self) -> int:
        return self.ranks.shape[0]

    @property
    def n_methods(self) -> int:
        return self.ranks.shape[1]

    @property
    def average(self) -> np.ndarray:
        return self.ranks.mean(axis=0)

    def first_place_counts(self) -> np.ndarray:
        return np.sum(self.ranks == self.ranks.min(axis=1, keepdims=True), axis=0)


def rank_methods(scores) -> RankMatrix:
    """Rank methods within each dataset, higher score first, ties averaged."""
    s = np.asarray(scores, dtype=float)
    if s.ndim != 2 or s.shape[0] < 2 or s.shape[1] < 2:
        raise ContractViolation(f"need an N x k score table with N, k >= 2, got shape {s.shape}")
    if not np.all(np.isfinite(s)):
        raise ContractViolation("score table contains NaN or infinite entries")
    return RankMatrix(np.vstack([rankdata(-row, method="average") for row in s]))


def friedman(ranks: RankMatrix) -> float:
    """Friedman chi-square statistic from average ranks."""
    N, k = ranks.n_datasets, ranks.n_methods
    R = ranks.average
    stat = 12.0 * N / (k * (k + 1)) * (np.sum(R**2) - k * (k + 1) ** 2 / 4.0)
    return max(float(stat), 0.0)


def friedman_pvalue(statistic: float, n_methods: int) -> float:
    """Upper tail of chi-square with k - 1 degrees of freedom."""
    return float(chi2.sf(statistic, n_methods - 1))


def friedman_critical_value(n_methods: int, alpha_level: float = 0.05) -> float:
    return float(chi2.isf(alpha_level, n_methods - 1))


def nemenyi_cd(k: int, N: int, alpha_level: float = 0.05) -> float:
    """Minimum average-rank gap for two of k methods over N datasets to differ."""
    if alpha_level not in NEMENYI_Q:
        raise ContractViolation(f"alpha_level must be one of {sorted(NEMENYI_Q)}")
    if k not in NEMENYI_Q[alpha_level]:
        raise ContractViolation(f"critical values are tabulated for 2 <= k <= 10, got k={k}")
    if N < 1:
        raise ContractViolation("N must be positive")
    return NEMENYI_Q[alpha_level][k] * math.sqrt(k * (k + 1) / (6.0 * N))


def pairwise_significance(average_ranks, cd: float) -> tuple[np.ndarray, np.ndarray]:
    """Absolute rank gaps and the boolean matrix ``gap >= cd`` (diagonal False)."""
    R = np.asarray(average_ranks, dtype=float)
    gaps = np.abs(R[:, None] - R[None, :])
    significant = gaps >= cd
    np.fill_diagonal(significant, False)
    return gaps, significant


def small_sample_caveat(N: int, k: int) -> str | None:
    if N > 10 and k > 5:
        return None
    return (
        f"caveat: the chi-square approximation is rough for N={N} datasets and k={k} methods "
        "(it is usually trusted for N > 10 and k > 5)"
    )


@dataclass
class SignificanceReport:
    methods: list
    datasets: list
    ranks: RankMatrix
    statistic: float
    pvalue: float
    cd: float
    alpha_level: float

    def pairwise_rows(self):
        gaps, sig = pairwise_significance(self.ranks.average, self.cd)
        for a, ma in enumerate(self.methods):
            for b, mb in enumerate(self.methods):
                yield ma, mb, float(gaps[a, b]), self.cd, bool(sig[a, b])

    def text(self) -> str:
        lines = [
            f"datasets (N) = {self.ranks.n_datasets}, methods (k) = {self.ranks.n_methods}",
            "average ranks:",
        ]
        for m, r in sorted(zip(self.methods, self.ranks.average), key=lambda t: t[1]):
            lines.append(f"  {m:<24s} {r:.4f}")
        crit = friedman_critical_value(self.ranks.n_methods, self.alpha_level)
        verdict = "rejected" if self.statistic > crit else "not rejected"
        lines.append(
            f"Friedman chi2_F = {self.statistic:.4f}, p = {self.pvalue:.4g}, "
            f"critical value {crit:.3f} at {self.alpha_level:g}: null {verdict}"
        )
        lines.append(f"Nemenyi CD = {self.cd:.4f}")
        sig = [(a, b) for a, b, _, _, s in self.pairwise_rows() if s and a < b]
        lines.append("significant pairs: " + (", ".join(f"({a}, {b})" for a, b in sig) if sig else "none"))
        caveat = small_sample_caveat(self.ranks.n_datasets, self.ranks.n_methods)
        if caveat:
            lines.append(caveat)
        return "\n".join(lines)


def significance_report(scores, methods, datasets, alpha_level: float = 0.05) -> SignificanceReport:
    ranks = rank_methods(scores)
    stat = friedman(ranks)
    return SignificanceReport(
        list(methods),
        list(datasets),
        ranks,
        stat,
        friedman_pvalue(stat, ranks.n_methods),
        nemenyi_cd(ranks.n_methods, ranks.n_datasets, alpha_level),
        alpha_level,
    )
