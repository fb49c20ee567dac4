"""Mahalanobis metric learning with loss-weighted constraint sampling."""

from .constraints import ConstraintSet, DissimilarPair, Relative, SimilarPair, Triplet
from .data import Dataset, load_builtin, load_csv, standardize, subsample, synth_two_gaussians
from .errors import ContractViolation, NumericalFailure, ParseError, ResourceLimitError, UnsatisfiableConstraintError
from .evaluation import benchmark_grid, cross_validate, knn_classify
from .learner import TrainConfig, TrainResult, train
from .metric import MetricMatrix, itml_update, mahalanobis_sq, psd_project
from .selection import LiuVemuriPrior, Lwis, MeiDynamic, RandomPrior, WeightLedger, make_strategy
from .stats import friedman, nemenyi_cd, rank_methods, significance_report

__version__ = "0.1.0"

__all__ = [
    "ConstraintSet", "DissimilarPair", "Relative", "SimilarPair", "Triplet",
    "Dataset", "load_builtin", "load_csv", "standardize", "subsample", "synth_two_gaussians",
    "ContractViolation", "NumericalFailure", "ParseError", "ResourceLimitError", "UnsatisfiableConstraintError",
    "benchmark_grid", "cross_validate", "knn_classify",
    "TrainConfig", "TrainResult", "train",
    "MetricMatrix", "itml_update", "mahalanobis_sq", "psd_project",
    "LiuVemuriPrior", "Lwis", "MeiDynamic", "RandomPrior", "WeightLedger", "make_strategy",
    "friedman", "nemenyi_cd", "rank_methods", "significance_report",
]
