"""Exact and approximate conformal prediction regions for multi-target regression."""

from .core import (
    AugmentedProblem,
    ConfigError,
    ConformalError,
    ConformityMeasure,
    DataError,
    Dataset,
    NumericalError,
    ScoreVector,
    pi_score,
    pvalue_from_scores,
    rank_of_last,
    region_membership_threshold,
)
from .exact import ExactConformal, affine_coeffs, estimate_w, pvalue_exact, region_l1, region_wnorm, score_closed
from .hat import HatSet, KernelSpec, local_linear_hat, nw_hat, ridge_hat
from .oracle import GridSpec, grid_region, refit_scores
from .predictors import PredictorSpec, make_predictor
from .rootcp import bisection, rootcp_region, search_directions
from .union import random_union, region_volume, smart_union, union_membership

__version__ = "0.1.0"

__all__ = [
    "AugmentedProblem",
    "ConfigError",
    "ConformalError",
    "ConformityMeasure",
    "DataError",
    "Dataset",
    "NumericalError",
    "ScoreVector",
    "pi_score",
    "pvalue_from_scores",
    "rank_of_last",
    "region_membership_threshold",
    "ExactConformal",
    "affine_coeffs",
    "estimate_w",
    "pvalue_exact",
    "region_l1",
    "region_wnorm",
    "score_closed",
    "HatSet",
    "KernelSpec",
    "local_linear_hat",
    "nw_hat",
    "ridge_hat",
    "GridSpec",
    "grid_region",
    "refit_scores",
    "PredictorSpec",
    "make_predictor",
    "bisection",
    "rootcp_region",
    "search_directions",
    "random_union",
    "region_volume",
    "smart_union",
    "union_membership",
]
