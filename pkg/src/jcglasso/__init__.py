"""Joint conditional Gaussian graphical models from censored and missing data.

Penalized EM estimation of K related conditional graphical models: sparse
coefficient matrices linking covariates to responses, with fused or group
coupling of the precision matrices across conditions.
"""

from .em import FitConfig, FitResult, fit
from .errors import JcglassoError
from .estep import ConditionDataset, Status, compute_sufficient_stats
from .model import ModelParams, PenaltyConfig
from .modelselect import PathResult, bic, default_grids, fit_path
from .simulate import (
    GroundTruth,
    ScenarioConfig,
    auc_pr,
    evaluate,
    generate,
    run_benchmark,
)

__all__ = [
    "ConditionDataset",
    "FitConfig",
    "FitResult",
    "GroundTruth",
    "JcglassoError",
    "ModelParams",
    "PathResult",
    "PenaltyConfig",
    "ScenarioConfig",
    "Status",
    "auc_pr",
    "bic",
    "compute_sufficient_stats",
    "default_grids",
    "evaluate",
    "fit",
    "fit_path",
    "generate",
    "run_benchmark",
]

__version__ = "0.1.0"
