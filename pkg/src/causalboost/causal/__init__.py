"""Causal estimation: cross-fitted nuisances, AIPW scores and honest forests."""

from .aipw import AteReport, aipw_scores, estimate_ate, significance_stars
from .forest import (CausalForestModel, CausalTree, ForestConfig, fit_causal_forest,
                     populate_leaves, predict_cate)
from .nuisance import NuisanceFit, fit_nuisance
from .sample import CausalSample, difference_in_means

__all__ = [
    "AteReport", "CausalForestModel", "CausalSample", "CausalTree", "ForestConfig",
    "NuisanceFit", "aipw_scores", "difference_in_means", "estimate_ate", "fit_causal_forest",
    "fit_nuisance", "populate_leaves", "predict_cate", "significance_stars",
]
