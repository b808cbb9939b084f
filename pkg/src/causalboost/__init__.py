"""Heterogeneous treatment effects with boosted trees, SHAP and honest causal forests."""

from .attribution import AttributionResult, ValueFunction, rank_features, shap_exact, shap_tree
from .boost import BoostConfig, BoostedEnsemble, fit_boosted, fit_tree, gradients, predict
from .causal import (AteReport, CausalSample, ForestConfig, aipw_scores, estimate_ate,
                     fit_causal_forest, fit_nuisance, predict_cate)
from .cluster import correlation_distance, cut_clusters, select_representatives, ward_linkage
from .tabular import FrameTable, binarize_at_median, load_csv, pearson_matrix

__version__ = "0.1.0"
