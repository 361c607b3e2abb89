"""Disparity statistics and urban-structure measures."""

from .report import (energy_regressions, feature_correlations, group_tests, read_energy_mix,
                     run_analysis, urban_form_components, write_report)
from .stats import (ECDF, GroupAssignment, RegressionResult, TestResult, anova_oneway,
                    correlation_matrix, ecdf, group_summary, kruskal_wallis, ols_simple, pearson)
from .structure import (Centrality, PCAResult, dissimilarity_index, human_mobility_index,
                        minmax_scale, pca, standardize, urban_centrality_index)

__all__ = [
    "ECDF", "Centrality", "GroupAssignment", "PCAResult", "RegressionResult", "TestResult",
    "anova_oneway", "correlation_matrix", "dissimilarity_index", "ecdf", "energy_regressions",
    "feature_correlations", "group_summary", "group_tests", "human_mobility_index",
    "kruskal_wallis", "minmax_scale", "ols_simple", "pca", "pearson", "read_energy_mix",
    "run_analysis", "standardize", "urban_centrality_index", "urban_form_components",
    "write_report",
]
