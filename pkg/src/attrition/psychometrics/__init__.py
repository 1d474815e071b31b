"""Questionnaire validation: reliability, descriptives and CFA."""

from .cfa import (
    CfaConfig,
    CfaFit,
    CfaModel,
    Parameterization,
    discrepancy,
    fit_cfa,
    gradient,
    model_df,
    sample_cov,
)
from .fit import baseline_model, fit_indices, ncx2_cdf, rmsea_ci
from .reliability import (
    DEFAULT_SUBSCALES,
    AlphaRow,
    SubscaleMap,
    SubscaleStat,
    alpha_report,
    cronbach_alpha,
    descriptives,
    format_mean,
    item_matrix,
    subscale_scores,
)

__all__ = [
    "DEFAULT_SUBSCALES",
    "AlphaRow",
    "CfaConfig",
    "CfaFit",
    "CfaModel",
    "Parameterization",
    "SubscaleMap",
    "SubscaleStat",
    "alpha_report",
    "baseline_model",
    "cronbach_alpha",
    "descriptives",
    "discrepancy",
    "fit_cfa",
    "fit_indices",
    "format_mean",
    "gradient",
    "item_matrix",
    "model_df",
    "ncx2_cdf",
    "rmsea_ci",
    "sample_cov",
    "subscale_scores",
]
