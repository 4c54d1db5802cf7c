"""Weekly dengue relative-risk forecasting with lagged climate covariates.

Penalized-spline additive models and random forests are fitted per area and
compared on a held-out year by NRMSE.
"""
from .core import AreaPanel, CovariateSet, EpiWeek, NationalReference, WeeklySeries
from .evaluation import SplitSpec, compare, evaluate, nrmse
from .forest import fit_forest
from .gam import fit_gam
from .lags import LagConfig, build_design, cross_correlation, select_panel_lags

__all__ = [
    "AreaPanel",
    "CovariateSet",
    "EpiWeek",
    "LagConfig",
    "NationalReference",
    "SplitSpec",
    "WeeklySeries",
    "build_design",
    "compare",
    "cross_correlation",
    "evaluate",
    "fit_forest",
    "fit_gam",
    "nrmse",
    "select_panel_lags",
]
