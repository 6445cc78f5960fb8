"""Bayesian hybrid time-varying-parameter VARs with stochastic volatility.

Equation-by-equation Gibbs sampling with per-equation binary indicators that
switch coefficient blocks between constant and time-varying, Savage-Dickey
model comparison over indicator configurations, and a recursive
out-of-sample forecast evaluation harness.
"""

from .data_io import Dataset, load_csv, load_transform_spec, permute_columns
from .errors import HybridTvpError
from .forecast_eval import (
    ForecastConfig,
    dm_test,
    evaluate,
    forecast_origin,
    percentage_gains,
    recursive_exercise,
)
from .model_compare import (
    GammaConfig,
    compare_table,
    log_bayes_factor,
    preset_configs,
)
from .montecarlo import DgpSpec, generate_dgp, indicator_modes, recovery_study
from .priors import HyperParams
from .sampler import (
    PosteriorDraws,
    SamplerConfig,
    build_layouts,
    inefficiency_factors,
    run_mcmc,
)

__version__ = "0.1.0"

__all__ = [
    "Dataset", "load_csv", "load_transform_spec", "permute_columns",
    "HybridTvpError", "HyperParams",
    "SamplerConfig", "run_mcmc", "PosteriorDraws", "build_layouts",
    "inefficiency_factors",
    "GammaConfig", "preset_configs", "log_bayes_factor", "compare_table",
    "DgpSpec", "generate_dgp", "recovery_study", "indicator_modes",
    "ForecastConfig", "recursive_exercise", "forecast_origin",
    "evaluate", "percentage_gains", "dm_test",
]
