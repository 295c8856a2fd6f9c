"""Evaluation harness: error metrics, ARMA forecasting, synthetic loads, experiments."""

from .arma import ArmaModel, arma_fit, arma_forecast
from .experiments import (
    ABLATIONS,
    MECHANISMS,
    BoundReport,
    ExperimentConfig,
    compare,
    error_bound_experiment,
    forecast_experiment,
    run_mechanism,
    summarize,
)
from .metrics import avg_l1_error, mse
from .synth import REGION_DAILY_MEANS, SyntheticLoadSpec, lipschitz_constant, synth_load

__all__ = [
    "ABLATIONS",
    "MECHANISMS",
    "REGION_DAILY_MEANS",
    "ArmaModel",
    "BoundReport",
    "ExperimentConfig",
    "SyntheticLoadSpec",
    "arma_fit",
    "arma_forecast",
    "avg_l1_error",
    "compare",
    "error_bound_experiment",
    "forecast_experiment",
    "lipschitz_constant",
    "mse",
    "run_mechanism",
    "summarize",
    "synth_load",
]
