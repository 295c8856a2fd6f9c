"""Private release of numeric time series under w-event privacy.

Each w-period is sampled, perturbed with Laplace noise, reconstructed by
linear interpolation and reconciled with noisy aggregate queries by a
non-negative least-squares program.
"""

from .core import (
    BudgetLedger,
    ConfigurationError,
    IngestionError,
    InvalidParameterError,
    NoiseSource,
    OptStreamError,
    PrivacyParams,
    Sampler,
    TimeSeries,
    WPeriod,
    ZeroNoise,
    make_periods,
    split_budget,
)
from .pipeline import ReleaseReport, release_period, release_stream
from .postprocess import Feature, FeatureSet, SolverError, day_profile, post_process

__version__ = "0.1.0"

__all__ = [
    "BudgetLedger",
    "ConfigurationError",
    "Feature",
    "FeatureSet",
    "IngestionError",
    "InvalidParameterError",
    "NoiseSource",
    "OptStreamError",
    "PrivacyParams",
    "ReleaseReport",
    "Sampler",
    "SolverError",
    "TimeSeries",
    "WPeriod",
    "ZeroNoise",
    "day_profile",
    "make_periods",
    "post_process",
    "release_period",
    "release_stream",
    "split_budget",
]
