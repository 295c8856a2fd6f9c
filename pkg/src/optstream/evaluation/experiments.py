"""Mechanism registry and the comparison, ablation, forecasting and error-bound experiments."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from ..baselines import laplace_baseline, release_stream_baseline
from ..core import (
    InvalidParameterError,
    NoiseSource,
    PrivacyParams,
    Sampler,
    TimeSeries,
    make_periods,
)
from ..pipeline import perturb, reconstruct, release_stream
from ..postprocess import FeatureSet, day_profile_ranges
from ..sampling import equally_spaced_sample
from .arma import arma_fit, arma_forecast
from .metrics import avg_l1_error, mse
from .synth import lipschitz_walk

MECHANISMS = ("optstream-es", "optstream-ls", "laplace", "dft")
ABLATIONS = ("perturb-only", "perturb+opt", "perturb+sample", "full")


@dataclass(frozen=True)
class ExperimentConfig:
    w: int = 48
    k: int = 10
    theta: float = 1000.0
    alpha: float = 10.0
    dft_k: int = 10
    features: Optional[tuple] = None  # coarse feature ranges; None means the day profile
    lam: Optional[tuple] = None
    budget_weights: Optional[tuple] = None  # applies to optstream-es and optstream-ls only

    def feature_set(self) -> FeatureSet:
        ranges = day_profile_ranges(self.w) if self.features is None else self.features
        return FeatureSet.build(self.w, ranges)


def _optstream_setup(name: str, epsilon: float, cfg: ExperimentConfig):
    """PrivacyParams and feature set for an OptStream variant or ablation."""
    full = cfg.feature_set()
    bare = FeatureSet.build(cfg.w)
    common = dict(w=cfg.w, epsilon=epsilon, alpha=cfg.alpha, theta=cfg.theta)
    if name == "optstream-es":
        return PrivacyParams(k=cfg.k, sampler=Sampler.EQUALLY_SPACED, budget_weights=cfg.budget_weights, **common), full
    if name == "optstream-ls":
        return PrivacyParams(k=cfg.k, sampler=Sampler.ADAPTIVE_L1, budget_weights=cfg.budget_weights, **common), full
    if name == "full":
        return PrivacyParams(k=cfg.k, sampler=Sampler.ADAPTIVE_L1, **common), full
    # ablations measure every point when sampling is off, and split budget evenly over active stages
    if name == "perturb-only":
        return PrivacyParams(k=cfg.w, sampler=Sampler.EQUALLY_SPACED, budget_weights=(0, 1, 0), **common), bare
    if name == "perturb+opt":
        return PrivacyParams(k=cfg.w, sampler=Sampler.EQUALLY_SPACED, budget_weights=(0, 1, 1), **common), full
    if name == "perturb+sample":
        return PrivacyParams(k=cfg.k, sampler=Sampler.ADAPTIVE_L1, budget_weights=(1, 1, 0), **common), bare
    raise InvalidParameterError(
        f"unknown mechanism {name!r}; valid names: {', '.join(MECHANISMS + ABLATIONS)}"
    )


def run_mechanism(
    name: str,
    series: TimeSeries,
    epsilon: float,
    noise: NoiseSource,
    cfg: ExperimentConfig = ExperimentConfig(),
) -> TimeSeries:
    if name in ("laplace", "dft"):
        return release_stream_baseline(series, name, cfg.w, epsilon, cfg.alpha, noise, k=cfg.dft_k)
    params, fset = _optstream_setup(name, epsilon, cfg)
    return release_stream(series, params, fset, noise, lam=cfg.lam).series


def check_mechanisms(names: Iterable[str], allowed: Sequence[str] = MECHANISMS) -> List[str]:
    names = list(names)
    bad = [n for n in names if n not in allowed]
    if bad:
        raise InvalidParameterError(
            f"unknown mechanism(s) {', '.join(bad)}; valid names: {', '.join(allowed)}"
        )
    return names


def compare(
    series: TimeSeries,
    mechanisms: Sequence[str],
    epsilons: Sequence[float],
    seeds: int,
    noise: NoiseSource,
    cfg: ExperimentConfig = ExperimentConfig(),
) -> List[dict]:
    """One row per (epsilon, mechanism, seed) with the average L1 error of the release."""
    check_mechanisms(mechanisms, MECHANISMS + ABLATIONS)
    rows = []
    for eps in epsilons:
        for name in mechanisms:
            for s in range(seeds):
                released = run_mechanism(name, series, eps, noise.derive(s), cfg)
                rows.append(
                    {"mechanism": name, "epsilon": eps, "seed": s, "avg_l1": avg_l1_error(released, series)}
                )
    return rows


def summarize(rows: Sequence[dict], key: str = "avg_l1") -> List[dict]:
    """Mean and standard error of ``key`` per (epsilon, mechanism), in first-seen order."""
    groups: Dict[tuple, List[float]] = {}
    for r in rows:
        groups.setdefault((r["epsilon"], r["mechanism"]), []).append(r[key])
    out = []
    for (eps, name), vals in groups.items():
        v = np.asarray(vals)
        se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
        out.append({"epsilon": eps, "mechanism": name, "n": int(v.size), "mean": float(v.mean()), "stderr": se})
    return out


def write_rows(path, rows: Sequence[dict], float_fmt: str = "{:.6f}") -> None:
    if not rows:
        raise InvalidParameterError("nothing to write")
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        for r in rows:
            writer.writerow({k: float_fmt.format(v) if isinstance(v, float) else v for k, v in r.items()})


# ----------------------------------------------------------- forecasting


@dataclass
class ForecastResult:
    history: TimeSeries
    private_history: TimeSeries
    forecast: TimeSeries
    model: object


def forecast_from(history: TimeSeries, private: TimeSeries, train_len: int, horizon: int) -> ForecastResult:
    """Fit ARMA(1,1) on the last ``train_len`` private values and forecast ``horizon`` steps."""
    if len(private) != len(history):
        raise InvalidParameterError("private and true histories differ in length")
    n = min(train_len, len(private))
    window = TimeSeries(private.values[-n:], private.start_index + len(private) - n)
    model = arma_fit(window)
    return ForecastResult(history, private, arma_forecast(model, window, horizon), model)


def forecast_experiment(
    series: TimeSeries,
    mechanism: str,
    epsilon: float,
    noise: NoiseSource,
    cfg: ExperimentConfig = ExperimentConfig(),
    train_days: int = 28,
) -> dict:
    """Release all but the last period, forecast the last period from the private history.

    Returns the L1 errors of forecasts from the private and from the true history.
    """
    w = cfg.w
    if len(series) < 2 * w:
        raise InvalidParameterError("need at least two periods for a forecast experiment")
    cut = (len(series) // w - 1) * w
    hist = TimeSeries(series.values[:cut], series.start_index)
    target = series.values[cut:cut + w]
    private = run_mechanism(mechanism, hist, epsilon, noise, cfg)
    priv = forecast_from(hist, private, train_days * w, w)
    true = forecast_from(hist, hist, train_days * w, w)
    return {
        "mechanism": mechanism,
        "epsilon": epsilon,
        "forecast_l1_private": avg_l1_error(priv.forecast, target),
        "forecast_l1_true": avg_l1_error(true.forecast, target),
    }


# ------------------------------------------------------- error bound


@dataclass
class BoundReport:
    w: int
    epsilon: float
    lipschitz: float
    segment: int
    k: int
    mse_optstream: float
    mse_laplace: float
    ratio: float
    seeds: int
    per_seed: List[dict] = field(default_factory=list)

    def as_dict(self) -> dict:
        d = asdict(self)
        d.pop("per_seed")
        return d


def segment_length(w: int, epsilon: float, L: float) -> int:
    """Segment length sqrt(w / (epsilon * L)) rounded, within [1, w - 1]."""
    if L <= 0:
        return w - 1
    return int(min(w - 1, max(1, round(math.sqrt(w / (epsilon * L))))))


def samples_for_segment(w: int, m: int) -> int:
    return int(min(w, max(2, round((w - 1) / m) + 1)))


def error_bound_experiment(
    w: int,
    epsilon: float,
    L: float,
    seeds: int,
    noise: NoiseSource,
    periods: int = 10,
    alpha: float = 1.0,
) -> BoundReport:
    """Equally-spaced sample + reconstruct (no post-processing, no clipping) vs. Laplace.

    Streams are random walks with increments in [-L, L]. The sampling density
    follows the segment length that balances interpolation and noise error.
    """
    m = segment_length(w, epsilon, L)
    k = samples_for_segment(w, m)
    sample = equally_spaced_sample(w, k)
    level = 20.0 * w * max(L, 1.0)
    per_seed = []
    for s in range(seeds):
        src = noise.derive(s)
        stream = lipschitz_walk(w, periods, L, src, level=level)
        periods_ = make_periods(stream, w).periods
        est_os, est_lap = [], []
        for p in periods_:
            noisy = perturb(p.values[sample.positions], epsilon, alpha, src.substream(p.number, "perturb"))
            est_os.append(reconstruct(noisy, sample, w))
            est_lap.append(
                laplace_baseline(p.values, epsilon, alpha, src.substream(p.number, "laplace"), clip=False)
            )
        per_seed.append(
            {
                "seed": s,
                "mse_optstream": mse(np.concatenate(est_os), stream),
                "mse_laplace": mse(np.concatenate(est_lap), stream),
            }
        )
    mo = float(np.mean([r["mse_optstream"] for r in per_seed]))
    ml = float(np.mean([r["mse_laplace"] for r in per_seed]))
    ratio = mo / ml if ml > 0 else math.nan
    return BoundReport(w, epsilon, L, m, k, mo, ml, ratio, seeds, per_seed)
