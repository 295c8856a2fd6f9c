"""Per-period release (sample, perturb, reconstruct, post-process) and the stream driver."""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .core import (
    ConfigurationError,
    BudgetLedger,
    InvalidParameterError,
    NoiseSource,
    PrivacyParams,
    Sampler,
    Substream,
    TimeSeries,
    WPeriod,
    make_periods,
)
from .noise import laplace_mechanism
from .postprocess import FeatureSet, QpSolution, post_process
from .sampling import SampleSet, adaptive_l1_sample, equally_spaced_sample

REMAINDER_POLICIES = ("laplace", "error")


def perturb(x_s, eps_p: float, alpha: float, stream: Substream) -> np.ndarray:
    """Laplace noise of scale ``|x_s| * alpha / eps_p`` on every sampled value."""
    x_s = np.asarray(x_s, dtype=float)
    if not eps_p > 0:
        raise InvalidParameterError(f"eps_p must be positive, got {eps_p!r}")
    if x_s.size == 0:
        return x_s.copy()
    return laplace_mechanism(x_s, x_s.size * alpha, eps_p, stream)


def reconstruct(x_s_noisy, sample: SampleSet, w: int) -> np.ndarray:
    """Piecewise-linear interpolation through the noisy samples.

    Steps after the last sampled index repeat the last sample.
    """
    vals = np.asarray(x_s_noisy, dtype=float)
    if vals.shape != (len(sample),):
        raise InvalidParameterError(
            f"{vals.size} measurements for a sample set of size {len(sample)}"
        )
    if sample.w != w:
        raise InvalidParameterError(f"sample set is for w={sample.w}, not {w}")
    idx = np.asarray(sample.indices, dtype=float)
    out = np.interp(np.arange(1, w + 1, dtype=float), idx, vals)
    out[sample.positions] = vals
    return out


def choose_samples(x, params: PrivacyParams, stream: Substream) -> SampleSet:
    if params.sampler is Sampler.EQUALLY_SPACED:
        return equally_spaced_sample(params.w, params.k)
    return adaptive_l1_sample(x, params.k, params.eps_s, params.theta, params.alpha, stream)


@dataclass
class ReleaseReport:
    private_values: np.ndarray
    sample_set: SampleSet
    budget_spent: tuple
    period: int = 0
    diagnostics: dict = field(default_factory=dict)
    solution: Optional[QpSolution] = None


def _check_features(params: PrivacyParams, features: FeatureSet) -> None:
    if features.w != params.w:
        raise ConfigurationError(f"features are defined for w={features.w}, params use w={params.w}")
    if features.p == 1 and params.eps_o != 0:
        raise ConfigurationError(
            "eps_o must be 0 when only the singleton feature is used (nothing to post-process)"
        )
    if features.p > 1 and params.eps_o <= 0:
        raise ConfigurationError("post-processing features need a positive eps_o")


def sample_and_reconstruct(x, params: PrivacyParams, noise: NoiseSource, period: int, tag: str = ""):
    """The first three stages; returns ``(sample_set, x_tilde)``."""
    sample = choose_samples(x, params, noise.substream(period, tag + "sample"))
    x_s = np.asarray(x, dtype=float)[sample.positions]
    noisy = perturb(x_s, params.eps_p, params.alpha, noise.substream(period, tag + "perturb"))
    return sample, reconstruct(noisy, sample, params.w)


def release_period(
    x: WPeriod,
    params: PrivacyParams,
    features: FeatureSet,
    noise: NoiseSource,
    lam=None,
) -> ReleaseReport:
    """Release one w-period; exactly ``params.epsilon`` is charged to its ledger."""
    if x.w != params.w:
        raise InvalidParameterError(f"period has {x.w} values, params expect w={params.w}")
    _check_features(params, features)
    ledger = BudgetLedger(params.epsilon)
    timings = {}

    t0 = time.perf_counter()
    sample = choose_samples(x.values, params, noise.substream(x.number, "sample"))
    ledger.charge("sample", params.eps_s)
    t1 = time.perf_counter()
    noisy = perturb(
        x.values[sample.positions], params.eps_p, params.alpha, noise.substream(x.number, "perturb")
    )
    ledger.charge("perturb", params.eps_p)
    x_tilde = reconstruct(noisy, sample, params.w)
    t2 = time.perf_counter()
    sol = post_process(
        x_tilde, x.values, features, params.eps_o, params.alpha,
        noise.substream(x.number, "postprocess"), lam=lam,
    )
    ledger.charge("postprocess", sol.eps_spent)
    t3 = time.perf_counter()
    ledger.close()

    timings.update(sample=t1 - t0, perturb_reconstruct=t2 - t1, postprocess=t3 - t2)
    return ReleaseReport(
        private_values=sol.x,
        sample_set=sample,
        budget_spent=(ledger.spent("sample"), ledger.spent("perturb"), ledger.spent("postprocess")),
        period=x.number,
        diagnostics={
            "timings": timings,
            "solver_iterations": sol.iterations,
            "kkt_residual": sol.kkt_residual,
            "ledger": ledger.as_dict(),
        },
        solution=sol,
    )


def release_remainder(remainder: TimeSeries, epsilon: float, alpha: float, noise: NoiseSource, period: int):
    """Laplace release of a trailing partial period, scale ``len * alpha / epsilon``, clipped at 0."""
    from .baselines import laplace_baseline

    return laplace_baseline(remainder.values, epsilon, alpha, noise.substream(period, "remainder"))


@dataclass
class StreamRelease:
    series: TimeSeries
    reports: List[ReleaseReport]
    remainder_released: bool = False


def release_stream(
    series: TimeSeries,
    params: PrivacyParams,
    features: FeatureSet,
    noise: NoiseSource,
    lam=None,
    remainder: str = "laplace",
    workers: int = 1,
) -> StreamRelease:
    """Release every complete w-period independently, in order.

    A trailing partial period is released with the Laplace mechanism
    (``remainder="laplace"``) or rejected (``remainder="error"``).
    """
    if remainder not in REMAINDER_POLICIES:
        raise InvalidParameterError(f"remainder policy must be one of {REMAINDER_POLICIES}")
    periods, rest = make_periods(series, params.w)
    if rest is not None and remainder == "error":
        raise InvalidParameterError(
            f"series length {len(series)} leaves a remainder of {len(rest)} steps for w={params.w}"
        )

    def run(p):
        return release_period(p, params, features, noise, lam=lam)

    if workers > 1 and len(periods) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(run, periods))
    else:
        reports = [run(p) for p in periods]

    parts = [r.private_values for r in reports]
    if rest is not None:
        parts.append(release_remainder(rest, params.epsilon, params.alpha, noise, len(periods)))
    values = np.concatenate(parts) if parts else np.empty(0)
    return StreamRelease(TimeSeries(values, series.start_index), reports, rest is not None)
