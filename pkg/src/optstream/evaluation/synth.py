"""Synthetic half-hourly load profiles standing in for regional demand data."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from ..core import ConfigurationError, InvalidParameterError, NoiseSource, TimeSeries

STEPS_PER_DAY = 48

# daily average load in MW per region, 2016
REGION_DAILY_MEANS = {
    "auvergne-rhone-alpes": 7717.58,
    "bretagne": 2554.23,
    "bourgogne-franche-comte": 2498.23,
    "centre-val-de-loire": 2157.97,
    "grand-est": 5286.24,
    "hauts-de-france": 5832.26,
    "ile-de-france": 8315.13,
    "nouvelle-aquitaine": 4985.68,
    "normandie": 3267.22,
    "occitanie": 4314.7,
    "pays-de-la-loire": 3174.17,
    "provence-cote-d-azur": 4782.4,
}

# (frequency in cycles per day, weight, phase): night trough, midday and evening peaks
DEFAULT_HARMONICS: Tuple[Tuple[float, float, float], ...] = (
    (1.0, 1.0, 2.6),
    (2.0, 0.45, -0.3),
    (3.0, 0.15, 0.9),
)


@dataclass(frozen=True)
class SyntheticLoadSpec:
    daily_mean: float
    amplitude: float
    period: int = STEPS_PER_DAY
    harmonics: Tuple[Tuple[float, float, float], ...] = DEFAULT_HARMONICS
    noise_sd: float = 0.0
    day_sd: float = 0.0

    def __post_init__(self):
        if not self.daily_mean > 0 or not self.amplitude > 0:
            raise ConfigurationError("daily_mean and amplitude must be positive")
        if self.noise_sd < 0 or self.day_sd < 0:
            raise ConfigurationError("noise levels must be non-negative")
        if self.period < 2:
            raise ConfigurationError("period must be at least 2 steps")

    @classmethod
    def for_region(cls, daily_mean: float, **kw) -> "SyntheticLoadSpec":
        """Typical profile: swing of 18% of the mean, small day-level and step-level noise."""
        kw.setdefault("amplitude", 0.18 * daily_mean)
        kw.setdefault("noise_sd", 0.005 * daily_mean)
        kw.setdefault("day_sd", 0.03 * daily_mean)
        return cls(daily_mean=daily_mean, **kw)


def daily_shape(spec: SyntheticLoadSpec) -> np.ndarray:
    """One period of the deterministic profile, scaled so its peak deviation is ``amplitude``."""
    t = np.arange(spec.period)
    shape = np.zeros(spec.period)
    for harmonic in spec.harmonics:
        freq, weight = harmonic[0], harmonic[1]
        phase = harmonic[2] if len(harmonic) > 2 else 0.0
        shape += weight * np.cos(2 * np.pi * freq * t / spec.period + phase)
    peak = np.max(np.abs(shape))
    if peak == 0:
        return shape
    return spec.amplitude * shape / peak


def synth_load(spec: SyntheticLoadSpec, days: int, noise: NoiseSource, stream_id: int = 0) -> TimeSeries:
    """A strictly positive load series of ``days * spec.period`` steps."""
    if days < 1:
        raise InvalidParameterError("days must be positive")
    base = np.tile(daily_shape(spec), days) + spec.daily_mean
    if spec.day_sd > 0:
        level = noise.substream(stream_id, "synth/day").normal(days) * spec.day_sd
        base = base + np.repeat(level, spec.period)
    if spec.noise_sd > 0:
        base = base + noise.substream(stream_id, "synth/step").normal(base.size) * spec.noise_sd
    if np.any(base <= 0):
        raise ConfigurationError("synthetic load parameters produce non-positive values")
    return TimeSeries(base)


def lipschitz_constant(series) -> float:
    """Largest absolute one-step change."""
    x = series.values if isinstance(series, TimeSeries) else np.asarray(series, dtype=float)
    if len(x) < 2:
        return 0.0
    return float(np.max(np.abs(np.diff(x))))


def lipschitz_walk(w: int, periods: int, L: float, noise: NoiseSource, level: float = 0.0) -> TimeSeries:
    """Random walk with increments uniform on [-L, L], starting at ``level``."""
    steps = noise.substream(0, "synth/walk").uniform(w * periods) * 2.0 * L
    steps[0] = 0.0
    return TimeSeries(level + np.cumsum(steps))
