"""Domain types shared by every mechanism: streams, periods, privacy
parameters, the per-period budget ledger and seeded noise substreams."""

from __future__ import annotations

import enum
import math
import zlib
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence, Tuple

import numpy as np

BUDGET_TOL = 1e-12


class OptStreamError(Exception):
    """Base class for all errors raised by this package."""


class InvalidParameterError(OptStreamError, ValueError):
    pass


class ConfigurationError(OptStreamError, ValueError):
    pass


class IngestionError(OptStreamError, ValueError):
    pass


class BudgetError(OptStreamError, RuntimeError):
    pass


def _frozen_array(values) -> np.ndarray:
    arr = np.array(values, dtype=float).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """A contiguous numeric stream; ``values[i]`` is the value at step ``start_index + i``."""

    values: np.ndarray
    start_index: int = 0

    def __post_init__(self):
        arr = _frozen_array(self.values)
        if not np.all(np.isfinite(arr)):
            raise InvalidParameterError("time series contains non-finite values")
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "start_index", int(self.start_index))

    def __len__(self) -> int:
        return len(self.values)

    @property
    def index(self) -> np.ndarray:
        return np.arange(self.start_index, self.start_index + len(self.values))

    def __eq__(self, other):
        if not isinstance(other, TimeSeries):
            return NotImplemented
        return self.start_index == other.start_index and np.array_equal(self.values, other.values)


@dataclass(frozen=True, eq=False)
class WPeriod:
    """One w-period of a stream. ``number`` is the period's ordinal within the stream."""

    values: np.ndarray
    origin: int = 0
    number: int = 0

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen_array(self.values))

    @property
    def w(self) -> int:
        return len(self.values)


class Sampler(str, enum.Enum):
    EQUALLY_SPACED = "equally-spaced"
    ADAPTIVE_L1 = "adaptive-l1"

    @classmethod
    def parse(cls, value) -> "Sampler":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            names = ", ".join(s.value for s in cls)
            raise InvalidParameterError(f"unknown sampler {value!r}; expected one of {names}") from None


_DEFAULT_WEIGHTS = {
    Sampler.ADAPTIVE_L1: (1.0, 1.0, 1.0),
    Sampler.EQUALLY_SPACED: (0.0, 1.0, 1.0),
}


def split_budget(
    epsilon: float,
    sampler: Sampler | str,
    weights: Optional[Sequence[float]] = None,
) -> Tuple[float, float, float]:
    """Split ``epsilon`` into (eps_s, eps_p, eps_o) proportionally to ``weights``.

    Defaults to an even three-way split for the adaptive sampler and an even
    perturbation/post-processing split for equally-spaced sampling, which reads
    no data and therefore gets no sampling budget.
    """
    sampler = Sampler.parse(sampler)
    if not (epsilon > 0 and math.isfinite(epsilon)):
        raise InvalidParameterError(f"epsilon must be a positive finite number, got {epsilon!r}")
    if weights is None:
        weights = _DEFAULT_WEIGHTS[sampler]
    weights = tuple(float(x) for x in weights)
    if len(weights) != 3:
        raise InvalidParameterError("budget weights must be a triple (sample, perturb, postprocess)")
    if any(x < 0 or not math.isfinite(x) for x in weights):
        raise InvalidParameterError(f"budget weights must be non-negative, got {weights}")
    total = sum(weights)
    if total == 0:
        raise InvalidParameterError("budget weights must not all be zero")
    eps_s = epsilon * weights[0] / total
    eps_p = epsilon * weights[1] / total
    eps_o = epsilon * weights[2] / total
    return eps_s, eps_p, eps_o


@dataclass(frozen=True)
class PrivacyParams:
    """Per-period release parameters.

    ``split`` is derived from ``budget_weights`` when not given explicitly.
    """

    w: int
    epsilon: float
    alpha: float = 1.0
    k: int = 10
    theta: float = 1000.0
    sampler: Sampler = Sampler.ADAPTIVE_L1
    split: Optional[Tuple[float, float, float]] = None
    budget_weights: Optional[Tuple[float, float, float]] = field(default=None, compare=False)

    def __post_init__(self):
        sampler = Sampler.parse(self.sampler)
        object.__setattr__(self, "sampler", sampler)
        if int(self.w) != self.w or self.w < 1:
            raise InvalidParameterError(f"w must be a positive integer, got {self.w!r}")
        object.__setattr__(self, "w", int(self.w))
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise InvalidParameterError(f"alpha must be positive, got {self.alpha!r}")
        if int(self.k) != self.k or not 2 <= self.k <= self.w:
            raise InvalidParameterError(f"k must be an integer in [2, w={self.w}], got {self.k!r}")
        object.__setattr__(self, "k", int(self.k))
        if not (self.theta >= 0 and math.isfinite(self.theta)):
            raise InvalidParameterError(f"theta must be non-negative, got {self.theta!r}")
        if self.split is None:
            split = split_budget(self.epsilon, sampler, self.budget_weights)
        else:
            split = tuple(float(x) for x in self.split)
            if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
                raise InvalidParameterError(f"epsilon must be positive, got {self.epsilon!r}")
            if len(split) != 3 or any(x < 0 for x in split):
                raise InvalidParameterError(f"split must be three non-negative reals, got {self.split!r}")
            if abs(sum(split) - self.epsilon) > BUDGET_TOL * max(1.0, self.epsilon):
                raise InvalidParameterError(
                    f"split {split} does not sum to epsilon={self.epsilon}"
                )
        object.__setattr__(self, "split", split)
        eps_s, eps_p, _ = split
        if sampler is Sampler.EQUALLY_SPACED and eps_s != 0:
            raise InvalidParameterError("equally-spaced sampling reads no data; eps_s must be 0")
        if sampler is Sampler.ADAPTIVE_L1 and eps_s <= 0:
            raise InvalidParameterError("the adaptive L1 sampler needs a positive sampling budget eps_s")
        if eps_p <= 0:
            raise InvalidParameterError("the perturbation budget eps_p must be positive")

    @property
    def eps_s(self) -> float:
        return self.split[0]

    @property
    def eps_p(self) -> float:
        return self.split[1]

    @property
    def eps_o(self) -> float:
        return self.split[2]

    def scaled(self, factor: float) -> "PrivacyParams":
        """Same parameters with the whole budget (and every stage share) scaled by ``factor``."""
        return PrivacyParams(
            w=self.w,
            epsilon=self.epsilon * factor,
            alpha=self.alpha,
            k=self.k,
            theta=self.theta,
            sampler=self.sampler,
            split=tuple(x * factor for x in self.split),
        )


class Periods(NamedTuple):
    periods: list
    remainder: Optional[TimeSeries]


def make_periods(series: TimeSeries, w: int) -> Periods:
    """Cut ``series`` into consecutive disjoint w-periods.

    A trailing piece shorter than ``w`` is returned as ``remainder`` rather
    than padded or dropped; the caller decides how to release it.
    """
    if int(w) != w or w < 1:
        raise InvalidParameterError(f"w must be a positive integer, got {w!r}")
    n = len(series)
    full = n // w
    periods = [
        WPeriod(series.values[i * w:(i + 1) * w], origin=series.start_index + i * w, number=i)
        for i in range(full)
    ]
    remainder = None
    if full * w < n:
        remainder = TimeSeries(series.values[full * w:], start_index=series.start_index + full * w)
    return Periods(periods, remainder)


class BudgetLedger:
    """Records the budget charged by each stage of a single period's release."""

    def __init__(self, epsilon: float):
        self.epsilon = float(epsilon)
        self.entries: list[tuple[str, float]] = []

    def charge(self, stage: str, eps: float) -> None:
        if eps < 0:
            raise BudgetError(f"negative charge {eps} for stage {stage!r}")
        self.entries.append((stage, float(eps)))

    @property
    def total(self) -> float:
        return math.fsum(eps for _, eps in self.entries)

    def spent(self, stage: str) -> float:
        return math.fsum(eps for name, eps in self.entries if name == stage)

    def close(self) -> None:
        """Raise unless exactly the configured budget has been charged."""
        if abs(self.total - self.epsilon) > BUDGET_TOL * max(1.0, self.epsilon):
            raise BudgetError(f"budget ledger charged {self.total!r}, expected {self.epsilon!r}")

    def as_dict(self) -> dict:
        return {"epsilon": self.epsilon, "total": self.total, "stages": dict(self.entries)}


# ---------------------------------------------------------------- randomness

_U53 = 2 ** 53


def stage_key(stage: str) -> int:
    return zlib.crc32(stage.encode("utf-8"))


class Substream:
    """Uniform draws on the open interval (-1/2, 1/2) from one derived generator."""

    def __init__(self, generator: np.random.Generator):
        self._rng = generator

    def uniform(self, size=None):
        # (2j + 1 - 2**53) * 2**-54 is exact and symmetric about 0, never +-1/2
        j = self._rng.integers(0, _U53, size=size, dtype=np.int64)
        return (2 * j + 1 - _U53) * 2.0 ** -54

    def normal(self, size=None):
        return self._rng.standard_normal(size)


class _ZeroSubstream(Substream):
    def __init__(self):
        pass

    def uniform(self, size=None):
        return 0.0 if size is None else np.zeros(size)

    def normal(self, size=None):
        return 0.0 if size is None else np.zeros(size)


class NoiseSource:
    """Master seed from which independent, reproducible substreams are derived.

    A substream is a pure function of ``(seed, period, stage)``: asking twice
    for the same triple replays the same draws.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) % 2 ** 64

    def substream(self, period: int, stage: str) -> Substream:
        seq = np.random.SeedSequence(self.seed, spawn_key=(int(period), stage_key(stage)))
        return Substream(np.random.Generator(np.random.PCG64(seq)))

    def derive(self, *keys: int) -> "NoiseSource":
        """Child source for an independent trial (e.g. one seed of an experiment)."""
        seq = np.random.SeedSequence(self.seed, spawn_key=(0xC0FFEE, *[int(k) for k in keys]))
        lo, hi = seq.generate_state(2, dtype=np.uint32)
        return type(self)(int(lo) | (int(hi) << 32))

    def __repr__(self):
        return f"{type(self).__name__}(seed={self.seed})"


class ZeroNoise(NoiseSource):
    """Test-only source whose every uniform draw is 0, so every Laplace draw is 0."""

    def __init__(self, seed: int = 0):
        super().__init__(seed)

    def substream(self, period: int, stage: str) -> Substream:
        return _ZeroSubstream()

    def derive(self, *keys: int) -> "ZeroNoise":
        return ZeroNoise()
