"""Laplace noise, the vector Laplace mechanism and the Sparse Vector Technique."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, List, Union

import numpy as np

from .core import InvalidParameterError, Substream


@dataclass(frozen=True)
class LaplaceScale:
    b: float

    def __post_init__(self):
        if not (self.b > 0 and math.isfinite(self.b)):
            raise InvalidParameterError(f"Laplace scale must be positive and finite, got {self.b!r}")


def laplace_draw(scale: Union[LaplaceScale, float], stream: Substream, size=None):
    """Draw from Lap(b) by inverting the CDF of one uniform on (-1/2, 1/2)."""
    b = scale.b if isinstance(scale, LaplaceScale) else LaplaceScale(float(scale)).b
    u = stream.uniform(size)
    return -b * np.sign(u) * np.log1p(-2.0 * np.abs(u))


def laplace_mechanism(v, sensitivity: float, epsilon: float, stream: Substream) -> np.ndarray:
    """Return ``v`` plus i.i.d. Lap(sensitivity / epsilon) noise."""
    if not epsilon > 0:
        raise InvalidParameterError(f"epsilon must be positive, got {epsilon!r}")
    if not sensitivity > 0:
        raise InvalidParameterError(f"sensitivity must be positive, got {sensitivity!r}")
    v = np.asarray(v, dtype=float)
    return v + laplace_draw(sensitivity / epsilon, stream, size=v.shape)


@dataclass(frozen=True)
class SvtConfig:
    """Sensitivity bound ``delta`` over all queries, answer cap ``k`` and budget."""

    delta: float
    k: int
    epsilon: float

    def __post_init__(self):
        if not self.delta > 0:
            raise InvalidParameterError("SVT sensitivity must be positive")
        if int(self.k) != self.k or self.k < 1:
            raise InvalidParameterError("SVT answer cap k must be a positive integer")
        if not self.epsilon > 0:
            raise InvalidParameterError("SVT budget must be positive")

    @property
    def threshold_scale(self) -> float:
        return 2.0 * self.delta / self.epsilon

    @property
    def query_scale(self) -> float:
        return 4.0 * self.k * self.delta / self.epsilon


def svt(queries: Iterable[float], thresholds, cfg: SvtConfig, stream: Substream) -> List[bool]:
    """Sparse Vector Technique: one above/below answer per query, at most ``cfg.k`` above.

    ``queries`` is consumed lazily and never past the k-th positive answer.
    ``thresholds`` is either one number shared by all queries or an iterable
    aligned with ``queries``. Returns ``True`` for above, ``False`` for below.
    """
    if np.isscalar(thresholds):
        thr_iter = iter(lambda: float(thresholds), None)
    else:
        thr_iter = iter(thresholds)
    rho = laplace_draw(cfg.threshold_scale, stream)
    answers: List[bool] = []
    count = 0
    for q in queries:
        try:
            theta = next(thr_iter)
        except StopIteration:
            raise InvalidParameterError("fewer thresholds than queries") from None
        nu = laplace_draw(cfg.query_scale, stream)
        if q + nu >= theta + rho:
            answers.append(True)
            count += 1
            if count >= cfg.k:
                break
        else:
            answers.append(False)
    return answers
