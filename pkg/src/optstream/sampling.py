"""Choosing which points of a w-period to measure.

Indices in this module are 1-based, matching the ``[w] = {1, ..., w}``
convention used for sample sets throughout the package.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .core import InvalidParameterError, Substream
from .noise import SvtConfig, laplace_draw


@dataclass(frozen=True)
class SampleSet:
    """Strictly increasing 1-based indices into a period of length ``w``."""

    indices: Tuple[int, ...]
    w: int

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if not idx or idx[0] != 1:
            raise InvalidParameterError("a sample set must start with index 1")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise InvalidParameterError(f"sample indices must be strictly increasing: {idx}")
        if idx[-1] > self.w:
            raise InvalidParameterError(f"sample index {idx[-1]} outside [1, {self.w}]")
        object.__setattr__(self, "indices", idx)

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    @property
    def positions(self) -> np.ndarray:
        """0-based array positions of the sampled indices."""
        return np.asarray(self.indices) - 1


def l1_score(x, a: int, b: int) -> float:
    """Sum of absolute gaps between ``x[a..b]`` and the chord joining ``x_a`` and ``x_b``."""
    if not a < b:
        raise InvalidParameterError(f"l1_score needs a < b, got a={a}, b={b}")
    x = np.asarray(x, dtype=float)
    if a < 1 or b > len(x):
        raise InvalidParameterError(f"[{a}, {b}] is outside [1, {len(x)}]")
    if b - a < 2:
        return 0.0
    xa, xb = x[a - 1], x[b - 1]
    t = np.arange(a + 1, b)
    chord = (t - a) * (xb - xa) / (b - a) + xa
    return float(np.abs(chord - x[a:b - 1]).sum())


def l1_sensitivity(a: int, b: int, alpha: float = 1.0) -> float:
    """Bound on how much ``l1_score(., a, b)`` moves between (w, alpha)-neighbours."""
    if not a < b:
        raise InvalidParameterError(f"l1_sensitivity needs a < b, got a={a}, b={b}")
    return 2.0 * alpha * (b - a)


def sampler_sensitivity(w: int, k: int, alpha: float = 1.0) -> float:
    # the longest gap the sampler can leave between two chosen indices is w - k
    return 2.0 * alpha * (w - k)


def equally_spaced_sample(w: int, k: int) -> SampleSet:
    if not 2 <= k <= w:
        raise InvalidParameterError(f"need 2 <= k <= w, got k={k}, w={w}")
    step = (w - 1) / (k - 1)
    idx = sorted({int(math.floor(1 + i * step + 0.5)) for i in range(k)})
    return SampleSet(tuple(idx), w)


def adaptive_l1_sample(
    x,
    k: int,
    eps_s: float,
    theta: float,
    alpha: float,
    stream: Substream,
) -> SampleSet:
    """Greedy private selection of interpolation anchors via the Sparse Vector Technique.

    Starting from index 1, index ``i`` becomes the next anchor when the noisy
    L1 score of the chord from the previous anchor to ``i`` clears the noisy
    threshold. Once only as many indices remain as anchors still needed, all
    of them are taken. Stops as soon as ``k`` anchors are chosen, so the last
    index of the period is not guaranteed to be in the result.
    """
    x = np.asarray(x, dtype=float)
    w = len(x)
    if not eps_s > 0:
        raise InvalidParameterError(f"the adaptive sampler needs eps_s > 0, got {eps_s!r}")
    if not 2 <= k <= w:
        raise InvalidParameterError(f"need 2 <= k <= w, got k={k}, w={w}")
    delta = sampler_sensitivity(w, k, alpha)

    if delta > 0:
        cfg = SvtConfig(delta=delta, k=k, epsilon=eps_s)

        def noise(scale):
            return laplace_draw(scale, stream)

        rho = noise(cfg.threshold_scale)
    else:
        # k == w: every index is taken by the fill step, no data is read
        cfg = None

        def noise(scale):
            return 0.0

        rho = 0.0

    chosen = [1]
    last = 1
    for i in range(2, w + 1):
        if w - i + 1 <= k - len(chosen):
            # the remaining indices fit in the free slots: take them all
            chosen.extend(range(i, w + 1))
            break
        mu = noise(cfg.query_scale) if cfg else 0.0
        if l1_score(x, last, i) + mu >= theta + rho:
            chosen.append(i)
            last = i
        if len(chosen) >= k:
            break
    return SampleSet(tuple(chosen), w)
