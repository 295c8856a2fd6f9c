"""Reference mechanisms: per-value Laplace noise and Fourier perturbation (DFT).

Transforms use 1-based sums: ``DFT(x)_j = sum_{i=1..w} exp(2*pi*sqrt(-1)*j*i/w) x_i``
for ``j = 1..w``, stored at array position ``j - 1``; the DC term is ``j = w``.
"""

from __future__ import annotations

import math

import numpy as np

from .core import InvalidParameterError, NoiseSource, Substream, TimeSeries, make_periods
from .noise import laplace_draw, laplace_mechanism


def laplace_baseline(x, epsilon: float, alpha: float, stream: Substream, clip: bool = True) -> np.ndarray:
    """Every value plus Lap(len(x) * alpha / epsilon); negatives truncated to zero."""
    x = np.asarray(x, dtype=float)
    if not epsilon > 0:
        raise InvalidParameterError(f"epsilon must be positive, got {epsilon!r}")
    out = laplace_mechanism(x, x.size * alpha, epsilon, stream)
    return np.maximum(out, 0.0) if clip else out


def _phases(w: int) -> np.ndarray:
    j = np.arange(1, w + 1)
    return 2.0 * np.pi * np.outer(j, j) / w


def dft(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.exp(1j * _phases(len(x))) @ x


def idft(coeffs) -> np.ndarray:
    """Inverse of :func:`dft`; returns real parts."""
    f = np.asarray(coeffs, dtype=complex)
    w = len(f)
    return (np.exp(-1j * _phases(w)) @ f).real / w


def low_frequency_order(w: int) -> np.ndarray:
    """Array positions of the coefficients ordered DC, +1, -1, +2, -2, ..."""
    order = [w - 1]
    for f in range(1, w // 2 + 1):
        order.append(f - 1)
        if w - f != f:
            order.append(w - f - 1)
    return np.array(order[:w])


def dft_noise_scale(w: int, k: int, epsilon: float, alpha: float) -> float:
    """Laplace scale for each real and imaginary part of the k kept coefficients.

    A (w, alpha)-neighbour moves the period by at most ``alpha * sqrt(w)`` in L2.
    The unnormalised transform stretches L2 distances by ``sqrt(w)``, and the
    L1 norm of the 2k real parts is at most ``sqrt(2k)`` times their L2 norm.
    """
    return math.sqrt(2 * k) * math.sqrt(w) * (alpha * math.sqrt(w)) / epsilon


def dft_baseline(x, k: int, epsilon: float, alpha: float, stream: Substream, clip: bool = True) -> np.ndarray:
    """Keep the k lowest-frequency coefficients, perturb them, invert, truncate at zero."""
    x = np.asarray(x, dtype=float)
    w = len(x)
    if not 1 <= k <= w:
        raise InvalidParameterError(f"need 1 <= k <= w, got k={k}, w={w}")
    if not epsilon > 0:
        raise InvalidParameterError(f"epsilon must be positive, got {epsilon!r}")
    coeffs = dft(x)
    keep = low_frequency_order(w)[:k]
    scale = dft_noise_scale(w, k, epsilon, alpha)
    noise = laplace_draw(scale, stream, size=2 * k)
    kept = np.zeros(w, dtype=complex)
    kept[keep] = coeffs[keep] + noise[:k] + 1j * noise[k:]
    out = idft(kept)
    return np.maximum(out, 0.0) if clip else out


def release_stream_baseline(
    series: TimeSeries,
    mechanism: str,
    w: int,
    epsilon: float,
    alpha: float,
    noise: NoiseSource,
    k: int = 10,
    tag: str = "",
) -> TimeSeries:
    """Apply a baseline to each w-period (and Laplace to any trailing remainder)."""
    periods, rest = make_periods(series, w)
    parts = []
    for p in periods:
        stream = noise.substream(p.number, tag + mechanism)
        if mechanism == "laplace":
            parts.append(laplace_baseline(p.values, epsilon, alpha, stream))
        elif mechanism == "dft":
            parts.append(dft_baseline(p.values, k, epsilon, alpha, stream))
        else:
            raise InvalidParameterError(f"unknown baseline {mechanism!r}")
    if rest is not None:
        parts.append(laplace_baseline(rest.values, epsilon, alpha, noise.substream(len(periods), tag + "remainder")))
    values = np.concatenate(parts) if parts else np.empty(0)
    return TimeSeries(values, series.start_index)
