"""ARMA(1,1) fitted by conditional sum of squares, and iterated forecasting."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from scipy.optimize import minimize
from scipy.stats import chi2
from scipy.signal import lfilter

from ..core import InvalidParameterError, TimeSeries

MIN_LENGTH = 10
COMMON_FACTOR_TOL = 0.1
LR_LEVEL = 0.95


@dataclass(frozen=True)
class ArmaModel:
    """x_t = c + phi * x_{t-1} + theta_ma * beta_{t-1} + beta_t, Var(beta) = sigma2."""

    c: float
    phi: float
    theta_ma: float
    sigma2: float

    @property
    def mean(self) -> float:
        return self.c / (1.0 - self.phi)


def _values(series) -> np.ndarray:
    if isinstance(series, TimeSeries):
        return np.asarray(series.values, dtype=float)
    return np.asarray(series, dtype=float)


def innovations(x: np.ndarray, c: float, phi: float, theta: float) -> np.ndarray:
    """One-step innovations with the first one set to zero (conditional start)."""
    beta = np.zeros_like(x)
    if len(x) > 1:
        e = x[1:] - c - phi * x[:-1]
        beta[1:] = lfilter([1.0], [1.0, theta], e)
    return beta


def css(x: np.ndarray, c: float, phi: float, theta: float) -> float:
    beta = innovations(x, c, phi, theta)
    return float(beta @ beta)


def _significant(css_small: float, css_large: float, n: int) -> bool:
    """Likelihood-ratio test, one extra parameter, Gaussian innovations."""
    if css_large <= 0:
        return css_small > 0
    return (n - 1) * math.log(css_small / css_large) >= chi2.ppf(LR_LEVEL, df=1)


def arma_fit(series, trace: Optional[List[float]] = None, maxiter: int = 4000) -> ArmaModel:
    """Fit ARMA(1,1) by minimising the conditional sum of squared innovations.

    Optimises over the standardised series with ``phi = tanh(u)`` and
    ``theta_ma = tanh(v)``, so the fit is always stationary and invertible.
    When the AR and MA roots nearly cancel, the common factor is removed and
    the result is AR(1) or white noise, whichever a likelihood-ratio test picks.
    If ``trace`` is given, the best objective after each simplex iteration is
    appended to it (non-increasing by construction of Nelder-Mead).
    """
    x = _values(series)
    if len(x) < MIN_LENGTH:
        raise InvalidParameterError(f"need at least {MIN_LENGTH} points to fit, got {len(x)}")
    mu, sd = float(np.mean(x)), float(np.std(x))
    if sd == 0.0 or sd < 1e-12 * max(1.0, abs(mu)):
        return ArmaModel(c=mu, phi=0.0, theta_ma=0.0, sigma2=0.0)
    z = (x - mu) / sd

    def unpack(p):
        return p[0], math.tanh(p[1]), math.tanh(p[2])

    def objective(p):
        m, phi, theta = unpack(p)
        return css(z, m * (1.0 - phi), phi, theta)

    r1 = float(np.corrcoef(z[:-1], z[1:])[0, 1])
    if not math.isfinite(r1):
        r1 = 0.0
    start = np.array([0.0, math.atanh(max(-0.95, min(0.95, r1))), 0.0])
    def record(pk):
        trace.append(objective(pk))

    if trace is not None:
        trace.append(objective(start))

    res = minimize(
        objective, start, method="Nelder-Mead", callback=record if trace is not None else None,
        options={"xatol": 1e-9, "fatol": 1e-12, "maxiter": maxiter, "maxfev": 4 * maxiter},
    )
    m, phi, theta = unpack(res.x)
    best = res.fun
    if abs(phi + theta) <= COMMON_FACTOR_TOL:
        # phi = -theta cancels to white noise and the parameters are not identified on
        # that ridge, so cancel the common factor and choose AR(1) or white noise
        ar = minimize(
            lambda p: css(z, p[0] * (1.0 - math.tanh(p[1])), math.tanh(p[1]), 0.0),
            start[:2], method="Nelder-Mead", options={"xatol": 1e-9, "fatol": 1e-12, "maxiter": maxiter},
        )
        wn = css(z, 0.0, 0.0, 0.0)
        m, phi, theta, best = ar.x[0], math.tanh(ar.x[1]), 0.0, ar.fun
        if not _significant(wn, best, len(z)):
            m, phi, best = 0.0, 0.0, wn
    c_z = m * (1.0 - phi)
    sigma2 = best / max(1, len(z) - 1) * sd * sd
    return ArmaModel(c=c_z * sd + mu * (1.0 - phi), phi=phi, theta_ma=theta, sigma2=sigma2)


def arma_forecast(model: ArmaModel, history, horizon: int) -> TimeSeries:
    """Iterated one-step forecasts, future innovations set to zero."""
    x = _values(history)
    if len(x) == 0:
        raise InvalidParameterError("forecast needs a non-empty history")
    if horizon < 1:
        raise InvalidParameterError("horizon must be positive")
    beta = innovations(x, model.c, model.phi, model.theta_ma)
    out = np.empty(horizon)
    prev, prev_beta = x[-1], beta[-1]
    for h in range(horizon):
        nxt = model.c + model.phi * prev + model.theta_ma * prev_beta
        out[h] = nxt
        prev, prev_beta = nxt, 0.0
    start = history.start_index + len(x) if isinstance(history, TimeSeries) else len(x)
    return TimeSeries(out, start)
