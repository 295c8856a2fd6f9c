from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.signal import lfilter

from optstream.core import InvalidParameterError, NoiseSource, TimeSeries, ZeroNoise
from optstream.evaluation import (
    ABLATIONS,
    MECHANISMS,
    ArmaModel,
    SyntheticLoadSpec,
    arma_fit,
    arma_forecast,
    avg_l1_error,
    compare,
    error_bound_experiment,
    forecast_experiment,
    lipschitz_constant,
    mse,
    run_mechanism,
    summarize,
    synth_load,
)
from optstream.evaluation.experiments import segment_length


def test_avg_l1_examples():
    x = np.array([3.0, 5.0, 4.0])
    assert avg_l1_error(x, x) == 0.0
    assert avg_l1_error(x + 1, x) == 1.0
    assert avg_l1_error([4, 4, 4], x) == pytest.approx(2 / 3)
    assert mse([4, 4, 4], x) == pytest.approx(2 / 3)
    with pytest.raises(InvalidParameterError):
        avg_l1_error([1, 2], x)


def arma_series(phi, theta, n, seed, c=0.0):
    e = np.random.default_rng(seed).normal(size=n)
    # x_t - phi x_{t-1} = c + e_t + theta e_{t-1}
    return lfilter([1.0, theta], [1.0, -phi], e) + c / (1 - phi)


def test_white_noise_fit():
    m = arma_fit(np.random.default_rng(0).normal(size=10_000))
    assert abs(m.phi) < 0.05 and abs(m.theta_ma) < 0.05


def test_white_noise_does_not_land_on_the_common_factor_ridge():
    for seed in range(10):
        m = arma_fit(np.random.default_rng(100 + seed).normal(size=10_000))
        assert abs(m.phi) < 0.05 and abs(m.theta_ma) < 0.05


def test_ar1_recovery():
    m = arma_fit(arma_series(0.8, 0.0, 10_000, 1, c=2.0))
    assert m.phi == pytest.approx(0.8, abs=0.1)
    assert m.mean == pytest.approx(10.0, abs=0.5)


def test_arma11_recovery():
    m = arma_fit(arma_series(0.6, 0.3, 10_000, 2))
    assert m.phi == pytest.approx(0.6, abs=0.1)
    assert m.theta_ma == pytest.approx(0.3, abs=0.1)


def test_constant_series_fit():
    m = arma_fit(np.full(50, 5.0))
    assert (m.c, m.phi, m.theta_ma) == (5.0, 0.0, 0.0)
    with pytest.raises(InvalidParameterError):
        arma_fit([1.0, 2.0])


def test_fit_trace_is_monotone():
    trace = []
    arma_fit(arma_series(0.5, 0.2, 2000, 3), trace=trace)
    assert len(trace) > 2
    assert all(b <= a + 1e-12 for a, b in zip(trace, trace[1:]))


def test_forecasts():
    flat = arma_forecast(ArmaModel(3.0, 0.0, 0.0, 1.0), [1.0, 9.0], 48)
    assert len(flat) == 48
    np.testing.assert_array_equal(flat.values, 3.0)
    m = ArmaModel(c=0.5, phi=0.95, theta_ma=0.0, sigma2=1.0)
    out = arma_forecast(m, TimeSeries(np.arange(20.0)), 10)
    h = np.arange(1, 11)
    np.testing.assert_allclose(out.values, m.mean + 0.95**h * (19.0 - m.mean))
    assert out.start_index == 20
    with pytest.raises(InvalidParameterError):
        arma_forecast(m, [1.0], 0)


def test_synthetic_profile():
    spec = SyntheticLoadSpec(daily_mean=7717.58, amplitude=1000.0)
    s = synth_load(spec, 5, NoiseSource(0))
    np.testing.assert_allclose(s.values[:48], s.values[48:96])
    np.testing.assert_allclose(s.values.reshape(5, 48).mean(axis=1), 7717.58, atol=1e-9)
    noisy = synth_load(SyntheticLoadSpec.for_region(7717.58), 28, NoiseSource(1))
    assert noisy.values.mean() == pytest.approx(7717.58, rel=0.02)
    assert lipschitz_constant(TimeSeries([1.0, 4.0, 2.0])) == 3.0


def test_bound_experiment_constant_stream():
    rep = error_bound_experiment(48, 1.0, 0.0, 3, ZeroNoise())
    assert rep.mse_optstream == 0.0 and rep.mse_laplace == 0.0


def test_bound_experiment_ordering_and_trend():
    hi = error_bound_experiment(48, 1.0, 10.0, 100, NoiseSource(1))
    lo = error_bound_experiment(48, 0.1, 10.0, 100, NoiseSource(1))
    assert hi.mse_optstream < hi.mse_laplace
    assert lo.ratio < hi.ratio
    assert segment_length(48, 1.0, 0.0) == 47


def test_compare_and_summary(aura_load):
    short = TimeSeries(aura_load.values[: 48 * 3])
    rows = compare(short, MECHANISMS, [1.0, 0.1], 3, NoiseSource(0))
    summary = summarize(rows)
    assert len(rows) == 2 * 4 * 3
    assert [r["mechanism"] for r in summary if r["epsilon"] == 0.1] == list(MECHANISMS)
    assert all(r["n"] == 3 and r["stderr"] >= 0 for r in summary)
    with pytest.raises(InvalidParameterError, match="valid names"):
        compare(short, ["optstream-ls", "nope"], [1.0], 1, NoiseSource(0))


@pytest.mark.parametrize("name", MECHANISMS + ABLATIONS)
def test_every_mechanism_runs(aura_load, name):
    short = TimeSeries(aura_load.values[:96])
    out = run_mechanism(name, short, 1.0, NoiseSource(0))
    assert len(out) == 96 and np.all(out.values >= 0)


def test_forecast_from_noise_free_release_matches_truth(aura_load):
    res = forecast_experiment(aura_load, "laplace", 1.0, ZeroNoise(), train_days=7)
    assert res["forecast_l1_private"] == res["forecast_l1_true"]
    assert math.isfinite(res["forecast_l1_true"])
