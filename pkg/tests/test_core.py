from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from optstream.core import (
    BudgetError,
    BudgetLedger,
    InvalidParameterError,
    NoiseSource,
    PrivacyParams,
    Sampler,
    TimeSeries,
    ZeroNoise,
    make_periods,
    split_budget,
)


@pytest.mark.parametrize(
    "eps, sampler, weights, expected",
    [
        (3.0, "adaptive-l1", None, (1.0, 1.0, 1.0)),
        (1.0, "equally-spaced", None, (0.0, 0.5, 0.5)),
        (2.0, "adaptive-l1", (1, 2, 1), (0.5, 1.0, 0.5)),
    ],
)
def test_split_budget_examples(eps, sampler, weights, expected):
    assert split_budget(eps, sampler, weights) == pytest.approx(expected, abs=1e-15)


@given(
    eps=st.floats(1e-6, 1e3),
    weights=st.tuples(*[st.floats(0, 10)] * 3).filter(lambda t: sum(t) > 1e-6),
)
def test_split_sums_to_epsilon(eps, weights):
    parts = split_budget(eps, Sampler.ADAPTIVE_L1, weights)
    assert math.fsum(parts) == pytest.approx(eps, rel=1e-12)
    assert all(p >= 0 for p in parts)


def test_split_budget_rejects_bad_input():
    with pytest.raises(InvalidParameterError):
        split_budget(0.0, "adaptive-l1")
    with pytest.raises(InvalidParameterError):
        split_budget(1.0, "adaptive-l1", (0, 0, 0))
    with pytest.raises(InvalidParameterError):
        split_budget(1.0, "adaptive-l1", (1, -1, 1))
    with pytest.raises(InvalidParameterError, match="unknown sampler"):
        split_budget(1.0, "random")


def test_privacy_params_validation():
    p = PrivacyParams(w=48, epsilon=1.0)
    assert p.split == pytest.approx((1 / 3, 1 / 3, 1 / 3))
    with pytest.raises(InvalidParameterError, match="k must be"):
        PrivacyParams(w=48, epsilon=1.0, k=1)
    with pytest.raises(InvalidParameterError, match="k must be"):
        PrivacyParams(w=8, epsilon=1.0, k=9)
    with pytest.raises(InvalidParameterError, match="does not sum"):
        PrivacyParams(w=48, epsilon=1.0, split=(0.3, 0.3, 0.3))
    with pytest.raises(InvalidParameterError, match="eps_s must be 0"):
        PrivacyParams(w=48, epsilon=1.0, sampler="equally-spaced", split=(0.1, 0.45, 0.45))
    with pytest.raises(InvalidParameterError, match="positive sampling budget"):
        PrivacyParams(w=48, epsilon=1.0, sampler="adaptive-l1", split=(0.0, 0.5, 0.5))
    with pytest.raises(InvalidParameterError, match="eps_p"):
        PrivacyParams(w=48, epsilon=1.0, budget_weights=(1, 0, 1))
    with pytest.raises(InvalidParameterError):
        PrivacyParams(w=48, epsilon=1.0, alpha=0)


def test_scaled_params_keep_proportions():
    p = PrivacyParams(w=48, epsilon=1.0, budget_weights=(1, 2, 1)).scaled(0.5)
    assert p.epsilon == 0.5
    assert p.split == pytest.approx((0.125, 0.25, 0.125))


def test_time_series_is_immutable_and_finite():
    ts = TimeSeries([1.0, 2.0, 3.0], start_index=5)
    with pytest.raises(ValueError):
        ts.values[0] = 9.0
    assert list(ts.index) == [5, 6, 7]
    with pytest.raises(InvalidParameterError, match="finite"):
        TimeSeries([1.0, float("nan")])


@pytest.mark.parametrize("n, periods, rest", [(96, 2, None), (48, 1, None), (50, 1, 2)])
def test_make_periods(n, periods, rest):
    ts = TimeSeries(np.arange(n, dtype=float))
    out = make_periods(ts, 48)
    assert len(out.periods) == periods
    if rest is None:
        assert out.remainder is None
    else:
        assert len(out.remainder) == rest
        assert out.remainder.start_index == 48
    np.testing.assert_array_equal(out.periods[0].values, ts.values[:48])
    assert [p.number for p in out.periods] == list(range(periods))


def test_budget_ledger():
    ledger = BudgetLedger(1.0)
    ledger.charge("sample", 1 / 3)
    ledger.charge("perturb", 1 / 3)
    with pytest.raises(BudgetError):
        ledger.close()
    ledger.charge("postprocess", 1 / 3)
    ledger.close()
    assert ledger.spent("perturb") == pytest.approx(1 / 3)
    with pytest.raises(BudgetError):
        ledger.charge("x", -0.1)


def test_substreams_are_reproducible_and_distinct():
    src = NoiseSource(7)
    a = src.substream(3, "perturb").uniform(1000)
    b = NoiseSource(7).substream(3, "perturb").uniform(1000)
    c = src.substream(3, "sample").uniform(1000)
    d = src.substream(4, "perturb").uniform(1000)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)
    assert src.derive(1).seed == NoiseSource(7).derive(1).seed != src.derive(2).seed


def test_uniforms_lie_in_open_interval():
    u = NoiseSource(0).substream(0, "u").uniform(10**6)
    assert np.all(np.abs(u) < 0.5)
    assert abs(u.mean()) < 0.002


def test_zero_noise():
    s = ZeroNoise().substream(0, "anything")
    assert s.uniform() == 0.0
    np.testing.assert_array_equal(s.uniform(3), np.zeros(3))
