"""Acceptance criteria, one test each; every test records a PASS/FAIL line for the summary."""

from __future__ import annotations

import time
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

from conftest import ACCEPTANCE_LINES
from optstream.baselines import dft, dft_baseline
from optstream.cli import main, write_series
from optstream.core import NoiseSource, PrivacyParams, TimeSeries, ZeroNoise
from optstream.evaluation import (
    ABLATIONS,
    MECHANISMS,
    ExperimentConfig,
    SyntheticLoadSpec,
    arma_fit,
    compare,
    run_mechanism,
    summarize,
    synth_load,
)
from optstream.evaluation.experiments import forecast_from
from optstream.evaluation.synth import REGION_DAILY_MEANS
from optstream.hierarchy import build_tree, max_inconsistency, release_hierarchical, release_hierarchical_baseline
from optstream.noise import laplace_draw
from optstream.pipeline import perturb
from optstream.postprocess import (
    FeatureSet,
    day_profile,
    feature_query,
    post_process,
    reconcile,
    weighted_norm,
)
from optstream.sampling import l1_score, l1_sensitivity

DEFAULT_CONFIG = Path(__file__).resolve().parents[1] / "configs" / "default.yaml"
# the experimental profile shipped in configs/default.yaml
PROFILE = ExperimentConfig(w=48, k=10, theta=1000.0, alpha=10.0, dft_k=10)
# plain w-event privacy, reported alongside for reference only
UNIT = ExperimentConfig(w=48, k=10, theta=1000.0, alpha=1.0, dft_k=10)


def record(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def test_criterion_01_factor_two_bound():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    fs = day_profile(48)
    lam = fs.default_weights()
    worst = 0.0
    violations = 0
    for _ in range(1000):
        x = rng.uniform(0, 1000, 48)
        scale = 10 ** rng.uniform(-1, 3)
        truth = [feature_query(x, f) for f in fs]
        noisy = [t + rng.laplace(0, scale, t.size) for t in truth]
        sol = reconcile(noisy, fs)
        lhs = weighted_norm(sol.feature_values, truth, lam)
        rhs = 2 * weighted_norm(noisy, truth, lam)
        worst = max(worst, lhs / rhs)
        violations += lhs > rhs * (1 + 1e-9)
    elapsed = time.perf_counter() - t0
    ok = violations == 0 and elapsed < 60
    record(1, ok, f"1000 instances, violations={violations}, max lhs/rhs={worst:.4f}, {elapsed:.1f}s")
    assert ok


def _scores(x: np.ndarray, a: int, b: int) -> np.ndarray:
    """Row-wise L1 score, vectorised over a batch of periods."""
    if b - a < 2:
        return np.zeros(x.shape[0])
    t = np.arange(a + 1, b)
    chord = x[:, [a - 1]] + (x[:, [b - 1]] - x[:, [a - 1]]) * (t - a) / (b - a)
    return np.abs(chord - x[:, a:b - 1]).sum(axis=1)


def test_criterion_02_sensitivity_brute_force():
    rng = np.random.default_rng(2)
    n = 10_000
    violations = 0
    cases = 0
    for w in range(2, 9):
        for a in range(1, w):
            for b in range(a + 1, w + 1):
                for alpha in (1.0, 10.0):
                    x = rng.uniform(-100, 100, (n, w))
                    # half the neighbours sit on the vertices of the alpha-box, where gaps peak
                    d = rng.uniform(-1, 1, (n, w))
                    d[: n // 2] = np.sign(d[: n // 2])
                    y = x + alpha * d
                    dev = np.abs(_scores(x, a, b) - _scores(y, a, b))
                    violations += int(np.sum(dev > l1_sensitivity(a, b, alpha) + 1e-9))
                    cases += 1
                    # the vectorised oracle agrees with the library on a few rows
                    for r in range(3):
                        assert _scores(x[r:r + 1], a, b)[0] == pytest.approx(l1_score(x[r], a, b), abs=1e-9)
    ok = violations == 0
    record(2, ok, f"{cases} (w,a,b,alpha) cases x {n} neighbours, violations={violations}")
    assert ok


def test_criterion_03_feasibility_and_optimality():
    rng = np.random.default_rng(3)
    fs = day_profile(48)
    worst_gap = worst_kkt = 0.0
    negatives = 0
    for i in range(300):
        x = rng.uniform(0, 500, 48)
        x_tilde = x + rng.laplace(0, 10 ** rng.uniform(0, 3), 48)
        sol = post_process(x_tilde, x, fs, 0.5, 1.0, NoiseSource(i).substream(0, "o"))
        negatives += int(np.sum(sol.x < 0))
        worst_kkt = max(worst_kkt, sol.kkt_residual)
        for a, b in fs.order:
            fine, coarse = fs.features[a], fs.features[b]
            _, first = np.unique(fine.labels, return_index=True)
            agg = np.bincount(coarse.labels[first], weights=sol.feature_values[a], minlength=coarse.m)
            worst_gap = max(worst_gap, float(np.max(np.abs(agg - sol.feature_values[b]))))
    two = reconcile([np.array([3.0, 5.0]), np.array([10.0])], FeatureSet.build(2, [[(0, 2)]]), lam=(0.5, 1.0))
    hand = float(np.max(np.abs(two.x - [3.8, 5.8])))
    ok = worst_gap <= 1e-6 and negatives == 0 and worst_kkt <= 1e-6 and hand <= 1e-6
    record(
        3, ok,
        f"consistency gap={worst_gap:.2e}, negatives={negatives}, max KKT={worst_kkt:.2e}, "
        f"2-variable instance off by {hand:.1e}",
    )
    assert ok


def _means(series, eps, seeds, cfg, names):
    rows = compare(series, names, [eps], seeds, NoiseSource(2024), cfg)
    return {r["mechanism"]: r["mean"] for r in summarize(rows)}


def _fmt(means):
    return ", ".join(f"{k}={v:.0f}" for k, v in means.items())


def test_criterion_04_error_ordering(aura_load):
    t0 = time.perf_counter()
    m = _means(aura_load, 0.1, 30, PROFILE, list(MECHANISMS) + list(ABLATIONS))
    elapsed = time.perf_counter() - t0
    chain = m["optstream-ls"] <= m["optstream-es"] <= m["dft"] <= m["laplace"]
    ablation = m["perturb-only"] >= m["perturb+opt"] >= m["perturb+sample"] >= m["full"]
    ok = chain and ablation and elapsed < 300
    unit = _means(aura_load, 0.1, 30, UNIT, list(MECHANISMS) + list(ABLATIONS))
    record(
        4, ok,
        f"eps=0.1, alpha=10, 30 seeds, {elapsed:.0f}s; mechanisms {'hold' if chain else 'VIOLATED'}, "
        f"ablation {'holds' if ablation else 'VIOLATED'}: {_fmt(m)} | for reference, alpha=1: {_fmt(unit)}",
    )
    assert ok


def test_criterion_05_order_of_magnitude(aura_load):
    m = _means(aura_load, 0.01, 30, PROFILE, ["optstream-ls", "laplace"])
    ratio = m["laplace"] / m["optstream-ls"]
    ok = ratio >= 5
    unit = _means(aura_load, 0.01, 30, UNIT, ["optstream-ls", "laplace"])
    record(
        5, ok,
        f"eps=0.01, alpha=10, 30 seeds: Laplace/OptStream-LS = {ratio:.2f} (threshold 5, expected 10) "
        f"| for reference, alpha=1: {unit['laplace'] / unit['optstream-ls']:.2f}",
    )
    assert ok


def test_criterion_06_hierarchical_consistency():
    src = NoiseSource(6)
    leaves = {
        name: synth_load(SyntheticLoadSpec.for_region(mean), 7, src, stream_id=i)
        for i, (name, mean) in enumerate(REGION_DAILY_MEANS.items())
    }
    tree = build_tree({"france": list(leaves)}, leaves)
    rel = release_hierarchical(tree, PrivacyParams(48, 1.0, alpha=10.0), day_profile(48), NoiseSource(7))
    ours = max_inconsistency(tree, rel.series)
    lap = max_inconsistency(tree, release_hierarchical_baseline(tree, "laplace", 1.0, 10.0, 48, NoiseSource(7)))
    fou = max_inconsistency(tree, release_hierarchical_baseline(tree, "dft", 1.0, 10.0, 48, NoiseSource(7)))
    ok = tree.height == 2 and rel.level_epsilon == [0.5, 0.5] and ours <= 1e-6 and lap > 1.0 and fou > 1.0
    record(6, ok, f"height {tree.height}, levels {rel.level_epsilon}; max gap OptStream={ours:.1e}, Laplace={lap:.0f}, DFT={fou:.0f}")
    assert ok


def test_criterion_07_distributions():
    draws = laplace_draw(1.0, NoiseSource(70).substream(0, "ks"), size=10**6)
    ks = stats.kstest(draws, stats.laplace().cdf).statistic
    k, alpha, eps_p = 10, 10.0, 1 / 3
    stream = NoiseSource(71).substream(0, "perturb")
    noise = np.concatenate([perturb(np.zeros(k), eps_p, alpha, stream) for _ in range(10_000)])
    expected = 2 * (k * alpha / eps_p) ** 2
    rel = abs(noise.var() / expected - 1)
    ok = ks <= 0.005 and rel <= 0.05
    record(7, ok, f"KS={ks:.5f} over 1e6 draws; perturb variance off by {rel:.2%} (k=10, alpha=10, eps_p=1/3)")
    assert ok


def test_criterion_08_dft_roundtrip():
    x = np.random.default_rng(8).uniform(0, 8000, 48)
    back = dft_baseline(x, 48, 1.0, 1.0, ZeroNoise().substream(0, "dft"), clip=False)
    err = float(np.max(np.abs(back - x)))
    f = dft(x)
    parseval = abs(np.sum(x**2) - np.sum(np.abs(f) ** 2) / 48) / np.sum(x**2)
    ok = err <= 1e-9 and parseval <= 1e-6
    record(8, ok, f"roundtrip max error={err:.1e}, Parseval relative gap={parseval:.1e}")
    assert ok


def test_criterion_09_arma(aura_load):
    e = np.random.default_rng(9).normal(size=10_000)
    x = np.empty_like(e)
    x[0] = e[0]
    for t in range(1, x.size):
        x[t] = 0.8 * x[t - 1] + e[t]
    phi = arma_fit(x).phi
    hist = TimeSeries(aura_load.values[: 27 * 48])
    true = forecast_from(hist, hist, 27 * 48, 48).forecast.values
    same = []
    for name, cfg in [
        ("laplace", PROFILE),
        ("perturb-only", PROFILE),  # every point measured, singleton features only
    ]:
        private = run_mechanism(name, hist, 1.0, ZeroNoise(), cfg)
        same.append(np.array_equal(forecast_from(hist, private, 27 * 48, 48).forecast.values, true))
    ok = abs(phi - 0.8) <= 0.1 and all(same)
    record(9, ok, f"fitted phi={phi:.3f} (true 0.8); noise-free forecasts bit-identical: {same}")
    assert ok


def test_criterion_10_cli_determinism(tmp_path, aura_load):
    src = tmp_path / "load.csv"
    write_series(src, TimeSeries(aura_load.values[: 7 * 48]))
    leaves = tmp_path / "leaves"
    assert main(["synth", "--region", "all", "--days", "2", "--seed", "3", "--output", str(leaves)]) == 0
    commands = {
        "release": ["release", "--input", str(src), "--config", str(DEFAULT_CONFIG), "--seed", "11"],
        "compare": ["compare", "--input", str(src), "--config", str(DEFAULT_CONFIG), "--seed", "11", "--seeds", "2"],
        "forecast": ["forecast", "--input", str(src), "--config", str(DEFAULT_CONFIG), "--seed", "11"],
        "hier": ["release-hierarchical", "--input", str(leaves / "hierarchy.yaml"), "--config", str(DEFAULT_CONFIG), "--seed", "11"],
    }
    mismatched = []
    for name, argv in commands.items():
        outs = []
        for run in ("a", "b"):
            out = tmp_path / run / name
            out.parent.mkdir(exist_ok=True)
            target = out if name == "hier" else out.with_suffix(".csv")
            assert main(argv + ["--output", str(target)]) == 0
            root = out if name == "hier" else out.parent
            pattern = "*" if name == "hier" else f"{name}.*"
            outs.append({p.name: p.read_bytes() for p in sorted(root.glob(pattern))})
        if outs[0] != outs[1] or not outs[0]:
            mismatched.append(name)
    ok = not mismatched
    record(10, ok, f"release, compare, forecast, release-hierarchical byte-identical across runs; mismatched={mismatched}")
    assert ok
