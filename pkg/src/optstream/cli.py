"""Command-line interface: CSV streams in, private CSV streams and JSON metrics out."""

from __future__ import annotations

import argparse
import csv
import json
import math
import re
import sys
from pathlib import Path
from typing import Any, Dict, Optional, Sequence

import numpy as np
import yaml

from .core import (
    ConfigurationError,
    IngestionError,
    NoiseSource,
    OptStreamError,
    PrivacyParams,
    Sampler,
    TimeSeries,
    ZeroNoise,
)
from .evaluation.experiments import (
    ABLATIONS,
    MECHANISMS,
    ExperimentConfig,
    _optstream_setup,
    check_mechanisms,
    compare,
    error_bound_experiment,
    forecast_from,
    run_mechanism,
    summarize,
    write_rows,
)
from .evaluation.metrics import avg_l1_error
from .evaluation.synth import REGION_DAILY_MEANS, SyntheticLoadSpec, synth_load
from .hierarchy import build_tree, max_inconsistency, release_hierarchical
from .pipeline import REMAINDER_POLICIES, release_stream
from .postprocess import FeatureSet, day_profile_ranges

FLOAT_FMT = "{:.6f}"

# every config file key must appear here
CONFIG_SCHEMA: Dict[str, str] = {
    "w": "period length in time steps (int >= 2)",
    "epsilon": "privacy budget per w-period (float > 0)",
    "alpha": "indistinguishability level, max change of one user's value (float > 0)",
    "k": "maximum number of sampled points per period (int in [2, w])",
    "theta": "adaptive sampler threshold (float >= 0)",
    "sampler": "equally-spaced | adaptive-l1",
    "budget_weights": "relative (sample, perturb, postprocess) shares of epsilon",
    "split": "absolute (eps_s, eps_p, eps_o); must sum to epsilon",
    "features": "day-profile | singletons | list of partitions, each a list of [start, stop) pairs",
    "lambda": "per-feature weights of the reconciliation objective",
    "remainder": "laplace | error, how a trailing partial period is handled",
    "workers": "threads used to release periods in parallel (int >= 1)",
    "dft_k": "number of Fourier coefficients kept by the dft baseline",
    "mechanism": "mechanism for the forecast command",
    "mechanisms": "mechanisms for the compare command",
    "epsilons": "list of budgets swept by the compare command",
    "seeds": "number of seeds for compare and bound-experiment",
    "train_days": "days of private history the forecaster is fitted on",
    "horizon": "forecast length in steps (defaults to w)",
    "lipschitz": "step bound L of the bound-experiment random walks",
    "periods": "periods per stream in the bound experiment",
}

DEFAULTS: Dict[str, Any] = {
    "w": 48,
    "epsilon": 1.0,
    "alpha": 10.0,
    "k": 10,
    "theta": 1000.0,
    "sampler": "adaptive-l1",
    "features": "day-profile",
    "remainder": "laplace",
    "workers": 1,
    "dft_k": 10,
    "mechanism": "optstream-ls",
    "mechanisms": list(MECHANISMS),
    "epsilons": None,
    "seeds": 30,
    "train_days": 28,
    "horizon": None,
    "lipschitz": 10.0,
    "periods": 10,
}

NODE_NAME = re.compile(r"^[A-Za-z0-9_.-]+$")


# ----------------------------------------------------------------- config


def _field_error(name: str, msg: str) -> ConfigurationError:
    return ConfigurationError(f"config field {name!r}: {msg}")


def _as_int(cfg, name, lo=None):
    v = cfg[name]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or int(v) != v:
        raise _field_error(name, f"expected an integer, got {v!r}")
    v = int(v)
    if lo is not None and v < lo:
        raise _field_error(name, f"must be >= {lo}, got {v}")
    return v


def _as_float(cfg, name, positive=False, nonneg=False):
    v = cfg[name]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise _field_error(name, f"expected a finite number, got {v!r}")
    if positive and not v > 0:
        raise _field_error(name, f"must be positive, got {v}")
    if nonneg and v < 0:
        raise _field_error(name, f"must be non-negative, got {v}")
    return float(v)


def _as_floats(cfg, name, length=None):
    v = cfg[name]
    if v is None:
        return None
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        v = [v]
    if not isinstance(v, (list, tuple)) or not all(
        isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x) for x in v
    ):
        raise _field_error(name, f"expected a list of numbers, got {v!r}")
    if length is not None and len(v) != length:
        raise _field_error(name, f"expected {length} numbers, got {len(v)}")
    return tuple(float(x) for x in v)


def load_config(path: Optional[str]) -> Dict[str, Any]:
    """Read a YAML (or JSON) config, reject unknown keys, fill defaults."""
    raw: Dict[str, Any] = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc.strerror}") from None
        try:
            loaded = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigurationError(f"config {path} is not valid YAML: {exc}") from None
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigurationError(f"config {path} must be a mapping of field names to values")
        raw = loaded
    unknown = sorted(set(raw) - set(CONFIG_SCHEMA))
    if unknown:
        raise ConfigurationError(
            f"unknown config field(s) {', '.join(map(repr, unknown))}; known fields: {', '.join(CONFIG_SCHEMA)}"
        )
    cfg = dict(DEFAULTS)
    cfg.update(raw)
    return cfg


def apply_overrides(cfg: Dict[str, Any], args: argparse.Namespace) -> Dict[str, Any]:
    cfg = dict(cfg)
    for name in ("alpha", "w", "k", "theta", "seeds"):
        v = getattr(args, name, None)
        if v is not None:
            cfg[name] = v
    eps = getattr(args, "epsilon", None)
    if eps:
        cfg["epsilon"] = eps[0]
        cfg["epsilons"] = list(eps)
    mechs = getattr(args, "mechanisms", None)
    if mechs:
        names = [m.strip() for m in mechs.split(",") if m.strip()]
        cfg["mechanisms"] = names
        cfg["mechanism"] = names[0]
    return cfg


def feature_ranges(cfg: Dict[str, Any], w: int):
    spec = cfg["features"]
    if spec == "day-profile":
        return day_profile_ranges(w)
    if spec == "singletons":
        return []
    if not isinstance(spec, list):
        raise _field_error("features", f"expected day-profile, singletons or a list of partitions, got {spec!r}")
    out = []
    for i, part in enumerate(spec):
        try:
            out.append([(int(a), int(b)) for a, b in part])
        except (TypeError, ValueError):
            raise _field_error("features", f"partition {i + 1} must be a list of [start, stop) pairs") from None
    return out


def feature_set(cfg: Dict[str, Any]) -> FeatureSet:
    w = _as_int(cfg, "w", lo=2)
    try:
        return FeatureSet.build(w, feature_ranges(cfg, w))
    except ConfigurationError as exc:
        raise _field_error("features", str(exc)) from None


def privacy_params(cfg: Dict[str, Any]) -> PrivacyParams:
    w = _as_int(cfg, "w", lo=2)
    k = _as_int(cfg, "k", lo=2)
    eps = _as_float(cfg, "epsilon", positive=True)
    alpha = _as_float(cfg, "alpha", positive=True)
    theta = _as_float(cfg, "theta", nonneg=True)
    try:
        sampler = Sampler.parse(cfg["sampler"])
    except OptStreamError as exc:
        raise _field_error("sampler", str(exc)) from None
    split = _as_floats(cfg, "split", 3) if cfg.get("split") is not None else None
    weights = _as_floats(cfg, "budget_weights", 3) if cfg.get("budget_weights") is not None else None
    if split is not None and weights is not None:
        raise _field_error("split", "give either split or budget_weights, not both")
    if k > w:
        raise _field_error("k", f"must not exceed w={w}, got {k}")
    try:
        return PrivacyParams(
            w=w, epsilon=eps, alpha=alpha, k=k, theta=theta, sampler=sampler,
            split=split, budget_weights=weights,
        )
    except OptStreamError as exc:
        field = "split" if split is not None else "budget_weights" if weights is not None else "sampler"
        raise _field_error(field, str(exc)) from None


def lambda_weights(cfg: Dict[str, Any], fset: FeatureSet):
    lam = _as_floats(cfg, "lambda") if cfg.get("lambda") is not None else None
    if lam is not None and (len(lam) != fset.p or any(x <= 0 for x in lam)):
        raise _field_error("lambda", f"expected {fset.p} positive weights, one per feature")
    return lam


def experiment_config(cfg: Dict[str, Any]) -> ExperimentConfig:
    w = _as_int(cfg, "w", lo=2)
    fset = feature_set(cfg)
    weights = None
    if cfg.get("budget_weights") is not None:
        weights = _as_floats(cfg, "budget_weights", 3)
    elif cfg.get("split") is not None:
        split = _as_floats(cfg, "split", 3)
        weights = tuple(x / sum(split) for x in split) if sum(split) > 0 else split
    return ExperimentConfig(
        w=w,
        k=_as_int(cfg, "k", lo=2),
        theta=_as_float(cfg, "theta", nonneg=True),
        alpha=_as_float(cfg, "alpha", positive=True),
        dft_k=_as_int(cfg, "dft_k", lo=1),
        features=tuple(tuple(p) for p in feature_ranges(cfg, w)),
        lam=lambda_weights(cfg, fset),
        budget_weights=weights,
    )


# -------------------------------------------------------------------- I/O


def read_series(path) -> TimeSeries:
    """Parse a ``t,value`` CSV with consecutive integer time steps."""
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise IngestionError(f"cannot read {path}: {exc.strerror}") from None
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["t", "value"]:
            raise IngestionError(f"{path}, line 1: expected header 't,value', got {header!r}")
        ts, values = [], []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise IngestionError(f"{path}, line {line}: expected 2 fields, got {len(row)}")
            try:
                t = int(row[0])
                v = float(row[1])
            except ValueError:
                raise IngestionError(f"{path}, line {line}: cannot parse {row!r}") from None
            if not math.isfinite(v):
                raise IngestionError(f"{path}, line {line}: value {row[1]!r} is not finite")
            if ts and t != ts[-1] + 1:
                raise IngestionError(f"{path}, line {line}: time step {t} does not follow {ts[-1]}")
            ts.append(t)
            values.append(v)
    if not values:
        raise IngestionError(f"{path}: no data rows")
    return TimeSeries(np.asarray(values), start_index=ts[0])


def write_series(path, series: TimeSeries) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("t,value\n")
        for t, v in zip(series.index, series.values):
            fh.write(f"{int(t)},{FLOAT_FMT.format(v)}\n")


def write_json(path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def metrics_path(output) -> Path:
    out = Path(output)
    return out.with_name(out.stem + ".metrics.json")


def _noise(args) -> NoiseSource:
    return ZeroNoise() if getattr(args, "no_noise", False) else NoiseSource(args.seed)


# --------------------------------------------------------------- commands


def cmd_release(args) -> int:
    cfg = apply_overrides(load_config(args.config), args)
    params = privacy_params(cfg)
    fset = feature_set(cfg)
    lam = lambda_weights(cfg, fset)
    if cfg["remainder"] not in REMAINDER_POLICIES:
        raise _field_error("remainder", f"expected one of {', '.join(REMAINDER_POLICIES)}")
    series = read_series(args.input)
    rel = release_stream(
        series, params, fset, _noise(args), lam=lam,
        remainder=cfg["remainder"], workers=_as_int(cfg, "workers", lo=1),
    )
    write_series(args.output, rel.series)
    periods = [
        {
            "period": r.period,
            "samples": list(r.sample_set.indices),
            "budget_spent": list(r.budget_spent),
            "ledger": r.diagnostics["ledger"],
            "solver_iterations": r.diagnostics["solver_iterations"],
            "kkt_residual": r.diagnostics["kkt_residual"],
        }
        for r in rel.reports
    ]
    write_json(metrics_path(args.output), {
        "seed": args.seed,
        "no_noise": bool(args.no_noise),
        "params": {
            "w": params.w, "epsilon": params.epsilon, "alpha": params.alpha, "k": params.k,
            "theta": params.theta, "sampler": params.sampler.value, "split": list(params.split),
        },
        "features": [f.m for f in fset],
        "periods": periods,
        "remainder_released": rel.remainder_released,
        "avg_l1_error": avg_l1_error(rel.series, series),
    })
    return 0


def _read_hierarchy(path):
    path = Path(path)
    try:
        spec = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigurationError(f"cannot read hierarchy spec {path}: {exc.strerror}") from None
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"hierarchy spec {path} is not valid YAML: {exc}") from None
    if not isinstance(spec, dict) or not isinstance(spec.get("nodes"), dict):
        raise ConfigurationError("hierarchy spec needs a 'nodes' mapping")
    children, leaves = {}, {}
    for name, node in spec["nodes"].items():
        name = str(name)
        if not NODE_NAME.match(name):
            raise ConfigurationError(f"node name {name!r} may only use letters, digits, '.', '_' and '-'")
        node = node or {}
        if not isinstance(node, dict):
            raise ConfigurationError(f"node {name!r}: expected a mapping with 'children' or 'series'")
        if node.get("children") and node.get("series"):
            raise ConfigurationError(f"node {name!r}: give children or a series file, not both")
        if node.get("children"):
            children[name] = [str(c) for c in node["children"]]
        elif node.get("series"):
            file = path.parent / str(node["series"])
            if not file.exists():
                raise IngestionError(f"node {name!r}: series file {file} does not exist")
            leaves[name] = read_series(file)
        else:
            raise ConfigurationError(f"node {name!r}: needs 'children' or 'series'")
    for parent, cs in children.items():
        for c in cs:
            if c not in spec["nodes"]:
                raise IngestionError(f"node {c!r} (child of {parent!r}) is not defined and has no series file")
    tree = build_tree(children, leaves)
    if "root" in spec and str(spec["root"]) != tree.root:
        raise ConfigurationError(f"spec names root {spec['root']!r} but the tree's root is {tree.root!r}")
    return tree


def cmd_release_hierarchical(args) -> int:
    cfg = apply_overrides(load_config(args.config), args)
    params = privacy_params(cfg)
    fset = feature_set(cfg)
    lam = lambda_weights(cfg, fset)
    tree = _read_hierarchy(args.input)
    rel = release_hierarchical(tree, params, fset, _noise(args), lam=lam)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    for n in tree.nodes:
        write_series(out / f"{n}.csv", rel.series[n])
    write_json(out / "metrics.json", {
        "seed": args.seed,
        "no_noise": bool(args.no_noise),
        "root": tree.root,
        "level_epsilon": rel.level_epsilon,
        "ledgers": rel.ledgers,
        "solver": rel.diagnostics,
        "max_inconsistency": max_inconsistency(tree, rel.series),
        "avg_l1_error": {n: avg_l1_error(rel.series[n], tree.series[n]) for n in tree.nodes},
    })
    return 0


def cmd_compare(args) -> int:
    cfg = apply_overrides(load_config(args.config), args)
    names = check_mechanisms(cfg["mechanisms"], MECHANISMS + ABLATIONS)
    ecfg = experiment_config(cfg)
    eps = cfg["epsilons"] if cfg.get("epsilons") else [cfg["epsilon"]]
    eps = list(_as_floats({"epsilons": eps}, "epsilons"))
    if any(e <= 0 for e in eps):
        raise _field_error("epsilons", "budgets must be positive")
    # fail on bad parameter combinations before any mechanism runs
    for e in eps:
        for n in names:
            if n not in ("laplace", "dft"):
                try:
                    _optstream_setup(n, e, ecfg)
                except OptStreamError as exc:
                    raise ConfigurationError(f"mechanism {n} at epsilon={e}: {exc}") from None
    series = read_series(args.input)
    rows = compare(series, names, eps, _as_int(cfg, "seeds", lo=1), NoiseSource(args.seed), ecfg)
    out = Path(args.output)
    write_rows(out, summarize(rows))
    write_rows(out.with_name(out.stem + ".runs.csv"), rows)
    return 0


def cmd_forecast(args) -> int:
    cfg = apply_overrides(load_config(args.config), args)
    name = cfg["mechanism"]
    check_mechanisms([name], MECHANISMS + ABLATIONS)
    ecfg = experiment_config(cfg)
    eps = _as_float(cfg, "epsilon", positive=True)
    horizon = ecfg.w if cfg.get("horizon") is None else _as_int(cfg, "horizon", lo=1)
    series = read_series(args.input)
    private = run_mechanism(name, series, eps, _noise(args), ecfg)
    res = forecast_from(series, private, _as_int(cfg, "train_days", lo=1) * ecfg.w, horizon)
    with open(args.output, "w", newline="") as fh:
        fh.write("t,history,private_history,forecast\n")
        for t, h, p in zip(series.index, series.values, private.values):
            fh.write(f"{int(t)},{FLOAT_FMT.format(h)},{FLOAT_FMT.format(p)},\n")
        for t, f in zip(res.forecast.index, res.forecast.values):
            fh.write(f"{int(t)},,,{FLOAT_FMT.format(f)}\n")
    m = res.model
    write_json(metrics_path(args.output), {
        "seed": args.seed,
        "no_noise": bool(args.no_noise),
        "mechanism": name,
        "epsilon": eps,
        "model": {"c": m.c, "phi": m.phi, "theta": m.theta_ma, "sigma2": m.sigma2},
        "avg_l1_error": avg_l1_error(private, series),
    })
    return 0


def cmd_bound_experiment(args) -> int:
    cfg = apply_overrides(load_config(args.config), args)
    report = error_bound_experiment(
        w=_as_int(cfg, "w", lo=2),
        epsilon=_as_float(cfg, "epsilon", positive=True),
        L=_as_float(cfg, "lipschitz", nonneg=True),
        seeds=_as_int(cfg, "seeds", lo=1),
        noise=NoiseSource(args.seed),
        periods=_as_int(cfg, "periods", lo=1),
        alpha=_as_float(cfg, "alpha", positive=True),
    )
    payload = report.as_dict()
    payload["per_seed"] = report.per_seed
    payload["seed"] = args.seed
    write_json(args.output, payload)
    return 0


def cmd_synth(args) -> int:
    """Write synthetic regional loads, or all twelve regions plus a hierarchy spec."""
    noise = NoiseSource(args.seed)
    regions = list(REGION_DAILY_MEANS) if args.region == "all" else [args.region]
    for r in regions:
        if r not in REGION_DAILY_MEANS:
            raise ConfigurationError(f"unknown region {r!r}; known: all, {', '.join(REGION_DAILY_MEANS)}")
    if args.region != "all":
        s = synth_load(SyntheticLoadSpec.for_region(REGION_DAILY_MEANS[r]), args.days, noise)
        write_series(args.output, s)
        return 0
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    nodes: Dict[str, Any] = {"france": {"children": regions}}
    for i, r in enumerate(regions):
        s = synth_load(SyntheticLoadSpec.for_region(REGION_DAILY_MEANS[r]), args.days, noise, stream_id=i)
        write_series(out / f"{r}.csv", s)
        nodes[r] = {"series": f"{r}.csv"}
    with open(out / "hierarchy.yaml", "w") as fh:
        yaml.safe_dump({"root": "france", "nodes": nodes}, fh, sort_keys=False)
    return 0


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="optstream", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_input=True):
        if needs_input:
            p.add_argument("--input", required=True, help="input CSV (t,value) or hierarchy spec")
        p.add_argument("--config", help="YAML/JSON config file")
        p.add_argument("--seed", type=int, default=0, help="the only source of randomness")
        p.add_argument("--output", required=True)
        p.add_argument("--epsilon", type=float, nargs="+", help="budget override (compare accepts several)")
        p.add_argument("--alpha", type=float)
        p.add_argument("--w", type=int)
        p.add_argument("--k", type=int)
        p.add_argument("--theta", type=float)
        return p

    p = common(sub.add_parser("release", help="release one stream"))
    p.add_argument("--no-noise", action="store_true", help="test mode: all noise is zero, no privacy")
    p.set_defaults(func=cmd_release)

    p = common(sub.add_parser("release-hierarchical", help="release a tree of streams consistently"))
    p.add_argument("--no-noise", action="store_true", help="test mode: all noise is zero, no privacy")
    p.set_defaults(func=cmd_release_hierarchical)

    p = common(sub.add_parser("compare", help="error of several mechanisms over seeds and budgets"))
    p.add_argument("--mechanisms", help=f"comma-separated; valid: {', '.join(MECHANISMS + ABLATIONS)}")
    p.add_argument("--seeds", type=int)
    p.set_defaults(func=cmd_compare)

    p = common(sub.add_parser("forecast", help="ARMA(1,1) forecast from a private history"))
    p.add_argument("--mechanisms", help="mechanism producing the private history")
    p.add_argument("--no-noise", action="store_true", help="test mode: all noise is zero, no privacy")
    p.set_defaults(func=cmd_forecast)

    p = common(sub.add_parser("bound-experiment", help="sampling error vs. Laplace on Lipschitz walks"), needs_input=False)
    p.add_argument("--seeds", type=int)
    p.set_defaults(func=cmd_bound_experiment)

    p = sub.add_parser("synth", help="write synthetic regional loads")
    p.add_argument("--region", default="all", help="region name, or 'all' for twelve leaves plus a hierarchy spec")
    p.add_argument("--days", type=int, default=28)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True, help="CSV path, or a directory for --region all")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except OptStreamError as exc:
        print(f"optstream {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"optstream {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
