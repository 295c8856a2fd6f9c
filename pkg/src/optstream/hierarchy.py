"""Releasing a tree of streams where every parent is the sum of its children.

Each level of the tree gets ``epsilon / h`` of the budget. Within a period
every node is sampled, perturbed and reconstructed on its own, its features
are answered privately, and one joint least-squares program over the leaf
values reconciles all nodes, so released parents equal the sum of released
children by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

from .baselines import laplace_baseline, release_stream_baseline
from .core import (
    BudgetLedger,
    ConfigurationError,
    IngestionError,
    NoiseSource,
    PrivacyParams,
    TimeSeries,
    make_periods,
)
from .noise import laplace_mechanism
from .pipeline import _check_features, sample_and_reconstruct
from .postprocess import FeatureSet, feature_query, nonneg_weighted_lsq

SUM_RTOL = 1e-9


@dataclass
class AggregationTree:
    root: str
    children: Dict[str, List[str]]
    series: Dict[str, TimeSeries]
    levels: List[List[str]]

    @property
    def height(self) -> int:
        return len(self.levels)

    @property
    def nodes(self) -> List[str]:
        return [n for level in self.levels for n in level]

    @property
    def leaves(self) -> List[str]:
        return [n for n in self.nodes if not self.children.get(n)]

    def leaf_set(self, node: str) -> List[str]:
        kids = self.children.get(node)
        if not kids:
            return [node]
        return [leaf for c in kids for leaf in self.leaf_set(c)]

    def internal_nodes(self) -> List[str]:
        return [n for n in self.nodes if self.children.get(n)]


def build_tree(
    children: Mapping[str, Sequence[str]],
    leaf_series: Mapping[str, TimeSeries],
    internal_series: Optional[Mapping[str, TimeSeries]] = None,
) -> AggregationTree:
    """Validate a rooted tree and compute every internal node's series as its children's sum.

    ``children`` maps each internal node to its children; nodes that appear
    only as children are leaves and need an entry in ``leaf_series``. Series
    supplied for internal nodes are checked against the computed sums.
    """
    kids = {str(k): [str(c) for c in v] for k, v in children.items() if v}
    nodes = set(kids) | {c for v in kids.values() for c in v} | set(leaf_series)
    parents: Dict[str, str] = {}
    for parent, cs in kids.items():
        if len(set(cs)) != len(cs):
            raise ConfigurationError(f"node {parent!r} lists a child twice")
        for c in cs:
            if c in parents:
                raise ConfigurationError(
                    f"node {c!r} has two parents ({parents[c]!r}, {parent!r}); aggregations must nest"
                )
            parents[c] = parent
    roots = [n for n in nodes if n not in parents]
    if len(roots) != 1:
        raise ConfigurationError(f"hierarchy must have exactly one root, found {sorted(roots)}")
    root = roots[0]

    levels: List[List[str]] = []
    seen = set()
    frontier = [root]
    while frontier:
        if any(n in seen for n in frontier):
            raise ConfigurationError("hierarchy contains a cycle")
        seen.update(frontier)
        levels.append(frontier)
        frontier = [c for n in frontier for c in kids.get(n, [])]
    if seen != nodes:
        raise ConfigurationError(f"nodes not reachable from root {root!r}: {sorted(nodes - seen)}")

    series: Dict[str, TimeSeries] = {}
    for leaf in (n for n in nodes if n not in kids):
        if leaf not in leaf_series:
            raise IngestionError(f"leaf {leaf!r} has no series")
        series[leaf] = leaf_series[leaf]
    lengths = {len(s) for s in series.values()}
    starts = {s.start_index for s in series.values()}
    if len(lengths) != 1 or len(starts) != 1:
        raise IngestionError("all leaf series must have the same length and start index")
    start = starts.pop()

    for level in reversed(levels):
        for n in level:
            if n in kids:
                total = np.sum([series[c].values for c in kids[n]], axis=0)
                series[n] = TimeSeries(total, start)
    for n, s in (internal_series or {}).items():
        if n not in kids:
            continue
        expected = series[n].values
        if len(s) != len(expected) or not np.allclose(s.values, expected, rtol=SUM_RTOL, atol=0):
            raise IngestionError(f"series of node {n!r} is not the sum of its children")
    return AggregationTree(root=root, children={n: kids.get(n, []) for n in nodes}, series=series, levels=levels)


@dataclass
class HierarchicalRelease:
    series: Dict[str, TimeSeries]
    level_epsilon: List[float]
    ledgers: List[dict] = field(default_factory=list)
    diagnostics: List[dict] = field(default_factory=list)


def _level_params(tree: AggregationTree, params: PrivacyParams, level_weights=None) -> List[PrivacyParams]:
    h = tree.height
    if level_weights is None:
        fractions = [1.0 / h] * h
    else:
        lw = np.asarray(level_weights, dtype=float)
        if lw.shape != (h,) or np.any(lw <= 0):
            raise ConfigurationError(f"need {h} positive level weights")
        fractions = list(lw / lw.sum())
    return [params.scaled(f) for f in fractions]


def release_hierarchical(
    tree: AggregationTree,
    params: PrivacyParams,
    features: FeatureSet,
    noise: NoiseSource,
    lam=None,
    level_weights=None,
) -> HierarchicalRelease:
    """Release every node of ``tree`` consistently with total budget ``params.epsilon`` per period."""
    level_params = _level_params(tree, params, level_weights)
    for lp in level_params:
        _check_features(lp, features)
    w = params.w
    node_level = {n: d for d, level in enumerate(tree.levels) for n in level}
    leaves = tree.leaves
    leaf_pos = {leaf: i for i, leaf in enumerate(leaves)}
    n_vars = len(leaves) * w
    lam_vec = features.default_weights() if lam is None else np.asarray(lam, dtype=float)

    # rows of the joint program: each node's feature blocks, expressed over leaf values
    node_maps = {}
    for n in tree.nodes:
        E = np.zeros((w, n_vars))
        for leaf in tree.leaf_set(n):
            j = leaf_pos[leaf]
            E[np.arange(w), j * w + np.arange(w)] = 1.0
        node_maps[n] = [f.matrix() @ E for f in features]
    M = np.vstack([A for n in tree.nodes for A in node_maps[n]])
    wts = np.concatenate([np.full(f.m, l) for _ in tree.nodes for f, l in zip(features, lam_vec)])

    split = {n: make_periods(tree.series[n], w) for n in tree.nodes}
    n_periods = len(split[tree.root].periods)
    out = {n: [] for n in tree.nodes}
    ledgers, diags = [], []
    for t in range(n_periods):
        ledger = BudgetLedger(params.epsilon)
        targets = []
        x0 = np.zeros(n_vars)
        for n in tree.nodes:
            lp = level_params[node_level[n]]
            x = split[n].periods[t].values
            _, x_tilde = sample_and_reconstruct(x, lp, noise, t, tag=f"{n}/")
            answers = [x_tilde]
            if features.p > 1:
                stream = noise.substream(t, f"{n}/postprocess")
                per_query = lp.eps_o / (features.p - 1)
                for f in features.features[1:]:
                    answers.append(laplace_mechanism(feature_query(x, f), lp.alpha, per_query, stream))
            targets.extend(answers)
            if n in leaf_pos:
                j = leaf_pos[n]
                x0[j * w:(j + 1) * w] = np.maximum(x_tilde, 0.0)
        # siblings within a level touch disjoint users, so a level costs its share once
        for d, lp in enumerate(level_params):
            ledger.charge(f"level{d}", lp.epsilon)
        ledger.close()
        y, info = nonneg_weighted_lsq(M, np.concatenate(targets), wts, x0=x0)
        for n in tree.nodes:
            E_rows = node_maps[n][0]
            out[n].append(E_rows @ y)
        ledgers.append(ledger.as_dict())
        diags.append({"solver_iterations": info.iterations, "kkt_residual": info.kkt_residual})

    rest = split[tree.root].remainder
    if rest is not None:
        # leaves alone take the full budget; parents are their sums
        leaf_vals = {
            leaf: laplace_baseline(
                split[leaf].remainder.values, params.epsilon, params.alpha,
                noise.substream(n_periods, f"{leaf}/remainder"),
            )
            for leaf in leaves
        }
        for n in tree.nodes:
            out[n].append(np.sum([leaf_vals[leaf] for leaf in tree.leaf_set(n)], axis=0))

    start = tree.series[tree.root].start_index
    released = {
        n: TimeSeries(np.concatenate(v) if v else np.empty(0), start) for n, v in out.items()
    }
    return HierarchicalRelease(
        series=released,
        level_epsilon=[lp.epsilon for lp in level_params],
        ledgers=ledgers,
        diagnostics=diags,
    )


def release_hierarchical_baseline(
    tree: AggregationTree,
    mechanism: str,
    epsilon: float,
    alpha: float,
    w: int,
    noise: NoiseSource,
    k: int = 10,
) -> Dict[str, TimeSeries]:
    """Release each node independently with a baseline at ``epsilon / h`` per level.

    Nothing ties parents to children, so the output is generally inconsistent.
    """
    eps_level = epsilon / tree.height
    return {
        n: release_stream_baseline(tree.series[n], mechanism, w, eps_level, alpha, noise, k=k, tag=f"{n}/")
        for n in tree.nodes
    }


def max_inconsistency(tree: AggregationTree, released: Mapping[str, TimeSeries]) -> float:
    """Largest absolute gap between a released parent and the sum of its released children."""
    worst = 0.0
    for n in tree.internal_nodes():
        total = np.sum([released[c].values for c in tree.children[n]], axis=0)
        worst = max(worst, float(np.max(np.abs(released[n].values - total))))
    return worst
