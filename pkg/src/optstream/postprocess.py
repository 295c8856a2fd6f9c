"""Feature queries and the consistency-restoring quadratic program.

A *feature* partitions the period into blocks; its query returns the block
sums. Noisy answers to several nested features are reconciled by a weighted
least-squares fit under non-negativity. Because every feature is a coarsening
of the singleton partition, each coarse variable is the sum of its singleton
variables, and the program reduces to a non-negative least-squares problem in
the ``w`` per-step values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .core import ConfigurationError, InvalidParameterError, OptStreamError, Substream
from .noise import laplace_mechanism

KKT_TOL = 1e-6
MAX_ITER = 100_000


class SolverError(OptStreamError, RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (KKT residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True, eq=False)
class Feature:
    """A partition of ``range(w)`` (0-based positions) into disjoint blocks."""

    blocks: Tuple[Tuple[int, ...], ...]
    w: int

    def __post_init__(self):
        blocks = tuple(tuple(sorted(int(i) for i in b)) for b in self.blocks)
        if not blocks or any(len(b) == 0 for b in blocks):
            raise ConfigurationError("a feature needs at least one non-empty block")
        flat = [i for b in blocks for i in b]
        if sorted(flat) != list(range(self.w)):
            raise ConfigurationError(
                f"feature blocks must be disjoint and cover positions 0..{self.w - 1}"
            )
        labels = np.empty(self.w, dtype=np.intp)
        for j, b in enumerate(blocks):
            labels[list(b)] = j
        labels.setflags(write=False)
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_ranges(cls, ranges: Sequence[Tuple[int, int]], w: int) -> "Feature":
        """Build from half-open ``[start, stop)`` position ranges."""
        blocks = []
        for r in ranges:
            if len(r) != 2:
                raise ConfigurationError(f"feature range must be [start, stop), got {r!r}")
            start, stop = int(r[0]), int(r[1])
            if not 0 <= start < stop <= w:
                raise ConfigurationError(f"range [{start}, {stop}) outside [0, {w})")
            blocks.append(tuple(range(start, stop)))
        return cls(tuple(blocks), w)

    @classmethod
    def singletons(cls, w: int) -> "Feature":
        return cls(tuple((i,) for i in range(w)), w)

    @property
    def m(self) -> int:
        return len(self.blocks)

    @property
    def is_singletons(self) -> bool:
        return self.m == self.w

    def matrix(self) -> np.ndarray:
        A = np.zeros((self.m, self.w))
        A[self.labels, np.arange(self.w)] = 1.0
        return A

    def refines(self, other: "Feature") -> bool:
        """True if every block of ``other`` is a union of blocks of ``self``."""
        # self refines other iff each of self's blocks sits inside one block of other
        return all(len({other.labels[i] for i in b}) == 1 for b in self.blocks)

    def __eq__(self, other):
        return isinstance(other, Feature) and self.w == other.w and set(self.blocks) == set(other.blocks)

    def __hash__(self):
        return hash((self.w, frozenset(self.blocks)))


def feature_query(x, feature: Feature) -> np.ndarray:
    """Block sums of ``x`` over ``feature``."""
    x = np.asarray(x, dtype=float)
    if len(x) != feature.w:
        raise ConfigurationError(f"feature is defined for w={feature.w}, got {len(x)} values")
    return np.bincount(feature.labels, weights=x, minlength=feature.m)


@dataclass(frozen=True)
class FeatureSet:
    """Ordered features F_1..F_p with F_1 the singleton partition.

    The refinement order is derived from block containment. Features must form
    a chain: two features whose blocks partially overlap are rejected.
    """

    features: Tuple[Feature, ...]

    def __post_init__(self):
        feats = tuple(self.features)
        if not feats:
            raise ConfigurationError("a feature set needs at least the singleton feature")
        w = feats[0].w
        if any(f.w != w for f in feats):
            raise ConfigurationError("all features must share the same period length")
        if not feats[0].is_singletons:
            raise ConfigurationError("the first feature must be the singleton partition")
        order = []
        for a in range(len(feats)):
            for b in range(len(feats)):
                if a == b:
                    continue
                if feats[a].refines(feats[b]):
                    order.append((a, b))
                elif not feats[b].refines(feats[a]):
                    raise ConfigurationError(
                        f"features {a + 1} and {b + 1} partially overlap; "
                        "each pair must be nested"
                    )
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "order", tuple(order))

    @classmethod
    def build(cls, w: int, coarse: Sequence[Sequence[Tuple[int, int]]] = ()) -> "FeatureSet":
        """Singletons followed by features given as lists of ``[start, stop)`` ranges."""
        feats = [Feature.singletons(w)]
        feats.extend(Feature.from_ranges(r, w) for r in coarse)
        return cls(tuple(feats))

    @property
    def w(self) -> int:
        return self.features[0].w

    @property
    def p(self) -> int:
        return len(self.features)

    def __len__(self):
        return len(self.features)

    def __iter__(self):
        return iter(self.features)

    def default_weights(self) -> np.ndarray:
        return np.array([1.0 / f.m for f in self.features])


def day_profile_ranges(w: int = 48) -> List[List[Tuple[int, int]]]:
    """Four intra-day blocks (night, morning, afternoon, evening) and the whole period.

    For ``w = 48`` the boundaries are 14, 24 and 36; other period lengths get
    the same fractions of the day.
    """
    cuts = [0] + [int(round(c * w / 48)) for c in (14, 24, 36)] + [w]
    if len(set(cuts)) != len(cuts):
        raise ConfigurationError(f"w={w} is too short for the four-block day profile")
    quarters = [(cuts[i], cuts[i + 1]) for i in range(4)]
    return [quarters, [(0, w)]]


def day_profile(w: int = 48) -> FeatureSet:
    return FeatureSet.build(w, day_profile_ranges(w))


# ------------------------------------------------------------------ solver


@dataclass
class LsqInfo:
    objective: float
    kkt_residual: float
    iterations: int


def kkt_residual(y: np.ndarray, grad: np.ndarray) -> float:
    """Natural residual ``max |min(y, grad)|`` of the problem min f(y) s.t. y >= 0."""
    if y.size == 0:
        return 0.0
    return float(np.max(np.abs(np.minimum(y, grad))))


def nonneg_weighted_lsq(
    M: np.ndarray,
    targets: np.ndarray,
    weights: np.ndarray,
    x0: Optional[np.ndarray] = None,
    tol: float = KKT_TOL,
    max_iter: int = MAX_ITER,
    subspace: bool = True,
) -> Tuple[np.ndarray, LsqInfo]:
    """Minimise ``sum_r weights[r] * (M[r] @ y - targets[r])**2`` subject to ``y >= 0``.

    Projected gradient with step ``1/L``, where ``L`` bounds the largest
    eigenvalue of the Hessian by its largest absolute row sum. With
    ``subspace=True`` each gradient step is followed by an exact minimisation
    over the face it lands on (projected search back into the feasible set
    when that minimiser leaves it), which identifies the optimal active set in
    a handful of iterations. Raises :class:`SolverError` if the KKT residual
    is still above ``tol`` after ``max_iter`` iterations.
    """
    M = np.asarray(M, dtype=float)
    c = np.asarray(targets, dtype=float)
    wts = np.asarray(weights, dtype=float)
    if np.any(wts <= 0):
        raise InvalidParameterError("objective weights must be positive")
    MW = M.T * wts
    Q = 2.0 * MW @ M
    b = 2.0 * MW @ c
    const = float(wts @ (c * c))
    L = float(np.max(np.abs(Q).sum(axis=1)))

    def objective(y):
        return float(0.5 * y @ Q @ y - b @ y + const)

    y = np.zeros(M.shape[1]) if x0 is None else np.maximum(np.asarray(x0, dtype=float), 0.0)
    it = 0
    grad = Q @ y - b
    res = kkt_residual(y, grad)
    while res > tol and it < max_iter:
        it += 1
        y_pg = np.maximum(y - grad / L, 0.0)
        y = y_pg
        if subspace:
            free = y_pg > 0
            if free.any():
                z = np.zeros_like(y)
                z[free] = np.linalg.solve(Q[np.ix_(free, free)], b[free])
                if np.all(z >= 0):
                    y = z
                else:
                    f_pg = objective(y_pg)
                    step = 1.0
                    for _ in range(30):
                        trial = np.maximum(y_pg + step * (z - y_pg), 0.0)
                        if objective(trial) <= f_pg:
                            y = trial
                            break
                        step *= 0.5
        grad = Q @ y - b
        res = kkt_residual(y, grad)
    if res > tol:
        raise SolverError(f"no convergence after {it} iterations", res)
    # objective from residuals avoids cancellation in the expanded form
    r = M @ y - c
    return y, LsqInfo(objective=float(wts @ (r * r)), kkt_residual=res, iterations=it)


@dataclass
class QpSolution:
    """Reconciled values: ``x`` per step, and the implied block sums per feature."""

    x: np.ndarray
    feature_values: List[np.ndarray]
    noisy_answers: List[np.ndarray]
    objective: float
    kkt_residual: float
    iterations: int
    eps_spent: float = 0.0
    weights: np.ndarray = field(default_factory=lambda: np.empty(0))


def _weights_for(fset: FeatureSet, lam) -> np.ndarray:
    if lam is None:
        return fset.default_weights()
    lam = np.asarray(lam, dtype=float).reshape(-1)
    if lam.shape != (fset.p,):
        raise ConfigurationError(f"need one weight per feature ({fset.p}), got {lam.size}")
    if np.any(lam <= 0) or np.any(lam > 1):
        raise ConfigurationError("feature weights must lie in (0, 1]")
    return lam


def reconcile(
    answers: Sequence[np.ndarray],
    fset: FeatureSet,
    lam=None,
    tol: float = KKT_TOL,
    max_iter: int = MAX_ITER,
) -> QpSolution:
    """Solve the consistency program for given noisy answers (one array per feature).

    Uses no privacy budget; this is pure post-processing of ``answers``.
    """
    if len(answers) != fset.p:
        raise InvalidParameterError(f"expected {fset.p} answer vectors, got {len(answers)}")
    lam = _weights_for(fset, lam)
    answers = [np.asarray(a, dtype=float) for a in answers]
    for f, a in zip(fset, answers):
        if a.shape != (f.m,):
            raise InvalidParameterError(f"answer of length {a.size} for a feature with {f.m} blocks")
    mats = [f.matrix() for f in fset]
    M = np.vstack(mats)
    c = np.concatenate(answers)
    wts = np.concatenate([np.full(f.m, l) for f, l in zip(fset, lam)])
    x0 = np.maximum(answers[0], 0.0)
    y, info = nonneg_weighted_lsq(M, c, wts, x0=x0, tol=tol, max_iter=max_iter)
    return QpSolution(
        x=y,
        feature_values=[A @ y for A in mats],
        noisy_answers=answers,
        objective=info.objective,
        kkt_residual=info.kkt_residual,
        iterations=info.iterations,
        weights=lam,
    )


def post_process(
    x_tilde,
    x_true,
    fset: FeatureSet,
    eps_o: float,
    alpha: float,
    stream: Substream,
    lam=None,
) -> QpSolution:
    """Answer features 2..p privately, then reconcile them with ``x_tilde``.

    ``x_true`` is read only through the feature queries, each answered with
    the Laplace mechanism at budget ``eps_o / (p - 1)`` and sensitivity
    ``alpha``. With a single feature nothing is queried, no budget is spent and
    the result is ``x_tilde`` clipped at zero.
    """
    x_tilde = np.asarray(x_tilde, dtype=float)
    if len(x_tilde) != fset.w:
        raise InvalidParameterError(f"x_tilde has length {len(x_tilde)}, features expect {fset.w}")
    p = fset.p
    if p == 1:
        y = np.maximum(x_tilde, 0.0)
        grad = 2.0 / fset.w * (y - x_tilde)
        r = y - x_tilde
        return QpSolution(
            x=y,
            feature_values=[y],
            noisy_answers=[x_tilde],
            objective=float(r @ r / fset.w),
            kkt_residual=kkt_residual(y, grad),
            iterations=0,
            eps_spent=0.0,
            weights=_weights_for(fset, lam),
        )
    if not eps_o > 0:
        raise InvalidParameterError("post-processing with extra features needs eps_o > 0")
    per_query = eps_o / (p - 1)
    answers = [x_tilde]
    for f in fset.features[1:]:
        answers.append(laplace_mechanism(feature_query(x_true, f), alpha, per_query, stream))
    sol = reconcile(answers, fset, lam)
    sol.eps_spent = eps_o
    return sol


def weighted_norm(values: Sequence[np.ndarray], reference: Sequence[np.ndarray], lam) -> float:
    """The lambda-weighted L2 distance over all feature coordinates."""
    total = math.fsum(
        float(l * np.sum((np.asarray(v) - np.asarray(r)) ** 2))
        for v, r, l in zip(values, reference, lam)
    )
    return math.sqrt(total)
