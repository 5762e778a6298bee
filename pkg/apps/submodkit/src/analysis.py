"""
Function Analysis

Checkers for submodularity and monotonicity, curvature and the
submodularity ratio, semigradient (modular) bounds, Shapley values,
log-partition bounds and the brute-force optimizer used as ground truth by
the test suite.

Exhaustive routines work on a value table: ``table[bits]`` is f of the
subset whose characteristic bit-vector is ``bits``.
"""

import itertools
import math
from typing import Literal

import numpy as np
from loguru import logger
from pydantic import BaseModel, Field, computed_field
from scipy.special import logsumexp

from .config import get_settings, resolve_tolerance
from .core import ModularWeights, SetFunctionHandle, SubmodError, Subset
from .maximize import (
    CardinalityConstraint,
    InfeasibleError,
    KnapsackConstraint,
    Matroid,
)
from .minimize import PermutationChain, base_vertex

MAX_REPORTED_VIOLATIONS = 50


class AnalysisError(SubmodError):
    """Analysis requested outside its supported range."""
    pass


class CurvatureError(AnalysisError):
    """Curvature undefined because every element was pruned."""
    pass


def value_table(f: SetFunctionHandle, limit: int | None = None) -> np.ndarray:
    """
    All 2^n values of f indexed by subset bits.

    Raises:
        AnalysisError: If n exceeds ``limit`` (enumeration limit by default)
    """
    limit = limit or get_settings().enumeration_limit
    if f.size_n > limit:
        raise AnalysisError(f"exhaustive enumeration needs n <= {limit}, got {f.size_n}")
    return np.array(
        [f.evaluate(Subset(f.ground, bits)) for bits in range(1 << f.size_n)]
    )


def _indices(bits: int) -> list[int]:
    return [v for v in range(bits.bit_length()) if bits >> v & 1]


def _popcounts(n: int) -> np.ndarray:
    return np.array([bits.bit_count() for bits in range(1 << n)])


# ============================================================================
# Checkers
# ============================================================================


class Violation(BaseModel):
    """A replayable counterexample: witness sets, both sides and the deficit."""

    witness: dict[str, list[int] | list[float]]
    lhs: float
    rhs: float
    deficit: float


class CheckReport(BaseModel):
    check: str
    mode: Literal["exhaustive", "sampled"]
    violations: list[Violation] = Field(default_factory=list)
    violation_count: int = 0
    pairs_checked: int = 0

    @computed_field  # type: ignore[prop-decorator]
    @property
    def verdict(self) -> bool:
        return not self.violations

    def record(self, violation: Violation) -> None:
        self.violation_count += 1
        if len(self.violations) < MAX_REPORTED_VIOLATIONS:
            self.violations.append(violation)
            return
        weakest = min(range(len(self.violations)), key=lambda i: self.violations[i].deficit)
        if violation.deficit > self.violations[weakest].deficit:
            self.violations[weakest] = violation


def _exhaustive_limit(f: SetFunctionHandle) -> None:
    limit = get_settings().exhaustive_limit
    if f.size_n > limit:
        raise AnalysisError(
            f"exhaustive check needs n <= {limit}, got {f.size_n}; use sampled mode"
        )


def check_submodular(
    f: SetFunctionHandle,
    mode: Literal["exhaustive", "sampled"] = "exhaustive",
    seed: int = 0,
    samples: int | None = None,
    tolerance: float | None = None,
) -> CheckReport:
    """
    Four-points check f(x | S) >= f(x | S + w) for x != w outside S.

    Exhaustive mode covers every (S, x, w); sampled mode draws uniformly
    random triples from a seeded generator.

    Raises:
        AnalysisError: Exhaustive mode with n above the exhaustive limit
    """
    tol = resolve_tolerance(tolerance)
    report = CheckReport(check="submodular", mode=mode)
    n = f.size_n
    if n < 2:
        return report

    def violation(S: int, x: int, w: int, lhs: float, rhs: float) -> Violation:
        return Violation(
            witness={"S": _indices(S), "x": [x], "w": [w]},
            lhs=lhs,
            rhs=rhs,
            deficit=rhs - lhs,
        )

    if mode == "exhaustive":
        _exhaustive_limit(f)
        table = value_table(f)
        every = np.arange(1 << n)
        for x, w in itertools.combinations(range(n), 2):
            S = every[(every >> x & 1 == 0) & (every >> w & 1 == 0)]
            lhs = table[S | 1 << x] - table[S]
            rhs = table[S | 1 << x | 1 << w] - table[S | 1 << w]
            report.pairs_checked += len(S)
            for i in np.flatnonzero(rhs - lhs > tol):
                report.record(violation(int(S[i]), x, w, float(lhs[i]), float(rhs[i])))
        return report

    rng = np.random.default_rng(seed)
    for _ in range(samples or get_settings().sampled_checks):
        x, w = (int(v) for v in rng.choice(n, size=2, replace=False))
        mask = rng.random(n) < 0.5
        mask[[x, w]] = False
        S = Subset.from_mask(f.ground, mask)
        fS, fSx = f.evaluate(S), f.evaluate(S.add(x))
        fSw, fSxw = f.evaluate(S.add(w)), f.evaluate(S.add(x).add(w))
        lhs, rhs = fSx - fS, fSxw - fSw
        report.pairs_checked += 1
        if rhs - lhs > tol:
            report.record(violation(S.bits, x, w, lhs, rhs))
    return report


def check_submodular_classic(
    f: SetFunctionHandle, tolerance: float | None = None
) -> CheckReport:
    """f(X) + f(Y) >= f(X ∪ Y) + f(X ∩ Y) over all pairs (exhaustive only)."""
    tol = resolve_tolerance(tolerance)
    _exhaustive_limit(f)
    table = value_table(f)
    report = CheckReport(check="submodular-classic", mode="exhaustive")
    every = np.arange(1 << f.size_n)
    for X in range(1 << f.size_n):
        lhs = table[X] + table[every]
        rhs = table[X | every] + table[X & every]
        report.pairs_checked += len(every)
        for Y in np.flatnonzero(rhs - lhs > tol):
            report.record(
                Violation(
                    witness={"X": _indices(X), "Y": _indices(int(Y))},
                    lhs=float(lhs[Y]),
                    rhs=float(rhs[Y]),
                    deficit=float(rhs[Y] - lhs[Y]),
                )
            )
    return report


def check_monotone(
    f: SetFunctionHandle,
    mode: Literal["exhaustive", "sampled"] = "exhaustive",
    seed: int = 0,
    samples: int | None = None,
    tolerance: float | None = None,
) -> CheckReport:
    """Every single-element gain f(v | S) is >= -tolerance."""
    tol = resolve_tolerance(tolerance)
    report = CheckReport(check="monotone", mode=mode)
    n = f.size_n

    def violation(S: int, v: int, before: float, after: float) -> Violation:
        return Violation(
            witness={"S": _indices(S), "v": [v]},
            lhs=after,
            rhs=before,
            deficit=before - after,
        )

    if mode == "exhaustive":
        _exhaustive_limit(f)
        table = value_table(f)
        every = np.arange(1 << n)
        for v in range(n):
            S = every[every >> v & 1 == 0]
            before, after = table[S], table[S | 1 << v]
            report.pairs_checked += len(S)
            for i in np.flatnonzero(before - after > tol):
                report.record(violation(int(S[i]), v, float(before[i]), float(after[i])))
        return report

    rng = np.random.default_rng(seed)
    for _ in range(samples or get_settings().sampled_checks):
        v = int(rng.integers(n))
        mask = rng.random(n) < 0.5
        mask[v] = False
        S = Subset.from_mask(f.ground, mask)
        before, after = f.evaluate(S), f.evaluate(S.add(v))
        report.pairs_checked += 1
        if before - after > tol:
            report.record(violation(S.bits, v, before, after))
    return report


# ============================================================================
# Curvature and Submodularity Ratio
# ============================================================================


class CurvatureReport(BaseModel):
    kappa: float = Field(..., ge=0.0, le=1.0)
    argmin: int
    greedy_bound: float
    pruned: list[int] = Field(default_factory=list)


def curvature_bound(kappa: float) -> float:
    """(1/kappa)(1 - e^-kappa), equal to 1 in the kappa -> 0 limit."""
    if kappa <= 1e-12:
        return 1.0
    return -math.expm1(-kappa) / kappa


def bp_bound(kappa: float, kappa_g: float) -> float:
    """
    Greedy bound for f + g with f submodular (curvature kappa) and g
    supermodular (curvature kappa_g): (1/kappa)(1 - e^{-kappa (1 - kappa_g)}).
    """
    if kappa <= 1e-12:
        return 1.0 - kappa_g
    return -math.expm1(-kappa * (1.0 - kappa_g)) / kappa


def _singleton_and_tail_gains(f: SetFunctionHandle) -> tuple[np.ndarray, np.ndarray]:
    empty, full = f.evaluate(f.empty()), f.evaluate(f.full())
    head = np.array([f.evaluate(f.subset([v])) - empty for v in range(f.size_n)])
    tail = np.array(
        [full - f.evaluate(f.full().remove(v)) for v in range(f.size_n)]
    )
    return head, tail


def total_curvature(
    f: SetFunctionHandle, tolerance: float | None = None
) -> CurvatureReport:
    """
    kappa = 1 - min_v f(v | V - v) / f(v) over elements with f(v) > 0.

    Elements with f(v) = 0 are pruned and reported.

    Raises:
        CurvatureError: If every element is pruned
    """
    tol = resolve_tolerance(tolerance)
    head, tail = _singleton_and_tail_gains(f)
    pruned = [v for v in range(f.size_n) if head[v] <= tol]
    kept = [v for v in range(f.size_n) if head[v] > tol]
    if not kept:
        raise CurvatureError(f"every element of '{f.name}' has f(v) = 0")
    ratios = tail[kept] / head[kept]
    best = int(np.argmin(ratios))
    kappa = float(np.clip(1.0 - ratios[best], 0.0, 1.0))
    return CurvatureReport(
        kappa=kappa,
        argmin=kept[best],
        greedy_bound=curvature_bound(kappa),
        pruned=pruned,
    )


def supermodular_curvature(
    g: SetFunctionHandle, kappa: float = 1.0, tolerance: float | None = None
) -> CurvatureReport:
    """
    kappa^g = 1 - min_v g(v) / g(v | V - v) for monotone supermodular g.

    ``greedy_bound`` is the combined bound with a submodular part of
    curvature ``kappa`` (1 when unknown).

    Raises:
        CurvatureError: If g(v | V - v) = 0 for every v
    """
    tol = resolve_tolerance(tolerance)
    head, tail = _singleton_and_tail_gains(g)
    pruned = [v for v in range(g.size_n) if tail[v] <= tol]
    kept = [v for v in range(g.size_n) if tail[v] > tol]
    if not kept:
        raise CurvatureError(f"every element of '{g.name}' has g(v | V - v) = 0")
    ratios = head[kept] / tail[kept]
    best = int(np.argmin(ratios))
    kappa_g = float(np.clip(1.0 - ratios[best], 0.0, 1.0))
    return CurvatureReport(
        kappa=kappa_g,
        argmin=kept[best],
        greedy_bound=bp_bound(kappa, kappa_g),
        pruned=pruned,
    )


class SubmodularityRatio(BaseModel):
    gamma: float
    witness_x: list[int] = Field(default_factory=list)
    witness_y: list[int] = Field(default_factory=list)


def submodularity_ratio(
    h: SetFunctionHandle, tolerance: float | None = None, limit: int = 10
) -> SubmodularityRatio:
    """
    gamma = min over disjoint X, Y of sum_{v in Y} h(v | X) / h(Y | X).

    Pairs whose denominator is at most the tolerance are skipped. Exhaustive
    over 3^n pairs.
    """
    tol = resolve_tolerance(tolerance)
    table = value_table(h, limit)
    n, full = h.size_n, (1 << h.size_n) - 1
    result = SubmodularityRatio(gamma=1.0)
    for X in range(1 << n):
        outside = full & ~X
        gains = {v: table[X | 1 << v] - table[X] for v in _indices(outside)}
        Y = outside
        while Y:
            denominator = table[X | Y] - table[X]
            if denominator > tol:
                ratio = sum(gains[v] for v in _indices(Y)) / denominator
                if ratio < result.gamma - tol:
                    result = SubmodularityRatio(
                        gamma=float(ratio), witness_x=_indices(X), witness_y=_indices(Y)
                    )
            Y = (Y - 1) & outside
    return result


# ============================================================================
# Semigradients and Partition Functions
# ============================================================================


class SemigradientPair(BaseModel):
    """Modular bounds tight at ``anchor``: lower <= f <= min(uppers)."""

    anchor: list[int]
    union_upper: ModularWeights
    intersection_upper: ModularWeights
    lower: ModularWeights


def modular_lower_bound(
    f: SetFunctionHandle, A: Subset, rng: np.random.Generator
) -> ModularWeights:
    """Base-vertex subgradient from a random chain that lists A first."""
    inside = rng.permutation(A.index_array())
    outside = rng.permutation(A.complement().index_array())
    chain = PermutationChain(order=tuple(int(v) for v in np.concatenate([inside, outside])))
    vertex = base_vertex(f, chain)
    return ModularWeights(weights=vertex.point, constant=f.evaluate(f.empty()))


def semigradient_bounds(f: SetFunctionHandle, A: Subset, seed: int = 0) -> SemigradientPair:
    """
    Modular upper bounds of the union and intersection forms plus a modular
    lower bound, all tight at A.
    """
    f.check_subset(A)
    n = f.size_n
    fA = f.evaluate(A)
    full = f.full()
    fV = f.evaluate(full)
    f_empty = f.evaluate(f.empty())
    inside = A.mask()

    drop_from_anchor = np.zeros(n)
    drop_from_full = np.zeros(n)
    add_to_empty = np.zeros(n)
    add_to_anchor = np.zeros(n)
    for v in range(n):
        if inside[v]:
            drop_from_anchor[v] = fA - f.evaluate(A.remove(v))
            drop_from_full[v] = fV - f.evaluate(full.remove(v))
        else:
            add_to_empty[v] = f.evaluate(f.subset([v])) - f_empty
            add_to_anchor[v] = f.evaluate(A.add(v)) - fA

    intersection = np.where(inside, drop_from_anchor, add_to_empty)
    union = np.where(inside, drop_from_full, add_to_anchor)
    return SemigradientPair(
        anchor=A.indices(),
        intersection_upper=ModularWeights(
            weights=intersection, constant=fA - float(drop_from_anchor.sum())
        ),
        union_upper=ModularWeights(weights=union, constant=fA - float(drop_from_full.sum())),
        lower=modular_lower_bound(f, A, np.random.default_rng(seed)),
    )


class PartitionBounds(BaseModel):
    log_lower: float
    log_upper: float
    exact: float | None = None


def modular_log_partition(m: ModularWeights) -> float:
    """log sum_X exp(m(X)) = c + sum_v log(1 + e^{m(v)})."""
    return m.constant + float(np.logaddexp(0.0, m.as_array()).sum())


def log_partition_bounds(
    f: SetFunctionHandle, anchor: Subset, seed: int = 0, exact_limit: int = 15
) -> PartitionBounds:
    """Bounds on log Z = log sum_A exp(f(A)) from the semigradients at ``anchor``."""
    pair = semigradient_bounds(f, anchor, seed)
    bounds = PartitionBounds(
        log_lower=modular_log_partition(pair.lower),
        log_upper=min(
            modular_log_partition(pair.union_upper),
            modular_log_partition(pair.intersection_upper),
        ),
    )
    if f.size_n <= exact_limit:
        bounds.exact = float(logsumexp(value_table(f, exact_limit)))
    return bounds


# ============================================================================
# Shapley Values
# ============================================================================


class ShapleyReport(BaseModel):
    mode: Literal["exact", "sampled"]
    values: list[float]
    std_errors: list[float] | None = None
    samples: int | None = None
    seed: int | None = None


def shapley_value(
    f: SetFunctionHandle,
    mode: Literal["exact", "sampled"] = "exact",
    samples: int = 1000,
    seed: int = 0,
) -> ShapleyReport:
    """
    Average marginal contribution of each element over all orderings.

    Exact mode weights each f(v | S) by |S|! (n - |S| - 1)! / n! over the
    value table; sampled mode averages seeded random permutations and reports
    per-element standard errors.
    """
    n = f.size_n
    if mode == "exact":
        table = value_table(f, get_settings().exhaustive_limit)
        sizes = _popcounts(n)
        weights = np.array(
            [
                math.factorial(s) * math.factorial(n - s - 1) / math.factorial(n)
                for s in range(n)
            ]
        )
        every = np.arange(1 << n)
        values = []
        for v in range(n):
            S = every[every >> v & 1 == 0]
            values.append(float(weights[sizes[S]] @ (table[S | 1 << v] - table[S])))
        return ShapleyReport(mode="exact", values=values)

    rng = np.random.default_rng(seed)
    contributions = np.zeros((samples, n))
    empty_value = f.evaluate(f.empty())
    for row in range(samples):
        current, previous = f.empty(), empty_value
        for v in rng.permutation(n):
            current = current.add(int(v))
            value = f.evaluate(current)
            contributions[row, v] = value - previous
            previous = value
    errors = (
        contributions.std(axis=0, ddof=1) / math.sqrt(samples)
        if samples > 1
        else np.zeros(n)
    )
    logger.debug("shapley: {} permutations over {} elements", samples, n)
    return ShapleyReport(
        mode="sampled",
        values=contributions.mean(axis=0).tolist(),
        std_errors=errors.tolist(),
        samples=samples,
        seed=seed,
    )


# ============================================================================
# Brute Force
# ============================================================================


class BruteForceResult(BaseModel):
    subset: list[int]
    value: float


Constraint = CardinalityConstraint | KnapsackConstraint | Matroid | None


def brute_force_opt(
    f: SetFunctionHandle,
    constraint: Constraint = None,
    sense: Literal["max", "min"] = "max",
    exact_size: bool = False,
    tolerance: float | None = None,
) -> BruteForceResult:
    """
    Exact optimum by enumeration.

    Cardinality constraints enumerate sets of size <= k (exactly k with
    ``exact_size``). Ties go to the smallest characteristic vector read with
    element 0 as the most significant position.

    Raises:
        InfeasibleError: If no set satisfies the constraint
        AnalysisError: If the enumeration exceeds the enumeration limit
    """
    tol = resolve_tolerance(tolerance)
    n = f.size_n
    if isinstance(constraint, CardinalityConstraint):
        sizes = [constraint.k] if exact_size else list(range(constraint.k + 1))
        candidates = (
            sum(1 << v for v in combo)
            for size in sizes
            for combo in itertools.combinations(range(n), size)
        )
    else:
        limit = get_settings().enumeration_limit
        if n > limit:
            raise AnalysisError(f"brute force needs n <= {limit}, got {n}")
        candidates = iter(range(1 << n))

    if isinstance(constraint, KnapsackConstraint):
        costs = constraint.costs.as_array()

        def feasible(bits: int) -> bool:
            return float(costs[_indices(bits)].sum()) <= constraint.budget + tol
    elif constraint is not None and not isinstance(constraint, CardinalityConstraint):
        matroid = constraint

        def feasible(bits: int) -> bool:
            return matroid.is_independent(Subset(f.ground, bits))
    else:

        def feasible(bits: int) -> bool:
            return True

    def order_key(bits: int) -> int:
        return sum(1 << (n - 1 - v) for v in _indices(bits))

    sign = 1.0 if sense == "max" else -1.0
    best: tuple[float, int] | None = None
    for bits in candidates:
        if not feasible(bits):
            continue
        score = sign * f.evaluate(Subset(f.ground, bits))
        if (
            best is None
            or score > best[0] + tol
            or (score >= best[0] - tol and order_key(bits) < order_key(best[1]))
        ):
            best = (score, bits)
    if best is None:
        raise InfeasibleError("no feasible subset satisfies the constraint")
    return BruteForceResult(subset=_indices(best[1]), value=sign * best[0])
