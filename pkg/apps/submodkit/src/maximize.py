"""
Submodular Maximization

Greedy algorithms under cardinality, knapsack and matroid constraints,
submodular set cover, randomized bidirectional greedy for non-monotone
objectives, the submodular welfare greedy and the reflection trick for
monotone non-increasing objectives. Every run returns its picks together with
an approximation certificate.

Tie-breaking is the same everywhere: the largest gain wins and gains within
the tolerance of the best are resolved by the lowest element index.
"""

import heapq
import itertools
import math
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Protocol, runtime_checkable

import numpy as np
from loguru import logger
from pydantic import BaseModel, Field, model_validator

from .config import resolve_tolerance
from .core import (
    DimensionError,
    ModularWeights,
    Reflect,
    SetFunctionHandle,
    SubmodError,
    Subset,
    derive_transform,
    warn_unless,
)


class ConstraintError(SubmodError):
    """Malformed constraint or parameter."""
    pass


class InfeasibleError(SubmodError):
    """No feasible solution exists for the requested problem."""
    pass


GREEDY_RATIO_LIMIT = 1 - 1 / math.e


# ============================================================================
# Constraints
# ============================================================================


class CardinalityConstraint(BaseModel):
    k: int = Field(..., ge=1, description="Maximum number of picks")

    def check(self, size_n: int) -> None:
        if self.k > size_n:
            raise ConstraintError(f"k={self.k} exceeds ground set size {size_n}")


class KnapsackConstraint(BaseModel):
    """Modular costs m(v) > 0 with budget b: m(X) <= b."""

    costs: ModularWeights
    budget: float = Field(..., gt=0)

    @model_validator(mode="after")
    def _check_costs(self) -> "KnapsackConstraint":
        if self.costs.constant != 0:
            raise ValueError("knapsack costs must have constant 0")
        if min(self.costs.weights) <= 0:
            raise ValueError("knapsack costs must be strictly positive")
        return self


@runtime_checkable
class Matroid(Protocol):
    """Independence oracle used by the matroid greedy."""

    def is_independent(self, X: Subset) -> bool: ...

    def rank_upper_bound(self) -> int: ...


class PartitionMatroidSpec(BaseModel):
    """
    Partition matroid: X is independent iff |X ∩ V_i| <= l_i for each block.
    """

    size_n: int = Field(..., ge=1)
    blocks: list[list[int]] = Field(..., min_length=1)
    limits: list[int]

    @model_validator(mode="after")
    def _check_partition(self) -> "PartitionMatroidSpec":
        if len(self.limits) != len(self.blocks):
            raise ValueError("one limit per block required")
        if any(limit < 0 for limit in self.limits):
            raise ValueError("block limits must be >= 0")
        seen: list[int] = [v for block in self.blocks for v in block]
        if any(not block for block in self.blocks):
            raise ValueError("blocks must be nonempty")
        if sorted(seen) != list(range(self.size_n)):
            raise ValueError("blocks must cover the ground set exactly once")
        return self

    def block_masks(self) -> list[int]:
        return [sum(1 << v for v in block) for block in self.blocks]

    def is_independent(self, X: Subset) -> bool:
        return all(
            (X.bits & mask).bit_count() <= limit
            for mask, limit in zip(self.block_masks(), self.limits)
        )

    def rank_upper_bound(self) -> int:
        return sum(min(limit, len(b)) for b, limit in zip(self.blocks, self.limits))


# ============================================================================
# Results
# ============================================================================


class Certificate(BaseModel):
    """Approximation claim attached to a run."""

    guarantee_ratio: float | None = Field(
        default=None, description="Ratio in (0, 1]; None when no guarantee applies"
    )
    guarantee_kind: str
    oracle_calls: int = 0
    seed: int | None = None
    details: dict[str, float] = Field(default_factory=dict)


class SelectionResult(BaseModel):
    """Ordered picks, per-step gains and the final value."""

    order: list[int]
    gains: list[float]
    value: float
    base_value: float = Field(description="f(∅)")
    certificate: Certificate

    def subset(self, f: SetFunctionHandle) -> Subset:
        return f.subset(self.order)


class WelfareResult(BaseModel):
    blocks: list[list[int]]
    block_values: list[float]
    value: float
    certificate: Certificate


# ============================================================================
# Shared Greedy Machinery
# ============================================================================


def _pick(scored: Sequence[tuple[float, int]], tolerance: float) -> tuple[float, int]:
    """Largest score; scores within tolerance of the best go to the lowest index."""
    best = max(score for score, _ in scored)
    return min(
        ((score, v) for score, v in scored if score >= best - tolerance),
        key=lambda item: item[1],
    )


def _chain_gains(
    f: SetFunctionHandle, order: Sequence[int]
) -> tuple[list[float], float, float]:
    """Gains along ``order``; returns (gains, final value, f(∅))."""
    current = f.empty()
    base = previous = f.evaluate(current)
    gains = []
    for v in order:
        current = current.add(v)
        value = f.evaluate(current)
        gains.append(value - previous)
        previous = value
    return gains, previous, base


def _evaluate_all(
    f: SetFunctionHandle, A: Subset, candidates: list[int], workers: int
) -> list[float]:
    if workers > 1 and len(candidates) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda v: f.evaluate(A.add(v)), candidates))
    return [f.evaluate(A.add(v)) for v in candidates]


def _naive_greedy(
    f: SetFunctionHandle,
    steps: int,
    feasible: Callable[[Subset, int], bool],
    tolerance: float,
    early_stop: bool,
    workers: int = 1,
    start: Subset | None = None,
    score: Callable[[int, float], float] | None = None,
) -> tuple[list[int], list[float], float]:
    """
    Plain greedy: each round evaluates every feasible candidate.

    Returns picks, gains and the final value. ``score`` maps (v, gain) to
    the quantity being maximized (the gain itself by default).
    """
    A = start if start is not None else f.empty()
    value = f.evaluate(A)
    order: list[int] = []
    gains: list[float] = []
    for _ in range(steps):
        candidates = [v for v in range(f.size_n) if v not in A and feasible(A, v)]
        if not candidates:
            break
        values = _evaluate_all(f, A, candidates, workers)
        trial = dict(zip(candidates, values))
        scored = [
            (score(v, fv - value) if score else fv - value, v)
            for v, fv in trial.items()
        ]
        _, v = _pick(scored, tolerance)
        gain = trial[v] - value
        if early_stop and gain <= tolerance:
            logger.debug("greedy stopped early: best gain {:.3g}", gain)
            break
        A = A.add(v)
        value = trial[v]
        order.append(v)
        gains.append(gain)
    return order, gains, value


def _lazy_greedy(
    f: SetFunctionHandle, steps: int, tolerance: float, early_stop: bool
) -> tuple[list[int], list[float], float]:
    """
    Lazy (accelerated) greedy with stale upper bounds in a max-heap.

    After the top bound is refreshed, every entry whose bound could still be
    within tolerance of the best is refreshed too, so the winner matches the
    plain greedy's (gain, lowest index) rule.
    """
    A = f.empty()
    value = f.evaluate(A)
    heap: list[tuple[float, int]] = []
    stamp: dict[int, int] = {}
    trial: dict[int, float] = {}
    for v in range(f.size_n):
        trial[v] = f.evaluate(A.add(v))
        stamp[v] = 0
        heap.append((-(trial[v] - value), v))
    heapq.heapify(heap)

    order: list[int] = []
    gains: list[float] = []
    for round_ in range(steps):
        if not heap:
            break
        while stamp[heap[0][1]] != round_:
            _, v = heapq.heappop(heap)
            trial[v] = f.evaluate(A.add(v))
            stamp[v] = round_
            heapq.heappush(heap, (-(trial[v] - value), v))

        best = -heap[0][0]
        pulled: list[tuple[float, int]] = []
        while heap and -heap[0][0] >= best - tolerance:
            _, v = heapq.heappop(heap)
            if stamp[v] != round_:
                trial[v] = f.evaluate(A.add(v))
                stamp[v] = round_
            gain = trial[v] - value
            pulled.append((gain, v))
            best = max(best, gain)

        gain, winner = _pick(pulled, tolerance)
        if early_stop and gain <= tolerance:
            logger.debug("lazy greedy stopped early: best gain {:.3g}", gain)
            break
        for g, v in pulled:
            if v != winner:
                heapq.heappush(heap, (-g, v))
        A = A.add(winner)
        value = trial[winner]
        order.append(winner)
        gains.append(gain)
    return order, gains, value


# ============================================================================
# Cardinality
# ============================================================================


def cardinality_ratio(k: int) -> float:
    return 1.0 - (1.0 - 1.0 / k) ** k


def greedy_cardinality(
    f: SetFunctionHandle,
    c: CardinalityConstraint,
    lazy: bool = True,
    tolerance: float | None = None,
    early_stop: bool = False,
    workers: int = 1,
) -> SelectionResult:
    """
    Greedy maximization of f subject to |X| <= k.

    Args:
        f: Objective; the guarantee needs it monotone (warning otherwise)
        c: Cardinality constraint
        lazy: Use the priority-queue variant (same picks as the plain greedy)
        tolerance: Tie tolerance (settings default)
        early_stop: Stop when the best gain is <= tolerance
        workers: Threads evaluating candidates in plain greedy rounds

    Returns:
        SelectionResult with ratio 1 - (1 - 1/k)^k when f claims monotone

    Raises:
        ConstraintError: If k exceeds the ground set size
    """
    tol = resolve_tolerance(tolerance)
    c.check(f.size_n)
    warn_unless(
        f.flags.claims_monotone,
        f"'{f.name}' does not claim monotonicity; greedy carries no guarantee",
    )
    start_calls = f.eval_count
    base = f.evaluate(f.empty())
    if lazy:
        order, gains, value = _lazy_greedy(f, c.k, tol, early_stop)
    else:
        order, gains, value = _naive_greedy(
            f, c.k, lambda A, v: True, tol, early_stop, workers
        )
    ratio = cardinality_ratio(c.k) if f.flags.claims_monotone else None
    return SelectionResult(
        order=order,
        gains=gains,
        value=value,
        base_value=base,
        certificate=Certificate(
            guarantee_ratio=ratio,
            guarantee_kind="cardinality-greedy" if ratio else "none",
            oracle_calls=f.eval_count - start_calls,
            details={"k": float(c.k)},
        ),
    )


# ============================================================================
# Knapsack
# ============================================================================


def _knapsack_sweep(
    f: SetFunctionHandle,
    costs: np.ndarray,
    budget: float,
    tolerance: float,
    start: Subset | None = None,
) -> tuple[list[int], float]:
    spent = float(costs[list(start)].sum()) if start is not None else 0.0

    def fits(A: Subset, v: int) -> bool:
        return float(costs[list(A)].sum()) + costs[v] <= budget + tolerance

    order, _, value = _naive_greedy(
        f,
        f.size_n,
        fits,
        tolerance,
        early_stop=False,
        start=start,
        score=lambda v, gain: gain / costs[v],
    )
    logger.debug("knapsack sweep spent {:.4g} of {:.4g}", spent, budget)
    prefix = list(start) if start is not None else []
    return prefix + order, value


def greedy_knapsack(
    f: SetFunctionHandle,
    kc: KnapsackConstraint,
    tolerance: float | None = None,
    enumeration_depth: int = 0,
) -> SelectionResult:
    """
    Cost-scaled greedy for max f(X) subject to m(X) <= b.

    The default returns the better of the benefit/cost sweep and the best
    feasible singleton, certified 0.5 * (1 - 1/e). With enumeration_depth >= 3
    every feasible set of up to three elements seeds a sweep, certified
    1 - 1/e at O(n^4) oracle calls. Depths 1 and 2 run the same enumeration
    next to the default pair and keep its 0.5 * (1 - 1/e) certificate.

    Raises:
        ConstraintError: If enumeration_depth is negative
        DimensionError: If the cost vector does not match the ground set
        InfeasibleError: If no singleton fits the budget
    """
    tol = resolve_tolerance(tolerance)
    if enumeration_depth < 0:
        raise ConstraintError(f"enumeration depth must be >= 0, got {enumeration_depth}")
    costs = kc.costs.as_array()
    if costs.shape[0] != f.size_n:
        raise DimensionError(
            f"{costs.shape[0]} costs for a ground set of size {f.size_n}"
        )
    feasible = [v for v in range(f.size_n) if costs[v] <= kc.budget + tol]
    if not feasible:
        raise InfeasibleError(
            f"no element fits budget {kc.budget} (cheapest costs {costs.min()})"
        )
    warn_unless(f.flags.claims_monotone, f"'{f.name}' does not claim monotonicity")
    start_calls = f.eval_count

    if enumeration_depth >= 3:
        order, kind, ratio = _partial_enumeration(
            f, costs, kc.budget, tol, enumeration_depth
        ), "partial-enumeration", GREEDY_RATIO_LIMIT
    else:
        sweep, sweep_value = _knapsack_sweep(f, costs, kc.budget, tol)
        singles = [(f.evaluate(f.subset([v])), v) for v in feasible]
        single_value, single = _pick(singles, tol)
        if sweep_value >= single_value - tol:
            order, best = sweep, sweep_value
        else:
            order, best = [single], single_value
        kind, ratio = "ratio-greedy+singleton", 0.5 * GREEDY_RATIO_LIMIT
        if enumeration_depth > 0:
            shallow = _partial_enumeration(f, costs, kc.budget, tol, enumeration_depth)
            if f.evaluate(f.subset(shallow)) > best + tol:
                order = shallow
            kind = "shallow-enumeration+singleton"

    gains, value, base = _chain_gains(f, order)
    return SelectionResult(
        order=order,
        gains=gains,
        value=value,
        base_value=base,
        certificate=Certificate(
            guarantee_ratio=ratio if f.flags.claims_monotone else None,
            guarantee_kind=kind,
            oracle_calls=f.eval_count - start_calls,
            details={
                "budget": kc.budget,
                "cost": float(costs[order].sum()) if order else 0.0,
            },
        ),
    )


def _partial_enumeration(
    f: SetFunctionHandle, costs: np.ndarray, budget: float, tol: float, depth: int
) -> list[int]:
    best_order: list[int] = []
    best_value = f.evaluate(f.empty())
    for size in range(1, depth + 1):
        for seed in itertools.combinations(range(f.size_n), size):
            if costs[list(seed)].sum() > budget + tol:
                continue
            if size < depth:
                order, value = list(seed), f.evaluate(f.subset(seed))
            else:
                order, value = _knapsack_sweep(f, costs, budget, tol, f.subset(seed))
            if value > best_value + tol:
                best_order, best_value = order, value
    return best_order


# ============================================================================
# Matroids
# ============================================================================


def greedy_matroid(
    f: SetFunctionHandle, matroid: Matroid, tolerance: float | None = None
) -> SelectionResult:
    """Greedy over independent sets: skip elements that break independence."""
    tol = resolve_tolerance(tolerance)
    warn_unless(f.flags.claims_monotone, f"'{f.name}' does not claim monotonicity")
    start_calls = f.eval_count
    base = f.evaluate(f.empty())
    order, gains, value = _naive_greedy(
        f,
        matroid.rank_upper_bound(),
        lambda A, v: matroid.is_independent(A.add(v)),
        tol,
        early_stop=False,
    )
    return SelectionResult(
        order=order,
        gains=gains,
        value=value,
        base_value=base,
        certificate=Certificate(
            guarantee_ratio=0.5 if f.flags.claims_monotone else None,
            guarantee_kind="matroid-greedy",
            oracle_calls=f.eval_count - start_calls,
        ),
    )


def greedy_partition_matroid(
    f: SetFunctionHandle, pm: PartitionMatroidSpec, tolerance: float | None = None
) -> SelectionResult:
    """
    Greedy under a partition matroid, certified 1/2 for monotone f.

    Raises:
        ConstraintError: If the partition does not match the ground set
    """
    if pm.size_n != f.size_n:
        raise ConstraintError(
            f"partition over {pm.size_n} elements, ground set has {f.size_n}"
        )
    return greedy_matroid(f, pm, tolerance)


# ============================================================================
# Submodular Set Cover
# ============================================================================


def submodular_set_cover(
    f: SetFunctionHandle, alpha: float, tolerance: float | None = None
) -> SelectionResult:
    """
    Smallest set with f(X) >= alpha, greedily.

    The certificate carries Wolsey's factor 1 + ln(f(V) / (f(V) - f(X_{i-1})))
    computed from the run: |X| <= factor * |X*|.

    Raises:
        InfeasibleError: If alpha > f(V)
    """
    tol = resolve_tolerance(tolerance)
    warn_unless(
        f.flags.claims_monotone and f.flags.claims_normalized,
        f"'{f.name}' does not claim to be a polymatroid",
    )
    start_calls = f.eval_count
    full_value = f.evaluate(f.full())
    if alpha > full_value + tol:
        raise InfeasibleError(f"alpha={alpha} exceeds f(V)={full_value}")

    A = f.empty()
    base = value = previous = f.evaluate(A)
    order: list[int] = []
    gains: list[float] = []
    while value < alpha - tol:
        candidates = [v for v in range(f.size_n) if v not in A]
        trial = {v: f.evaluate(A.add(v)) for v in candidates}
        gain, v = _pick([(fv - value, v) for v, fv in trial.items()], tol)
        if gain <= tol:
            raise InfeasibleError(
                f"greedy stalled at f={value:.6g} below alpha={alpha}"
            )
        previous = value
        A, value = A.add(v), trial[v]
        order.append(v)
        gains.append(gain)

    if order and full_value - previous > 0:
        factor = 1.0 + math.log(full_value / (full_value - previous))
    else:
        factor = 1.0
    return SelectionResult(
        order=order,
        gains=gains,
        value=value,
        base_value=base,
        certificate=Certificate(
            guarantee_ratio=1.0 / factor,
            guarantee_kind="wolsey-set-cover",
            oracle_calls=f.eval_count - start_calls,
            details={"wolsey_factor": factor, "alpha": alpha},
        ),
    )


# ============================================================================
# Non-Monotone and Structured Problems
# ============================================================================


def random_greedy_unconstrained(f: SetFunctionHandle, seed: int) -> SelectionResult:
    """
    Randomized bidirectional greedy for unconstrained maximization.

    Elements are visited in a seeded random order; with a = f(v | X) and
    b = f(V' - v) - f(V') for the shrinking set V', v joins X with
    probability a+ / (a+ + b+) (1/2 when both are zero). The expected value
    is at least half the optimum for submodular f.
    """
    rng = np.random.default_rng(seed)
    start_calls = f.eval_count
    X, Y = f.empty(), f.full()
    base = fX = f.evaluate(X)
    fY = f.evaluate(Y)
    order: list[int] = []
    gains: list[float] = []
    for v in rng.permutation(f.size_n):
        v = int(v)
        fXv = f.evaluate(X.add(v))
        fYv = f.evaluate(Y.remove(v))
        a, b = fXv - fX, fYv - fY
        a_plus, b_plus = max(a, 0.0), max(b, 0.0)
        p = 0.5 if a_plus + b_plus == 0 else a_plus / (a_plus + b_plus)
        if rng.random() < p:
            X, fX = X.add(v), fXv
            order.append(v)
            gains.append(a)
        else:
            Y, fY = Y.remove(v), fYv
    return SelectionResult(
        order=order,
        gains=gains,
        value=fX,
        base_value=base,
        certificate=Certificate(
            guarantee_ratio=0.5,
            guarantee_kind="bidirectional-greedy-expected",
            oracle_calls=f.eval_count - start_calls,
            seed=seed,
        ),
    )


def welfare_partition_greedy(
    fs: Sequence[SetFunctionHandle],
    m_blocks: int,
    tolerance: float | None = None,
) -> WelfareResult:
    """
    Submodular welfare: assign each element to the block with the largest
    marginal gain (ties to the lowest block index).

    A single handle in ``fs`` is shared by all blocks.

    Raises:
        ConstraintError: If m_blocks < 1 or ``fs`` has the wrong length
    """
    tol = resolve_tolerance(tolerance)
    if m_blocks < 1:
        raise ConstraintError(f"m_blocks must be >= 1, got {m_blocks}")
    if len(fs) == 1:
        valuations = list(fs) * m_blocks
    elif len(fs) == m_blocks:
        valuations = list(fs)
    else:
        raise ConstraintError(f"need 1 or {m_blocks} valuations, got {len(fs)}")
    ground = valuations[0].ground
    for f in valuations:
        if f.ground != ground:
            raise DimensionError("welfare valuations must share a ground set")
        warn_unless(
            f.flags.claims_monotone and f.flags.claims_normalized,
            f"'{f.name}' does not claim to be a polymatroid",
        )

    start_calls = sum(f.eval_count for f in set(valuations))
    blocks = [Subset.empty(ground) for _ in range(m_blocks)]
    values = [f.evaluate(block) for f, block in zip(valuations, blocks)]
    for v in range(ground.size_n):
        trial = [f.evaluate(block.add(v)) for f, block in zip(valuations, blocks)]
        _, j = _pick([(t - values[j], j) for j, t in enumerate(trial)], tol)
        blocks[j] = blocks[j].add(v)
        values[j] = trial[j]
    calls = sum(f.eval_count for f in set(valuations)) - start_calls
    return WelfareResult(
        blocks=[b.indices() for b in blocks],
        block_values=values,
        value=float(sum(values)),
        certificate=Certificate(
            guarantee_ratio=0.5, guarantee_kind="welfare-greedy", oracle_calls=calls
        ),
    )


def maximize_monotone_decreasing(
    f: SetFunctionHandle, k_prime: int, lazy: bool = True
) -> SelectionResult:
    """
    Maximize a monotone non-increasing submodular f over sets of size k'.

    Runs greedy with k = n - k' on g(X) = f(V \\ X), which is monotone
    non-decreasing, and returns the complement; g's guarantee transfers.

    Raises:
        ConstraintError: If k' is negative or exceeds n
    """
    n = f.size_n
    if not 0 <= k_prime <= n:
        raise ConstraintError(f"k'={k_prime} must lie in [0, {n}]")
    start_calls = f.eval_count
    details: dict[str, Any] = {"k_prime": float(k_prime)}
    if k_prime == n:
        order = list(range(n))
        ratio: float | None = 1.0
    else:
        g = derive_transform(f, Reflect()).with_flags(claims_monotone=True)
        picked = greedy_cardinality(g, CardinalityConstraint(k=n - k_prime), lazy)
        removed = set(picked.order)
        order = [v for v in range(n) if v not in removed]
        ratio = picked.certificate.guarantee_ratio
        details["reflected_value"] = picked.value
    gains, value, base = _chain_gains(f, order)
    return SelectionResult(
        order=order,
        gains=gains,
        value=value,
        base_value=base,
        certificate=Certificate(
            guarantee_ratio=ratio,
            guarantee_kind="reflected-greedy",
            oracle_calls=f.eval_count - start_calls,
            details=details,
        ),
    )
