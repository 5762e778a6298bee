"""
Submodular Minimization

The Lovász extension and base-polytope vertices, Wolfe's min-norm-point
method for unconstrained minimization, Queyranne's pendant-pair algorithm for
symmetric functions and the modular-lower-bound iteration for differences of
submodular functions.
"""

from collections.abc import Sequence

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .config import get_settings, resolve_tolerance
from .core import (
    DimensionError,
    EvaluationCache,
    Mixture,
    ModularWeights,
    SetFunctionHandle,
    SubmodError,
    Subset,
    derive_transform,
    modular_handle,
    warn_unless,
)

# Barycentric coefficients at or below this are dropped from the active set.
COEFFICIENT_FLOOR = 1e-10


class MinimizationError(SubmodError):
    """Minimization could not run on the given input."""
    pass


class SymmetryError(MinimizationError):
    """Function handed to a symmetric minimizer is not symmetric."""
    pass


class MinimizerCertificate(BaseModel):
    """Minimizing set, its value and the evidence behind it."""

    min_set: list[int]
    min_value: float
    norm_point: list[float] | None = Field(
        default=None, description="x* from the min-norm-point method"
    )
    duality_gap: float | None = Field(
        default=None, description="f(min_set) - sum_v min(x*_v, 0)"
    )
    iterations: int = 0
    oracle_calls: int = 0

    def subset(self, f: SetFunctionHandle) -> Subset:
        return f.subset(self.min_set)


class NonConvergenceError(MinimizationError):
    """Iteration cap reached; ``certificate`` holds the best set found."""

    def __init__(self, message: str, certificate: MinimizerCertificate):
        super().__init__(message)
        self.certificate = certificate


# ============================================================================
# Chains, Lovász Extension, Base Vertices
# ============================================================================


class PermutationChain(BaseModel):
    """Permutation sigma with prefix sets S_0 = ∅ ⊂ S_1 ⊂ ... ⊂ S_n = V."""

    model_config = ConfigDict(frozen=True)

    order: tuple[int, ...]

    @field_validator("order")
    @classmethod
    def _check_bijection(cls, order: tuple[int, ...]) -> tuple[int, ...]:
        if sorted(order) != list(range(len(order))):
            raise ValueError("chain order must be a permutation of 0..n-1")
        return order

    @classmethod
    def descending(cls, x: np.ndarray) -> "PermutationChain":
        """Sort by x descending; ties keep index order."""
        return cls(order=tuple(int(v) for v in np.argsort(-x, kind="stable")))

    @classmethod
    def ascending(cls, x: np.ndarray) -> "PermutationChain":
        return cls(order=tuple(int(v) for v in np.argsort(x, kind="stable")))

    @property
    def size_n(self) -> int:
        return len(self.order)

    def prefix_bits(self) -> list[int]:
        """Bitmasks of S_0, ..., S_n."""
        bits, out = 0, [0]
        for v in self.order:
            bits |= 1 << v
            out.append(bits)
        return out


class BasePolytopeVertex(BaseModel):
    """Greedy vertex y(sigma_i) = f(S_i) - f(S_{i-1}) of the base polytope."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    point: np.ndarray
    generating_order: PermutationChain


def _check_chain(f: SetFunctionHandle, chain: PermutationChain) -> None:
    if chain.size_n != f.size_n:
        raise DimensionError(
            f"chain over {chain.size_n} elements, ground set has {f.size_n}"
        )


def lovasz_extension(
    f: SetFunctionHandle, x: Sequence[float] | np.ndarray
) -> tuple[float, np.ndarray, PermutationChain]:
    """
    Evaluate the Lovász extension at x.

    f̂(x) = x_{σ_n} f(V) + sum_{i<n} (x_{σ_i} - x_{σ_{i+1}}) f(S_i) with σ
    sorting x in descending order. Takes n oracle calls.

    Returns:
        (value, lambdas, chain) where lambdas[i-1] multiplies f(S_i)

    Raises:
        DimensionError: If len(x) != n
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (f.size_n,):
        raise DimensionError(f"x has shape {x.shape}, expected ({f.size_n},)")
    chain = PermutationChain.descending(x)
    sorted_x = x[list(chain.order)]
    lambdas = np.append(sorted_x[:-1] - sorted_x[1:], sorted_x[-1])
    values = np.array(
        [f.evaluate(Subset(f.ground, bits)) for bits in chain.prefix_bits()[1:]]
    )
    return float(lambdas @ values), lambdas, chain


def base_vertex(f: SetFunctionHandle, chain: PermutationChain) -> BasePolytopeVertex:
    """
    Vertex of B_f generated by ``chain``.

    For normalized f every prefix is tight: y(S_i) = f(S_i), and
    <x, y> = f̂(x) when the chain sorts x in descending order.
    """
    _check_chain(f, chain)
    values = [f.evaluate(Subset(f.ground, bits)) for bits in chain.prefix_bits()]
    y = np.empty(f.size_n)
    y[list(chain.order)] = np.diff(values)
    return BasePolytopeVertex(point=y, generating_order=chain)


# ============================================================================
# Min-Norm Point
# ============================================================================


def _affine_minimizer(S: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Min-norm point of the affine hull of the rows of S and its coefficients."""
    m = S.shape[0]
    system = np.zeros((m + 1, m + 1))
    system[0, 1:] = 1.0
    system[1:, 0] = 1.0
    system[1:, 1:] = S @ S.T
    rhs = np.zeros(m + 1)
    rhs[0] = 1.0
    solution = np.linalg.lstsq(system, rhs, rcond=None)[0]
    coefficients = solution[1:]
    return coefficients, coefficients @ S


def _best_level_set(
    values: list[tuple[float, int]], tolerance: float
) -> tuple[float, int]:
    """Lowest value; ties go to the smaller set, then the lexicographically smaller."""
    best = min(value for value, _ in values)
    ties = [(value, bits) for value, bits in values if value <= best + tolerance]
    return min(
        ties,
        key=lambda item: (item[1].bit_count(), _bits_to_indices(item[1])),
    )


def _bits_to_indices(bits: int) -> list[int]:
    return [v for v in range(bits.bit_length()) if bits >> v & 1]


def min_norm_point(
    f: SetFunctionHandle,
    tolerance: float | None = None,
    max_iterations: int | None = None,
) -> MinimizerCertificate:
    """
    Minimize f by Wolfe's min-norm-point method over the base polytope.

    The linear-minimization oracle is ``base_vertex`` along the chain that
    sorts x ascending. Non-normalized f is shifted by f(∅) internally. The
    minimizer is read off the level sets of x*: {x* < 0}, {x* <= thr} and
    every prefix of the ascending chain are evaluated and the best wins.

    Args:
        f: Submodular function
        tolerance: Wolfe gap x.x - x.q at which to stop (settings default)
        max_iterations: Major-cycle cap, default factor * n^2 from settings

    Raises:
        NonConvergenceError: Cap reached; carries the best-so-far certificate
    """
    tol = resolve_tolerance(tolerance)
    n = f.size_n
    cap = max_iterations or get_settings().mnp_iteration_factor * n * n
    start_calls = f.eval_count
    cache = EvaluationCache()
    ground = f.ground
    offset = cache.value(f, Subset.empty(ground))
    if not f.flags.claims_normalized and offset != 0.0:
        logger.debug("min-norm point: shifting '{}' by f(∅)={:.6g}", f.name, offset)

    def shifted(bits: int) -> float:
        return cache.value(f, Subset(ground, bits)) - offset

    def linear_oracle(x: np.ndarray) -> np.ndarray:
        chain = PermutationChain.ascending(x)
        values = [shifted(bits) for bits in chain.prefix_bits()]
        y = np.empty(n)
        y[list(chain.order)] = np.diff(values)
        return y

    x = linear_oracle(np.zeros(n))
    S = x.reshape(1, n)
    a = np.ones(1)
    converged = False
    iterations = 0
    while iterations < cap:
        iterations += 1
        q = linear_oracle(x)
        scale = max(float(q @ q), float(np.max(np.einsum("ij,ij->i", S, S))), 1.0)
        if float(x @ x - x @ q) <= max(tol, 1e-12 * scale):
            converged = True
            break
        if np.any(np.all(np.abs(S - q) < COEFFICIENT_FLOOR, axis=1)):
            converged = True
            break
        S = np.vstack((S, q))
        a = np.append(a, 0.0)

        while True:
            b, y = _affine_minimizer(S)
            if np.all(b >= -COEFFICIENT_FLOOR):
                a, x = np.clip(b, 0.0, None), y
                break
            moving = a - b > COEFFICIENT_FLOOR
            theta = float(np.min(a[moving] / (a - b)[moving]))
            a = theta * b + (1 - theta) * a
            keep = a > COEFFICIENT_FLOOR
            S, a = S[keep], a[keep] / a[keep].sum()
            x = a @ S

        if S.shape[0] > n + 1:
            keep = np.argsort(-a, kind="stable")[: n + 1]
            S, a = S[np.sort(keep)], a[np.sort(keep)]
            a /= a.sum()
            x = a @ S
        logger.debug("min-norm point cycle {}: |x|^2={:.6g}", iterations, x @ x)

    threshold = max(tol, 1e-9)
    chain = PermutationChain.ascending(x)
    candidates = set(chain.prefix_bits())
    candidates.add(sum(1 << v for v in range(n) if x[v] < -threshold))
    candidates.add(sum(1 << v for v in range(n) if x[v] <= threshold))
    value, bits = _best_level_set([(shifted(b), b) for b in sorted(candidates)], tol)

    certificate = MinimizerCertificate(
        min_set=_bits_to_indices(bits),
        min_value=value + offset,
        norm_point=[float(v) for v in x],
        duality_gap=value - float(np.minimum(x, 0.0).sum()),
        iterations=iterations,
        oracle_calls=f.eval_count - start_calls,
    )
    if not converged:
        raise NonConvergenceError(
            f"min-norm point did not converge in {cap} major cycles", certificate
        )
    return certificate


# ============================================================================
# Symmetric Minimization
# ============================================================================


def verify_symmetry(
    f: SetFunctionHandle,
    samples: int | None = None,
    seed: int = 0,
    tolerance: float | None = None,
) -> None:
    """
    Check f(A) = f(V \\ A) on random subsets.

    Raises:
        SymmetryError: Naming the first violating subset
    """
    tol = resolve_tolerance(tolerance)
    rng = np.random.default_rng(seed)
    for _ in range(samples or get_settings().symmetry_samples):
        mask = rng.random(f.size_n) < 0.5
        A = Subset.from_mask(f.ground, mask)
        forward, backward = f.evaluate(A), f.evaluate(A.complement())
        if abs(forward - backward) > tol * max(1.0, abs(forward)):
            raise SymmetryError(
                f"'{f.name}' is not symmetric: f({A.indices()})={forward:.9g}, "
                f"f(complement)={backward:.9g}"
            )


def queyranne_minimize(
    f: SetFunctionHandle,
    tolerance: float | None = None,
    seed: int = 0,
) -> MinimizerCertificate:
    """
    Minimize a symmetric submodular f over proper nonempty subsets.

    Pendant pairs are found by growing W from the first group and adding the
    group u minimizing f(W ∪ u) - f(u) (lowest index on ties). The last group
    of each ordering is a candidate; the last two groups are then merged.
    Takes O(n^3) oracle calls.

    Raises:
        MinimizationError: If n < 2
        SymmetryError: If sampling finds f(A) != f(V \\ A)
    """
    tol = resolve_tolerance(tolerance)
    n = f.size_n
    if n < 2:
        raise MinimizationError("symmetric minimization needs at least 2 elements")
    verify_symmetry(f, seed=seed, tolerance=tol)
    start_calls = f.eval_count

    def value(bits: int) -> float:
        return f.evaluate(Subset(f.ground, bits))

    groups = [1 << v for v in range(n)]
    best_value, best_bits = float("inf"), 0
    phases = 0
    while len(groups) > 1:
        phases += 1
        W = groups[0]
        remaining = list(range(1, len(groups)))
        ordering = [0]
        while remaining:
            keys = [(value(W | groups[u]) - value(groups[u]), u) for u in remaining]
            lowest = min(k for k, _ in keys)
            u = min(u for k, u in keys if k <= lowest + tol)
            ordering.append(u)
            remaining.remove(u)
            W |= groups[u]
        t, u = ordering[-2], ordering[-1]
        candidate = value(groups[u])
        if candidate < best_value - tol:
            best_value, best_bits = candidate, groups[u]
        groups[t] |= groups[u]
        del groups[u]

    return MinimizerCertificate(
        min_set=_bits_to_indices(best_bits),
        min_value=best_value,
        iterations=phases,
        oracle_calls=f.eval_count - start_calls,
    )


# ============================================================================
# Difference of Submodular Functions
# ============================================================================


class DsTrace(BaseModel):
    """Result of DS minimization: final set, value and h along the iterates."""

    min_set: list[int]
    value: float
    trace: list[float]
    iterations: int


def ds_minimize(
    f: SetFunctionHandle,
    g: SetFunctionHandle,
    start: Subset,
    seed: int,
    tolerance: float | None = None,
    max_rounds: int | None = None,
) -> DsTrace:
    """
    Locally minimize h = f - g.

    Each round replaces g by a modular lower bound m tight at the current
    set A (a seeded chain through A), minimizes f - m with the min-norm
    point and moves only on strict improvement of h. The trace of h is
    nonincreasing.
    """
    from .analysis import modular_lower_bound

    tol = resolve_tolerance(tolerance)
    if f.ground != g.ground:
        raise DimensionError("f and g live on different ground sets")
    f.check_subset(start)
    warn_unless(
        f.flags.claims_normalized or f.flags.claims_monotone,
        f"'{f.name}' claims no structure; DS minimization assumes submodular parts",
    )
    rng = np.random.default_rng(seed)
    cap = max_rounds or 10 * f.size_n + 10

    def h(A: Subset) -> float:
        return f.evaluate(A) - g.evaluate(A)

    current, current_value = start, h(start)
    trace = [current_value]
    rounds = 0
    while rounds < cap:
        rounds += 1
        lower = modular_lower_bound(g, current, rng)
        negated = modular_handle(
            ModularWeights(weights=-lower.as_array(), constant=-lower.constant),
            f.ground,
            name="-m",
        )
        surrogate = derive_transform(f, Mixture(components=[(1.0, f), (1.0, negated)]))
        candidate = min_norm_point(surrogate, tol).subset(f)
        candidate_value = h(candidate)
        logger.debug(
            "ds round {}: h={:.6g} -> {:.6g}", rounds, current_value, candidate_value
        )
        if candidate_value < current_value - tol:
            current, current_value = candidate, candidate_value
            trace.append(current_value)
        else:
            break
    return DsTrace(
        min_set=current.indices(), value=current_value, trace=trace, iterations=rounds
    )
