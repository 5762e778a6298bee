"""
Combinatorial Information

Conditional mutual information I_f(A; B | C) of a set function, the
facility-location closed form, Q-clustering by repeated symmetric
minimization, label-set strength and smoothest label completion for
semi-supervised learning, and uncertainty-plus-diversity batch selection for
active learning.
"""

import itertools

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .config import get_settings, resolve_tolerance
from .core import (
    DimensionError,
    Mixture,
    ModularWeights,
    Restrict,
    SetFunctionHandle,
    SubmodError,
    Subset,
    derive_transform,
    modular_handle,
    symmetric_information,
)
from .maximize import CardinalityConstraint, ConstraintError, greedy_cardinality
from .minimize import queyranne_minimize
from .schemas import SimilarityMatrix


class InfoError(SubmodError):
    pass


class CcmiQuery(BaseModel):
    """Arguments of I_f(A; B | C); overlaps are allowed but flagged."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    A: Subset
    B: Subset
    C: Subset

    @model_validator(mode="after")
    def _check_ground(self) -> "CcmiQuery":
        if not (self.A.ground == self.B.ground == self.C.ground):
            raise DimensionError("CCMI arguments live on different ground sets")
        return self

    @property
    def overlapping(self) -> bool:
        return bool(
            self.A.bits & self.B.bits
            or self.A.bits & self.C.bits
            or self.B.bits & self.C.bits
        )


def ccmi(f: SetFunctionHandle, q: CcmiQuery) -> float:
    """I_f(A; B | C) = f(A ∪ C) + f(B ∪ C) - f(C) - f(A ∪ B ∪ C)."""
    f.check_subset(q.A)
    if q.overlapping:
        logger.warning("CCMI arguments overlap: A={}, B={}, C={}", q.A, q.B, q.C)
    AC = q.A.union(q.C)
    BC = q.B.union(q.C)
    return f.evaluate(AC) + f.evaluate(BC) - f.evaluate(q.C) - f.evaluate(AC.union(q.B))


def fl_ccmi_closed_form(sim: SimilarityMatrix, q: CcmiQuery) -> float:
    """
    CCMI of facility location f(X) = sum_v max_{a in X} sim[a, v] without
    oracle calls.

    sum_v max(min(max_A sim, max_B sim) - max_C sim, 0), empty maxima = 0.
    """
    entries = sim.entries
    if entries.shape[0] != q.A.ground.size_n:
        raise DimensionError(
            f"similarity has {entries.shape[0]} rows, ground set has {q.A.ground.size_n}"
        )

    def best(X: Subset) -> np.ndarray:
        if not X.bits:
            return np.zeros(entries.shape[1])
        return entries[X.index_array()].max(axis=0)

    inner = np.minimum(best(q.A), best(q.B)) - best(q.C)
    return float(np.maximum(inner, 0.0).sum())


# ============================================================================
# Q-Clustering
# ============================================================================


class ClusterNode(BaseModel):
    members: list[int]
    split_value: float | None = Field(
        default=None, description="I_f between the children; None for leaves"
    )
    children: list["ClusterNode"] = Field(default_factory=list)

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def leaves(self) -> list["ClusterNode"]:
        if self.is_leaf:
            return [self]
        return [leaf for child in self.children for leaf in child.leaves()]


class ClusterTree(BaseModel):
    root: ClusterNode

    def clusters(self) -> list[list[int]]:
        return [leaf.members for leaf in self.root.leaves()]


def q_cluster(f: SetFunctionHandle, k: int) -> ClusterTree:
    """
    Split V into k clusters by repeatedly cutting the largest leaf.

    Each leaf W is cut at the Queyranne minimizer of I_f(A; W \\ A) with f
    restricted to W. Ties between equally large leaves go to the one with
    the lowest member.

    Raises:
        ConstraintError: If k is not in [1, n]
    """
    n = f.size_n
    if not 1 <= k <= n:
        raise ConstraintError(f"k={k} must lie in [1, {n}]")
    root = ClusterNode(members=list(range(n)))
    leaves = [root]
    while len(leaves) < k:
        target = min(leaves, key=lambda leaf: (-len(leaf.members), leaf.members[0]))
        members = target.members
        if len(members) == 1:
            raise InfoError("cannot split a singleton cluster")
        restricted = derive_transform(f, Restrict(within=f.subset(members)))
        certificate = queyranne_minimize(symmetric_information(restricted))
        chosen = set(certificate.min_set)
        left = [members[i] for i in range(len(members)) if i in chosen]
        right = [members[i] for i in range(len(members)) if i not in chosen]
        target.children = [ClusterNode(members=left), ClusterNode(members=right)]
        target.split_value = certificate.min_value
        leaves.remove(target)
        leaves.extend(target.children)
        logger.debug("split {} -> {} | {}", members, left, right)

    covered = sorted(v for leaf in leaves for v in leaf.members)
    if covered != list(range(n)):
        raise InfoError("cluster leaves do not partition the ground set")
    return ClusterTree(root=root)


# ============================================================================
# Semi-Supervised Learning
# ============================================================================


class StrengthReport(BaseModel):
    labeled: list[int]
    psi: float
    witness: list[int]


def _information_function(f: SetFunctionHandle) -> SetFunctionHandle:
    return f if f.flags.claims_symmetric else symmetric_information(f)


def _check_enumerable(free: int) -> None:
    limit = get_settings().enumeration_limit
    if free > limit:
        raise InfoError(f"exhaustive enumeration over {free} elements exceeds {limit}")


def label_strength(f: SetFunctionHandle, L: Subset) -> StrengthReport:
    """
    Psi(L) = min over nonempty T ⊆ V \\ L of I_f(T) / |T|.

    A handle claiming symmetry is used as I_f directly; otherwise
    I_f(T) = I_f(T; V \\ T). L = V has no candidate T and reports +inf with
    an empty witness.
    """
    f.check_subset(L)
    information = _information_function(f)
    free = L.complement().indices()
    if not free:
        return StrengthReport(labeled=L.indices(), psi=float("inf"), witness=[])
    _check_enumerable(len(free))

    best, witness = float("inf"), []
    for size in range(1, len(free) + 1):
        for T in itertools.combinations(free, size):
            ratio = information.evaluate(f.subset(T)) / size
            if ratio < best:
                best, witness = ratio, list(T)
    return StrengthReport(labeled=L.indices(), psi=best, witness=witness)


class Completion(BaseModel):
    labels: list[int]
    value: float


def smoothest_completion(
    f: SetFunctionHandle, L: Subset, y_L: list[int]
) -> Completion:
    """
    argmin of I_f({v : y_v = 1}) over labelings agreeing with y_L on L.

    Completions are visited in increasing bit-vector order (lowest index most
    significant), so ties keep the lexicographically smallest.
    """
    f.check_subset(L)
    labeled = L.indices()
    if len(y_L) != len(labeled) or any(y not in (0, 1) for y in y_L):
        raise DimensionError(f"need {len(labeled)} binary labels, got {y_L}")
    information = _information_function(f)
    free = L.complement().indices()
    _check_enumerable(len(free))

    fixed = sum(1 << v for v, y in zip(labeled, y_L) if y)
    best_value, best_bits = float("inf"), fixed
    for bits in itertools.product((0, 1), repeat=len(free)):
        positive = fixed | sum(1 << v for v, b in zip(free, bits) if b)
        value = information.evaluate(Subset(f.ground, positive))
        if value < best_value:
            best_value, best_bits = value, positive
    return Completion(
        labels=[best_bits >> v & 1 for v in range(f.size_n)], value=best_value
    )


# ============================================================================
# Active Learning
# ============================================================================


class BatchSelection(BaseModel):
    batch: list[int]
    value: float
    gains: list[float]


def uncertainty_diversity_batch(
    f: SetFunctionHandle,
    scores: np.ndarray | list[float],
    k: int,
    labeled: Subset | None = None,
    tolerance: float | None = None,
) -> BatchSelection:
    """
    Greedy argmax of m(A) + f(A) over unlabeled batches of size k, with m
    the per-element uncertainty scores and f a diversity function.

    The greedy runs on f restricted to the unlabeled pool; the batch is
    reported in ground-set indices.
    """
    tol = resolve_tolerance(tolerance)
    scores = np.asarray(scores, dtype=float)
    if scores.shape != (f.size_n,):
        raise DimensionError(f"scores have shape {scores.shape}, expected ({f.size_n},)")
    pool = labeled.complement() if labeled is not None else f.full()
    f.check_subset(pool)
    members = pool.indices()
    if not 1 <= k <= len(members):
        raise ConstraintError(f"k={k} must lie in [1, {len(members)}] unlabeled elements")

    diversity = derive_transform(f, Restrict(within=pool))
    uncertainty = modular_handle(
        ModularWeights(weights=scores[members]), diversity.ground, "uncertainty"
    )
    objective = derive_transform(
        diversity, Mixture(components=[(1.0, uncertainty), (1.0, diversity)])
    )
    result = greedy_cardinality(objective, CardinalityConstraint(k=k), tolerance=tol)
    return BatchSelection(
        batch=[members[i] for i in result.order], value=result.value, gains=result.gains
    )
