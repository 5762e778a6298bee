"""
Set Function Core

Ground sets, bit-vector subsets, the set-function oracle handle and the
submodularity-preserving transforms (conditioning, restriction, reflection
and conic mixtures).
"""

import threading
from collections.abc import Callable, Iterable, Iterator
from typing import Annotated, Any, Literal

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class SubmodError(Exception):
    """Base class for all toolkit errors."""
    pass


class DimensionError(SubmodError):
    """Subset, vector or handle does not match the expected ground set."""
    pass


class TransformError(SubmodError):
    """Invalid transform descriptor."""
    pass


# ============================================================================
# Ground Set and Subsets
# ============================================================================


class GroundSet(BaseModel):
    """
    Finite ground set V = {0, ..., n-1} with optional element labels.

    Ground sets are immutable; two ground sets match when their sizes and
    labels agree.
    """

    model_config = ConfigDict(frozen=True)

    size_n: int = Field(..., ge=1, description="Number of elements")
    labels: tuple[str, ...] | None = Field(
        default=None, description="Distinct element names (defaults to indices)"
    )

    @model_validator(mode="after")
    def _check_labels(self) -> "GroundSet":
        if self.labels is not None:
            if len(self.labels) != self.size_n:
                raise ValueError(
                    f"labels has length {len(self.labels)}, expected {self.size_n}"
                )
            if len(set(self.labels)) != self.size_n:
                raise ValueError("labels must be pairwise distinct")
        return self

    @classmethod
    def of_size(cls, n: int) -> "GroundSet":
        return cls(size_n=n)

    def label(self, v: int) -> str:
        if self.labels is None:
            return str(v)
        return self.labels[v]

    @property
    def full_bits(self) -> int:
        return (1 << self.size_n) - 1

    def check_index(self, v: int) -> None:
        if not 0 <= v < self.size_n:
            raise DimensionError(
                f"element index {v} out of range for ground set of size {self.size_n}"
            )


class Subset:
    """
    Fixed-width bit-vector subset of a ground set.

    Bit i is set iff element i belongs to the subset. Subsets are immutable
    and hash by their bits, which makes them usable as cache keys.
    """

    __slots__ = ("bits", "ground")

    def __init__(self, ground: GroundSet, bits: int = 0):
        if bits < 0 or bits >> ground.size_n:
            raise DimensionError(
                f"bits {bits:#x} exceed ground set of size {ground.size_n}"
            )
        self.ground = ground
        self.bits = bits

    # -- construction -------------------------------------------------------

    @classmethod
    def empty(cls, ground: GroundSet) -> "Subset":
        return cls(ground, 0)

    @classmethod
    def full(cls, ground: GroundSet) -> "Subset":
        return cls(ground, ground.full_bits)

    @classmethod
    def from_indices(cls, ground: GroundSet, indices: Iterable[int]) -> "Subset":
        bits = 0
        for v in indices:
            v = int(v)
            ground.check_index(v)
            bits |= 1 << v
        return cls(ground, bits)

    @classmethod
    def from_mask(cls, ground: GroundSet, mask: Iterable[bool]) -> "Subset":
        flags = list(mask)
        if len(flags) != ground.size_n:
            raise DimensionError(
                f"mask has length {len(flags)}, expected {ground.size_n}"
            )
        return cls.from_indices(ground, (i for i, b in enumerate(flags) if b))

    # -- queries ------------------------------------------------------------

    def __contains__(self, v: object) -> bool:
        return isinstance(v, (int, np.integer)) and bool(self.bits >> int(v) & 1)

    def __iter__(self) -> Iterator[int]:
        bits, v = self.bits, 0
        while bits:
            if bits & 1:
                yield v
            bits >>= 1
            v += 1

    def __len__(self) -> int:
        return self.bits.bit_count()

    def cardinality(self) -> int:
        return self.bits.bit_count()

    def indices(self) -> list[int]:
        return list(self)

    def index_array(self) -> np.ndarray:
        return np.fromiter(self, dtype=np.intp, count=len(self))

    def mask(self) -> np.ndarray:
        out = np.zeros(self.ground.size_n, dtype=bool)
        out[self.index_array()] = True
        return out

    def is_subset_of(self, other: "Subset") -> bool:
        self._check_same_ground(other)
        return self.bits & ~other.bits == 0

    # -- algebra ------------------------------------------------------------

    def add(self, v: int) -> "Subset":
        self.ground.check_index(v)
        return Subset(self.ground, self.bits | (1 << v))

    def remove(self, v: int) -> "Subset":
        self.ground.check_index(v)
        return Subset(self.ground, self.bits & ~(1 << v))

    def union(self, other: "Subset") -> "Subset":
        self._check_same_ground(other)
        return Subset(self.ground, self.bits | other.bits)

    def intersection(self, other: "Subset") -> "Subset":
        self._check_same_ground(other)
        return Subset(self.ground, self.bits & other.bits)

    def difference(self, other: "Subset") -> "Subset":
        self._check_same_ground(other)
        return Subset(self.ground, self.bits & ~other.bits)

    def complement(self) -> "Subset":
        return Subset(self.ground, self.ground.full_bits & ~self.bits)

    def _check_same_ground(self, other: "Subset") -> None:
        if other.ground is not self.ground and other.ground != self.ground:
            raise DimensionError("subsets belong to different ground sets")

    # -- dunder -------------------------------------------------------------

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Subset):
            return NotImplemented
        return self.bits == other.bits and (
            self.ground is other.ground or self.ground == other.ground
        )

    def __hash__(self) -> int:
        return hash((self.ground.size_n, self.bits))

    def __repr__(self) -> str:
        return f"Subset({self.indices()}, n={self.ground.size_n})"


# ============================================================================
# Modular Functions
# ============================================================================


class ModularWeights(BaseModel):
    """Modular pair (m, c): value of A is c + sum of m over A."""

    model_config = ConfigDict(frozen=True)

    weights: tuple[float, ...] = Field(..., min_length=1)
    constant: float = 0.0

    @field_validator("weights", mode="before")
    @classmethod
    def _coerce_weights(cls, value: Any) -> tuple[float, ...]:
        return tuple(float(w) for w in np.asarray(value, dtype=float).ravel())

    @property
    def size_n(self) -> int:
        return len(self.weights)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=float)

    def value(self, A: Subset) -> float:
        if A.ground.size_n != self.size_n:
            raise DimensionError(
                f"subset of size-{A.ground.size_n} ground set, weights have {self.size_n}"
            )
        w = self.weights
        return self.constant + float(sum(w[v] for v in A))


# ============================================================================
# Set Function Handles
# ============================================================================


class FunctionFlags(BaseModel):
    """
    Capability claims of a set function.

    Claims are never verified on construction; the analysis module checks
    them on request.
    """

    model_config = ConfigDict(frozen=True)

    claims_monotone: bool = False
    claims_normalized: bool = False
    claims_symmetric: bool = False
    claims_nonneg: bool = False

    @property
    def polymatroid(self) -> bool:
        return self.claims_monotone and self.claims_normalized


Oracle = Callable[[Subset], float]


class SetFunctionHandle:
    """
    Evaluation oracle f: 2^V -> R with capability flags and a call counter.

    Handles are immutable after construction. ``eval_count`` is guarded by a
    lock, so concurrent evaluation never loses counts.
    """

    def __init__(
        self,
        ground: GroundSet,
        oracle: Oracle,
        flags: FunctionFlags | None = None,
        name: str = "",
    ):
        self.ground = ground
        self.flags = flags or FunctionFlags()
        self.name = name or "set-function"
        self._oracle = oracle
        self._lock = threading.Lock()
        self._eval_count = 0

    @property
    def size_n(self) -> int:
        return self.ground.size_n

    @property
    def eval_count(self) -> int:
        return self._eval_count

    def check_subset(self, A: Subset) -> None:
        if A.ground is not self.ground and A.ground != self.ground:
            raise DimensionError(
                f"subset over ground set of size {A.ground.size_n} passed to "
                f"'{self.name}' over ground set of size {self.size_n}"
            )

    def evaluate(self, A: Subset) -> float:
        self.check_subset(A)
        with self._lock:
            self._eval_count += 1
        return float(self._oracle(A))

    def __call__(self, A: Subset) -> float:
        return self.evaluate(A)

    def gain(self, v: int, A: Subset) -> float:
        self.ground.check_index(v)
        if v in A:
            return 0.0
        return self.evaluate(A.add(v)) - self.evaluate(A)

    def subset(self, indices: Iterable[int]) -> Subset:
        return Subset.from_indices(self.ground, indices)

    def empty(self) -> Subset:
        return Subset.empty(self.ground)

    def full(self) -> Subset:
        return Subset.full(self.ground)

    def with_flags(self, **claims: bool) -> "SetFunctionHandle":
        """
        Return a handle sharing this oracle with some claims replaced.

        The new handle counts its own evaluations.
        """
        flags = self.flags.model_copy(update=claims)
        return SetFunctionHandle(self.ground, self._oracle, flags, self.name)

    def __repr__(self) -> str:
        return f"SetFunctionHandle(name={self.name!r}, n={self.size_n})"


def evaluate(f: SetFunctionHandle, A: Subset) -> float:
    """
    Evaluate f at A through its oracle.

    Args:
        f: Set function handle
        A: Subset of f's ground set

    Returns:
        f(A) as a float; f.eval_count grows by one

    Raises:
        DimensionError: If A belongs to another ground set

    Example:
        >>> g = GroundSet.of_size(3)
        >>> m = modular_handle(ModularWeights(weights=(1, 2, 3)), g)
        >>> evaluate(m, Subset.from_indices(g, [0, 2]))
        4.0
    """
    return f.evaluate(A)


def marginal_gain(f: SetFunctionHandle, v: int, A: Subset) -> float:
    """
    Marginal gain f(v | A) = f(A + v) - f(A).

    Returns 0.0 without calling the oracle when v is already in A.

    Raises:
        DimensionError: If v is out of range or A belongs to another ground set
    """
    f.check_subset(A)
    return f.gain(v, A)


def modular_handle(
    m: ModularWeights, ground: GroundSet | None = None, name: str = "modular"
) -> SetFunctionHandle:
    """Wrap a modular pair as a handle, with claims read off its weights."""
    ground = ground or GroundSet.of_size(m.size_n)
    if ground.size_n != m.size_n:
        raise DimensionError(
            f"weights have length {m.size_n}, ground set has size {ground.size_n}"
        )
    w = m.as_array()
    constant = m.constant
    flags = FunctionFlags(
        claims_monotone=bool(np.all(w >= 0)),
        claims_normalized=constant == 0.0,
        claims_nonneg=bool(np.all(w >= 0)) and constant >= 0.0,
        claims_symmetric=False,
    )

    def oracle(A: Subset) -> float:
        if not A.bits:
            return constant
        return constant + float(w[A.index_array()].sum())

    return SetFunctionHandle(ground, oracle, flags, name)


# ============================================================================
# Evaluation Cache
# ============================================================================


class EvaluationCache:
    """
    Per-run memo of oracle values keyed by (handle identity, subset bits).

    Only cache misses reach the oracle, so ``eval_count`` still counts real
    oracle calls. Caches must not outlive the run that created them.
    """

    def __init__(self) -> None:
        self._values: dict[tuple[int, int], float] = {}
        self.hits = 0

    def value(self, f: SetFunctionHandle, A: Subset) -> float:
        key = (id(f), A.bits)
        cached = self._values.get(key)
        if cached is not None:
            self.hits += 1
            return cached
        result = f.evaluate(A)
        self._values[key] = result
        return result

    def bound(self, f: SetFunctionHandle) -> Callable[[Subset], float]:
        return lambda A: self.value(f, A)

    def __len__(self) -> int:
        return len(self._values)


# ============================================================================
# Transforms
# ============================================================================


class Condition(BaseModel):
    """g(A) = f(A | B) = f(A ∪ B) - f(B)."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    kind: Literal["condition"] = "condition"
    given: Subset


class Restrict(BaseModel):
    """g = f restricted to subsets of W, re-indexed to 0..|W|-1."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    kind: Literal["restrict"] = "restrict"
    within: Subset


class Reflect(BaseModel):
    """g(A) = f(V \\ A)."""

    kind: Literal["reflect"] = "reflect"


class Mixture(BaseModel):
    """g(A) = sum_i w_i f_i(A) with w_i >= 0 (f itself is ignored)."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    kind: Literal["mixture"] = "mixture"
    components: list[tuple[float, SetFunctionHandle]]


TransformSpec = Annotated[
    Condition | Restrict | Reflect | Mixture, Field(discriminator="kind")
]


def derive_transform(f: SetFunctionHandle, spec: TransformSpec) -> SetFunctionHandle:
    """
    Derive a new handle from f by a submodularity-preserving transform.

    Args:
        f: Source handle
        spec: One of Condition, Restrict, Reflect, Mixture

    Returns:
        New handle with conservatively propagated claims

    Raises:
        TransformError: On a negative mixture weight or an empty mixture
        DimensionError: If B, W or a mixture component lives on another ground set
    """
    match spec:
        case Condition(given=B):
            return _condition(f, B)
        case Restrict(within=W):
            return _restrict(f, W)
        case Reflect():
            return _reflect(f)
        case Mixture(components=components):
            return _mixture(f, components)
    raise TransformError(f"Unknown transform descriptor: {spec!r}")


def _condition(f: SetFunctionHandle, B: Subset) -> SetFunctionHandle:
    f.check_subset(B)
    base = f.evaluate(B)
    given_bits = B.bits
    ground = f.ground

    def oracle(A: Subset) -> float:
        return f.evaluate(Subset(ground, A.bits | given_bits)) - base

    flags = FunctionFlags(
        claims_monotone=f.flags.claims_monotone,
        claims_normalized=True,
        claims_nonneg=f.flags.claims_monotone,
        claims_symmetric=False,
    )
    return SetFunctionHandle(ground, oracle, flags, f"{f.name}|given")


def _restrict(f: SetFunctionHandle, W: Subset) -> SetFunctionHandle:
    f.check_subset(W)
    members = W.indices()
    if not members:
        raise TransformError("cannot restrict to an empty set")
    ground = GroundSet(
        size_n=len(members), labels=tuple(f.ground.label(v) for v in members)
    )
    parent = f.ground

    def oracle(A: Subset) -> float:
        bits = 0
        for local in A:
            bits |= 1 << members[local]
        return f.evaluate(Subset(parent, bits))

    flags = f.flags.model_copy(update={"claims_symmetric": False})
    return SetFunctionHandle(ground, oracle, flags, f"{f.name}@restrict")


def _reflect(f: SetFunctionHandle) -> SetFunctionHandle:
    ground = f.ground
    full = ground.full_bits

    def oracle(A: Subset) -> float:
        return f.evaluate(Subset(ground, full & ~A.bits))

    flags = FunctionFlags(
        claims_monotone=False,
        claims_normalized=f.flags.claims_symmetric and f.flags.claims_normalized,
        claims_nonneg=f.flags.claims_nonneg,
        claims_symmetric=f.flags.claims_symmetric,
    )
    return SetFunctionHandle(ground, oracle, flags, f"{f.name}@reflect")


def _mixture(
    f: SetFunctionHandle, components: list[tuple[float, SetFunctionHandle]]
) -> SetFunctionHandle:
    if not components:
        raise TransformError("mixture needs at least one component")
    for weight, handle in components:
        if weight < 0:
            raise TransformError(f"negative mixture weight {weight}")
        if handle.ground != f.ground:
            raise DimensionError(
                f"mixture component '{handle.name}' lives on another ground set"
            )
    active = [(float(w), h) for w, h in components if w > 0]

    def oracle(A: Subset) -> float:
        return float(sum(w * h.evaluate(A) for w, h in active))

    def every(claim: str) -> bool:
        return all(getattr(h.flags, claim) for _, h in active)

    flags = FunctionFlags(
        claims_monotone=every("claims_monotone"),
        claims_normalized=every("claims_normalized"),
        claims_nonneg=every("claims_nonneg"),
        claims_symmetric=every("claims_symmetric"),
    )
    return SetFunctionHandle(f.ground, oracle, flags, "mixture")


def symmetric_information(f: SetFunctionHandle) -> SetFunctionHandle:
    """
    Symmetric CCMI instantiation g(A) = I_f(A; V \\ A).

    g(A) = f(A) + f(V \\ A) - f(∅) - f(V); submodular whenever f is.
    """
    ground = f.ground
    full = ground.full_bits
    constant = f.evaluate(Subset.empty(ground)) + f.evaluate(Subset.full(ground))

    def oracle(A: Subset) -> float:
        return (
            f.evaluate(A) + f.evaluate(Subset(ground, full & ~A.bits)) - constant
        )

    flags = FunctionFlags(
        claims_monotone=False,
        claims_normalized=True,
        claims_symmetric=True,
        claims_nonneg=f.flags.claims_monotone and f.flags.claims_normalized,
    )
    return SetFunctionHandle(ground, oracle, flags, f"I[{f.name}]")


def warn_unless(claim: bool, message: str) -> None:
    """Log a warning for an unmet precondition claim."""
    if not claim:
        logger.warning(message)
