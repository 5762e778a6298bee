"""
Function Family Schemas

Pydantic specs for the submodular function families and for the versioned
function document the CLI reads. Specs check types and shapes; the
family-specific invariants (nonnegativity, positive definiteness) are
enforced by the oracle classes in ``zoo`` when a handle is built.
"""

from collections import Counter
from typing import Annotated, Any, Literal

import numpy as np
from pydantic import (
    BaseModel,
    BeforeValidator,
    ConfigDict,
    Field,
    PlainSerializer,
    model_validator,
)

from .core import ModularWeights, SubmodError

CURRENT_SCHEMA_VERSION = "1.0.0"


class SpecError(SubmodError):
    """Spec violates an invariant of its function family."""
    pass


def _as_matrix(value: Any) -> np.ndarray:
    array = np.asarray(value, dtype=float)
    if array.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {array.shape}")
    if not np.all(np.isfinite(array)):
        raise ValueError("matrix entries must be finite")
    return array


def _as_vector(value: Any) -> np.ndarray:
    array = np.asarray(value, dtype=float)
    if array.ndim != 1:
        raise ValueError(f"expected a 1-D vector, got shape {array.shape}")
    if not np.all(np.isfinite(array)):
        raise ValueError("vector entries must be finite")
    return array


Matrix = Annotated[
    np.ndarray,
    BeforeValidator(_as_matrix),
    PlainSerializer(lambda a: a.tolist(), return_type=list),
]
Vector = Annotated[
    np.ndarray,
    BeforeValidator(_as_vector),
    PlainSerializer(lambda a: a.tolist(), return_type=list),
]


class _Spec(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)


# ============================================================================
# Concave Functions
# ============================================================================


class ConcaveSpec(_Spec):
    """
    Closed family of concave, nondecreasing phi on [0, inf) with phi(0) = 0.

    - sqrt: sqrt(x)
    - power: x ** p with 0 < p < 1
    - log1p: log(1 + x)
    - min_cap: min(x, cap) with cap >= 0
    - one_minus_exp: 1 - exp(-scale * x) with scale > 0
    """

    kind: Literal["sqrt", "power", "log1p", "min_cap", "one_minus_exp"]
    p: float | None = Field(default=None, description="Exponent for power")
    cap: float | None = Field(default=None, description="Threshold for min_cap")
    scale: float | None = Field(default=None, description="Rate for one_minus_exp")

    @model_validator(mode="after")
    def _check_parameters(self) -> "ConcaveSpec":
        if self.kind == "power" and (self.p is None or not 0 < self.p < 1):
            raise ValueError("power requires 0 < p < 1")
        if self.kind == "min_cap" and (self.cap is None or self.cap < 0):
            raise ValueError("min_cap requires cap >= 0")
        if self.kind == "one_minus_exp" and (self.scale is None or self.scale <= 0):
            raise ValueError("one_minus_exp requires scale > 0")
        return self

    def apply(self, x: np.ndarray | float) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        match self.kind:
            case "sqrt":
                return np.sqrt(x)
            case "power":
                return np.power(x, self.p)
            case "log1p":
                return np.log1p(x)
            case "min_cap":
                return np.minimum(x, self.cap)
            case "one_minus_exp":
                return -np.expm1(-self.scale * x)  # type: ignore[operator]
        raise SpecError(f"Unknown concave kind: {self.kind}")


# ============================================================================
# Function Family Specs
# ============================================================================


class ModularSpec(_Spec):
    """Modular pair (m, c)."""

    kind: Literal["modular"] = "modular"
    weights: Vector
    constant: float = 0.0

    def to_weights(self) -> ModularWeights:
        return ModularWeights(weights=self.weights, constant=self.constant)


class FeatureBasedSpec(_Spec):
    """
    f(A) = sum_u phi_u(sum_{a in A} m_u(a)) + m_bias(A).

    ``weights`` has shape U x n and already folds omega_u into m_u. A single
    ``concave`` entry is broadcast to every feature.
    """

    kind: Literal["feature-based"] = "feature-based"
    weights: Matrix = Field(..., description="Nonnegative U x n feature weights")
    concave: list[ConcaveSpec] = Field(..., min_length=1)
    bias: ModularWeights | None = Field(default=None, description="Signed modular term")

    @property
    def features_u(self) -> int:
        return int(self.weights.shape[0])

    def concave_for(self, u: int) -> ConcaveSpec:
        return self.concave[0] if len(self.concave) == 1 else self.concave[u]


class SimilarityMatrix(_Spec):
    """Dense nonnegative n x n affinity matrix sim(a, v)."""

    entries: Matrix

    @property
    def size_n(self) -> int:
        return int(self.entries.shape[0])


class FacilityLocationSpec(_Spec):
    kind: Literal["facility-location"] = "facility-location"
    similarity: Matrix


class CoverageSpec(_Spec):
    """
    Probabilistic coverage: f(X) = sum_u w_u (1 - prod_{v in X} (1 - P[u, v])).

    A 0/1 ``membership_prob`` reduces to weighted set cover.
    """

    kind: Literal["coverage"] = "coverage"
    membership_prob: Matrix = Field(..., description="U x n probabilities")
    concept_weights: Vector | None = Field(default=None, description="Defaults to ones")

    @property
    def concept_count(self) -> int:
        return int(self.membership_prob.shape[0])


class GraphCutSpec(_Spec):
    """
    Generalized graph cut.

    f(X) = sum_j min(C_j(X), alpha * C_j(V)) - lam * sum_{i, j in X} w_ij with
    C_j(X) = sum_{i in X} w_ij. lam = 1, alpha = 1 is the classic cut.
    """

    model_config = ConfigDict(
        arbitrary_types_allowed=True, frozen=True, populate_by_name=True
    )

    kind: Literal["graph-cut"] = "graph-cut"
    edge_weights: Matrix
    lam: float = Field(default=1.0, alias="lambda")
    alpha: float = 1.0


class LogDetSpec(_Spec):
    """f(X) = log det(M_X), f(∅) = 0, for symmetric positive-definite M."""

    kind: Literal["log-det"] = "log-det"
    matrix: Matrix


class DsfLayer(_Spec):
    """One DSF layer: unit u computes phi_u(weights[u] . previous)."""

    weights: Matrix = Field(..., description="units x previous-width, nonnegative")
    concave: list[ConcaveSpec] = Field(..., min_length=1)

    @property
    def units(self) -> int:
        return int(self.weights.shape[0])

    def concave_for(self, u: int) -> ConcaveSpec:
        return self.concave[0] if len(self.concave) == 1 else self.concave[u]


class DsfSpec(_Spec):
    """
    Deep submodular function: nested concave-of-nonnegative-sums layers.

    The first layer reads the ground-set indicator vector, every later layer
    reads the previous layer's outputs, and ``output_weights`` mixes the last
    layer. ``bias`` adds an optional signed modular term.
    """

    kind: Literal["dsf"] = "dsf"
    layers: list[DsfLayer] = Field(..., min_length=1)
    output_weights: Vector
    bias: ModularWeights | None = None

    @property
    def size_n(self) -> int:
        return int(self.layers[0].weights.shape[1])


class RougeSpec(_Spec):
    """
    ROUGE-N recall as a set function over candidate sentences.

    f(S) = sum_i sum_e min(c_e(S), r_{e,i}) / sum_i sum_e r_{e,i}
    """

    kind: Literal["rouge-n"] = "rouge-n"
    ngram_size: int = Field(default=2, ge=1)
    reference_counts: list[dict[str, int]] = Field(..., min_length=1)
    candidate_counts: list[dict[str, int]] = Field(..., min_length=1)

    @classmethod
    def from_texts(
        cls, sentences: list[str], references: list[str], ngram_size: int = 2
    ) -> "RougeSpec":
        """Count n-grams after lowercasing and whitespace tokenization."""
        return cls(
            ngram_size=ngram_size,
            reference_counts=[ngram_counts(r, ngram_size) for r in references],
            candidate_counts=[ngram_counts(s, ngram_size) for s in sentences],
        )


def ngram_counts(text: str, n: int) -> dict[str, int]:
    tokens = text.lower().split()
    grams = (" ".join(tokens[i : i + n]) for i in range(len(tokens) - n + 1))
    return dict(Counter(grams))


FunctionSpec = Annotated[
    ModularSpec
    | FeatureBasedSpec
    | FacilityLocationSpec
    | CoverageSpec
    | GraphCutSpec
    | LogDetSpec
    | DsfSpec
    | RougeSpec,
    Field(discriminator="kind"),
]


# ============================================================================
# Function Document
# ============================================================================


class FunctionDocument(_Spec):
    """
    Versioned JSON/YAML document describing one function.

    Example:
        {
          "schema_version": "1.0.0",
          "labels": ["a", "b", "c", "d", "e", "f"],
          "function": {"kind": "dsf", "layers": [...], "output_weights": [1.0]}
        }
    """

    schema_version: str = Field(default=CURRENT_SCHEMA_VERSION)
    labels: list[str] | None = Field(default=None, description="Element names")
    function: FunctionSpec
