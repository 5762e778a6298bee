"""
Submodular Function Zoo

Oracle classes and constructors for the concrete submodular families:
modular, feature-based, facility location, probabilistic coverage, generalized
graph cut, log-determinant, deep submodular functions and ROUGE-N recall.
Each ``build_*`` validates its spec and returns a SetFunctionHandle whose
claims follow from the family parameters.
"""

from abc import ABC, abstractmethod

import numpy as np

from .core import (
    FunctionFlags,
    GroundSet,
    ModularWeights,
    SetFunctionHandle,
    Subset,
    modular_handle,
)
from .schemas import (
    ConcaveSpec,
    CoverageSpec,
    DsfLayer,
    DsfSpec,
    FacilityLocationSpec,
    FeatureBasedSpec,
    FunctionSpec,
    GraphCutSpec,
    LogDetSpec,
    ModularSpec,
    RougeSpec,
    SimilarityMatrix,
    SpecError,
)


class NotPositiveDefiniteError(SpecError):
    """Cholesky factorization of a log-det kernel failed."""
    pass


class Oracle(ABC):
    """
    Base class for family oracles.

    Subclasses validate their spec once, precompute what they can, and then
    evaluate subsets from an index array.
    """

    def __init__(self, size_n: int):
        self.size_n = size_n

    @abstractmethod
    def get_kind(self) -> str:
        """Return the family identifier (e.g. 'facility-location')."""
        pass

    @abstractmethod
    def flags(self) -> FunctionFlags:
        """Return the capability claims implied by the parameters."""
        pass

    @abstractmethod
    def value(self, idx: np.ndarray) -> float:
        """Evaluate the subset given by its sorted element indices."""
        pass

    def validate(self) -> None:
        """Raise SpecError if the parameters break a family invariant."""

    def __call__(self, A: Subset) -> float:
        return self.value(A.index_array())

    def build(self, ground: GroundSet | None = None) -> SetFunctionHandle:
        self.validate()
        ground = ground or GroundSet.of_size(self.size_n)
        if ground.size_n != self.size_n:
            raise SpecError(
                f"{self.get_kind()} spec has {self.size_n} elements, "
                f"ground set has {ground.size_n}"
            )
        return SetFunctionHandle(ground, self, self.flags(), self.get_kind())


def _check_nonneg(name: str, array: np.ndarray) -> None:
    if np.any(array < 0):
        raise SpecError(f"{name} must be nonnegative (min entry {array.min()})")


def _bias_claims(bias: ModularWeights | None) -> tuple[bool, bool, bool]:
    """(monotone, normalized, nonneg) contributions of an optional bias."""
    if bias is None:
        return True, True, True
    w = bias.as_array()
    monotone = bool(np.all(w >= 0))
    return monotone, bias.constant == 0.0, monotone and bias.constant >= 0


# ============================================================================
# Feature-Based Functions
# ============================================================================


class FeatureBasedOracle(Oracle):
    def __init__(self, spec: FeatureBasedSpec):
        super().__init__(int(spec.weights.shape[1]))
        self.spec = spec
        self.weights = spec.weights
        if len(spec.concave) not in (1, spec.features_u):
            raise SpecError(
                f"need 1 or {spec.features_u} concave specs, got {len(spec.concave)}"
            )
        self.concave: list[ConcaveSpec] = [
            spec.concave_for(u) for u in range(spec.features_u)
        ]
        self.bias = spec.bias.as_array() if spec.bias is not None else None
        self.bias_constant = spec.bias.constant if spec.bias is not None else 0.0

    def get_kind(self) -> str:
        return "feature-based"

    def validate(self) -> None:
        _check_nonneg("feature weights", self.weights)
        if self.bias is not None and self.bias.shape[0] != self.size_n:
            raise SpecError("bias length does not match the ground set")

    def flags(self) -> FunctionFlags:
        monotone, normalized, nonneg = _bias_claims(self.spec.bias)
        return FunctionFlags(
            claims_monotone=monotone,
            claims_normalized=normalized,
            claims_nonneg=nonneg,
        )

    def value(self, idx: np.ndarray) -> float:
        totals = self.weights[:, idx].sum(axis=1)
        out = float(sum(phi.apply(t) for phi, t in zip(self.concave, totals)))
        if self.bias is not None:
            out += self.bias_constant + float(self.bias[idx].sum())
        return out


def build_feature_based(
    spec: FeatureBasedSpec, ground: GroundSet | None = None
) -> SetFunctionHandle:
    """
    Build f(A) = sum_u phi_u(m_u(A)) + m_bias(A).

    Raises:
        SpecError: On negative feature weights or mismatched concave list
    """
    return FeatureBasedOracle(spec).build(ground)


def build_modular(
    m: ModularWeights | ModularSpec, ground: GroundSet | None = None
) -> SetFunctionHandle:
    """
    Build the modular function c + m(A).

    Claims monotone iff all weights >= 0 and normalized iff c == 0.
    """
    if isinstance(m, ModularSpec):
        m = m.to_weights()
    if ground is not None and ground.size_n != m.size_n:
        raise SpecError(
            f"weights have length {m.size_n}, ground set has size {ground.size_n}"
        )
    return modular_handle(m, ground)


# ============================================================================
# Facility Location
# ============================================================================


class FacilityLocationOracle(Oracle):
    """f(A) = sum_v max_{a in A} sim(a, v), with f(∅) = 0."""

    def __init__(self, sim: np.ndarray):
        super().__init__(int(sim.shape[0]))
        self.sim = sim

    def get_kind(self) -> str:
        return "facility-location"

    def validate(self) -> None:
        if self.sim.shape[0] != self.sim.shape[1]:
            raise SpecError(f"similarity must be square, got {self.sim.shape}")
        _check_nonneg("similarity", self.sim)

    def flags(self) -> FunctionFlags:
        return FunctionFlags(
            claims_monotone=True, claims_normalized=True, claims_nonneg=True
        )

    def value(self, idx: np.ndarray) -> float:
        if idx.size == 0:
            return 0.0
        return float(self.sim[idx].max(axis=0).sum())


def build_facility_location(
    sim: SimilarityMatrix | FacilityLocationSpec | np.ndarray,
    ground: GroundSet | None = None,
) -> SetFunctionHandle:
    """
    Build facility location over a square nonnegative similarity matrix.

    Raises:
        SpecError: If the matrix is not square or has a negative entry

    Example:
        >>> f = build_facility_location(np.array([[1, 0.5], [0.5, 1]]))
        >>> f(f.subset([0]))
        1.5
    """
    if isinstance(sim, SimilarityMatrix):
        matrix = sim.entries
    elif isinstance(sim, FacilityLocationSpec):
        matrix = sim.similarity
    else:
        matrix = np.asarray(sim, dtype=float)
    return FacilityLocationOracle(matrix).build(ground)


def facility_location_as_feature_based(sim: np.ndarray) -> FeatureBasedSpec:
    """
    Rewrite facility location as a sum of min-cap features.

    For each column v with distinct sorted values t_1 < ... < t_r, the level
    features m(a) = 1{sim(a, v) >= t_k} with phi = min(., 1), weighted by
    t_k - t_{k-1}, add up to max_{a in A} sim(a, v).
    """
    sim = np.asarray(sim, dtype=float)
    rows: list[np.ndarray] = []
    for v in range(sim.shape[1]):
        column = sim[:, v]
        previous = 0.0
        for threshold in np.unique(column):
            if threshold <= 0:
                continue
            rows.append((threshold - previous) * (column >= threshold))
            previous = threshold
    if not rows:
        rows.append(np.zeros(sim.shape[0]))
    # (t_k - t_{k-1}) * min(count, 1) == min(weighted count, t_k - t_{k-1})
    weights = np.vstack(rows)
    caps = [ConcaveSpec(kind="min_cap", cap=float(row.max())) for row in weights]
    return FeatureBasedSpec(weights=weights, concave=caps)


# ============================================================================
# Probabilistic Coverage
# ============================================================================


class CoverageOracle(Oracle):
    def __init__(self, spec: CoverageSpec):
        super().__init__(int(spec.membership_prob.shape[1]))
        self.miss = 1.0 - spec.membership_prob
        self.prob = spec.membership_prob
        if spec.concept_weights is None:
            self.concept_weights = np.ones(spec.concept_count)
        else:
            self.concept_weights = spec.concept_weights

    def get_kind(self) -> str:
        return "coverage"

    def validate(self) -> None:
        if np.any(self.prob < 0) or np.any(self.prob > 1):
            raise SpecError("membership probabilities must lie in [0, 1]")
        if self.concept_weights.shape[0] != self.prob.shape[0]:
            raise SpecError("one weight per concept required")
        _check_nonneg("concept weights", self.concept_weights)

    def flags(self) -> FunctionFlags:
        return FunctionFlags(
            claims_monotone=True, claims_normalized=True, claims_nonneg=True
        )

    def value(self, idx: np.ndarray) -> float:
        if idx.size == 0:
            return 0.0
        covered = 1.0 - self.miss[:, idx].prod(axis=1)
        return float(self.concept_weights @ covered)


def build_coverage(
    spec: CoverageSpec, ground: GroundSet | None = None
) -> SetFunctionHandle:
    """
    Build weighted probabilistic coverage (set cover for 0/1 memberships).

    Raises:
        SpecError: If a probability lies outside [0, 1]
    """
    return CoverageOracle(spec).build(ground)


# ============================================================================
# Generalized Graph Cut
# ============================================================================


class GraphCutOracle(Oracle):
    def __init__(self, spec: GraphCutSpec):
        super().__init__(int(spec.edge_weights.shape[0]))
        self.w = spec.edge_weights
        self.lam = spec.lam
        self.alpha = spec.alpha
        self.column_caps = spec.alpha * self.w.sum(axis=0)

    def get_kind(self) -> str:
        return "graph-cut"

    def validate(self) -> None:
        if self.w.shape[0] != self.w.shape[1]:
            raise SpecError(f"edge weights must be square, got {self.w.shape}")
        _check_nonneg("edge weights", self.w)
        if np.any(np.diag(self.w) != 0):
            raise SpecError("edge weights must have a zero diagonal")
        if self.lam < 0:
            raise SpecError(f"lambda must be >= 0, got {self.lam}")
        if not 0 <= self.alpha <= 1:
            raise SpecError(f"alpha must lie in [0, 1], got {self.alpha}")

    def flags(self) -> FunctionFlags:
        symmetric = (
            self.lam == 1.0 and self.alpha == 1.0 and np.array_equal(self.w, self.w.T)
        )
        return FunctionFlags(
            claims_monotone=self.lam == 0.0,
            claims_normalized=True,
            claims_nonneg=self.lam <= self.alpha,
            claims_symmetric=bool(symmetric),
        )

    def value(self, idx: np.ndarray) -> float:
        if idx.size == 0:
            return 0.0
        rows = self.w[idx]
        coverage = np.minimum(rows.sum(axis=0), self.column_caps).sum()
        internal = rows[:, idx].sum()
        return float(coverage - self.lam * internal)


def build_graph_cut(
    spec: GraphCutSpec, ground: GroundSet | None = None
) -> SetFunctionHandle:
    """
    Build the (lambda, alpha)-generalized graph cut.

    Claims symmetry iff lambda = 1, alpha = 1 and w is symmetric; with
    lambda = 0 and alpha = 1 the function is the modular node-weight sum.

    Raises:
        SpecError: On negative weights, lambda < 0 or alpha outside [0, 1]
    """
    return GraphCutOracle(spec).build(ground)


# ============================================================================
# Log-Determinant
# ============================================================================


class LogDetOracle(Oracle):
    def __init__(self, spec: LogDetSpec):
        super().__init__(int(spec.matrix.shape[0]))
        self.matrix = spec.matrix

    def get_kind(self) -> str:
        return "log-det"

    def validate(self) -> None:
        m = self.matrix
        if m.shape[0] != m.shape[1]:
            raise SpecError(f"log-det kernel must be square, got {m.shape}")
        if np.max(np.abs(m - m.T)) > 1e-12:
            raise SpecError("log-det kernel must be symmetric")
        try:
            np.linalg.cholesky(m)
        except np.linalg.LinAlgError as e:
            raise NotPositiveDefiniteError(
                "log-det kernel is not positive definite"
            ) from e

    def flags(self) -> FunctionFlags:
        return FunctionFlags(claims_normalized=True)

    def value(self, idx: np.ndarray) -> float:
        if idx.size == 0:
            return 0.0
        factor = np.linalg.cholesky(self.matrix[np.ix_(idx, idx)])
        return float(2.0 * np.log(np.diag(factor)).sum())


def build_log_det(
    spec: LogDetSpec, ground: GroundSet | None = None
) -> SetFunctionHandle:
    """
    Build f(X) = log det(M_X); normalized but not monotone in general.

    Raises:
        NotPositiveDefiniteError: If the Cholesky factorization fails
    """
    return LogDetOracle(spec).build(ground)


# ============================================================================
# Deep Submodular Functions
# ============================================================================


class DsfOracle(Oracle):
    def __init__(self, spec: DsfSpec):
        super().__init__(spec.size_n)
        self.spec = spec
        self.layers: list[DsfLayer] = spec.layers
        self.output_weights = spec.output_weights
        self.bias = spec.bias.as_array() if spec.bias is not None else None
        self.bias_constant = spec.bias.constant if spec.bias is not None else 0.0

    def get_kind(self) -> str:
        return "dsf"

    def validate(self) -> None:
        width = self.size_n
        for depth, layer in enumerate(self.layers):
            if layer.weights.shape[1] != width:
                raise SpecError(
                    f"layer {depth} expects width {layer.weights.shape[1]}, "
                    f"previous layer has {width}"
                )
            if len(layer.concave) not in (1, layer.units):
                raise SpecError(f"layer {depth} needs 1 or {layer.units} concave specs")
            _check_nonneg(f"layer {depth} weights", layer.weights)
            width = layer.units
        if self.output_weights.shape[0] != width:
            raise SpecError(
                f"output_weights has {self.output_weights.shape[0]} entries, "
                f"last layer has {width} units"
            )
        _check_nonneg("output weights", self.output_weights)
        if self.bias is not None and self.bias.shape[0] != self.size_n:
            raise SpecError("bias length does not match the ground set")

    def flags(self) -> FunctionFlags:
        monotone, normalized, nonneg = _bias_claims(self.spec.bias)
        return FunctionFlags(
            claims_monotone=monotone,
            claims_normalized=normalized,
            claims_nonneg=nonneg,
        )

    def value(self, idx: np.ndarray) -> float:
        activation = np.zeros(self.size_n)
        activation[idx] = 1.0
        for layer in self.layers:
            totals = layer.weights @ activation
            activation = np.array(
                [layer.concave_for(u).apply(t) for u, t in enumerate(totals)],
                dtype=float,
            )
        out = float(self.output_weights @ activation)
        if self.bias is not None:
            out += self.bias_constant + float(self.bias[idx].sum())
        return out


def build_dsf(spec: DsfSpec, ground: GroundSet | None = None) -> SetFunctionHandle:
    """
    Build a deep submodular function.

    Raises:
        SpecError: On a negative internal weight or inconsistent layer widths
    """
    return DsfOracle(spec).build(ground)


# ============================================================================
# ROUGE-N
# ============================================================================


class RougeOracle(Oracle):
    def __init__(self, spec: RougeSpec):
        super().__init__(len(spec.candidate_counts))
        grams = sorted(
            {g for counts in spec.reference_counts for g in counts}
            | {g for counts in spec.candidate_counts for g in counts}
        )
        position = {g: i for i, g in enumerate(grams)}
        self.references = np.zeros((len(spec.reference_counts), len(grams)))
        for i, counts in enumerate(spec.reference_counts):
            for g, c in counts.items():
                self.references[i, position[g]] = c
        self.candidates = np.zeros((len(spec.candidate_counts), len(grams)))
        for v, counts in enumerate(spec.candidate_counts):
            for g, c in counts.items():
                self.candidates[v, position[g]] = c
        self.denominator = float(self.references.sum())

    def get_kind(self) -> str:
        return "rouge-n"

    def validate(self) -> None:
        if self.denominator <= 0:
            raise SpecError("references contain no n-grams")
        _check_nonneg("reference counts", self.references)
        _check_nonneg("candidate counts", self.candidates)

    def flags(self) -> FunctionFlags:
        return FunctionFlags(
            claims_monotone=True, claims_normalized=True, claims_nonneg=True
        )

    def value(self, idx: np.ndarray) -> float:
        if idx.size == 0:
            return 0.0
        counts = self.candidates[idx].sum(axis=0)
        return float(np.minimum(counts, self.references).sum() / self.denominator)


def build_rouge_n(
    spec: RougeSpec, ground: GroundSet | None = None
) -> SetFunctionHandle:
    """
    Build ROUGE-N recall over candidate sentences.

    Raises:
        SpecError: If the references contain no n-grams
    """
    return RougeOracle(spec).build(ground)


# ============================================================================
# Dispatch
# ============================================================================


def build_function(
    spec: FunctionSpec, ground: GroundSet | None = None
) -> SetFunctionHandle:
    """Build a handle from any family spec."""
    match spec:
        case ModularSpec():
            return build_modular(spec, ground)
        case FeatureBasedSpec():
            return build_feature_based(spec, ground)
        case FacilityLocationSpec():
            return build_facility_location(spec, ground)
        case CoverageSpec():
            return build_coverage(spec, ground)
        case GraphCutSpec():
            return build_graph_cut(spec, ground)
        case LogDetSpec():
            return build_log_det(spec, ground)
        case DsfSpec():
            return build_dsf(spec, ground)
        case RougeSpec():
            return build_rouge_n(spec, ground)
    raise SpecError(f"Unknown function spec: {type(spec).__name__}")
