"""Unit tests for zoo module"""

import math

import numpy as np
import pytest
from pydantic import ValidationError

from src.analysis import check_monotone, check_submodular, value_table
from src.core import GroundSet, Subset
from src.schemas import (
    ConcaveSpec,
    CoverageSpec,
    DsfLayer,
    DsfSpec,
    FacilityLocationSpec,
    FeatureBasedSpec,
    GraphCutSpec,
    LogDetSpec,
    ModularSpec,
    RougeSpec,
    SimilarityMatrix,
    SpecError,
    ngram_counts,
)
from src.zoo import (
    NotPositiveDefiniteError,
    build_coverage,
    build_dsf,
    build_facility_location,
    build_feature_based,
    build_function,
    build_graph_cut,
    build_log_det,
    build_rouge_n,
    facility_location_as_feature_based,
)

PATH_EDGES = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0, 0.0]])


def _nested_cap_spec():
    """Two capped overlapping groups {a, b, c, d} and {c, d, e, f} under an outer cap"""
    return DsfSpec(
        layers=[
            DsfLayer(
                weights=[[1, 1, 1, 1, 0, 0], [0, 0, 1, 1, 1, 1]],
                concave=[ConcaveSpec(kind="min_cap", cap=3.0)],
            ),
            DsfLayer(weights=[[1, 1]], concave=[ConcaveSpec(kind="min_cap", cap=5.0)]),
        ],
        output_weights=[1.0],
    )


class TestConcaveSpec:
    """Tests for the concave family"""

    @pytest.mark.parametrize(
        "spec,x,expected",
        [
            ({"kind": "sqrt"}, 4.0, 2.0),
            ({"kind": "power", "p": 0.5}, 9.0, 3.0),
            ({"kind": "log1p"}, math.e - 1, 1.0),
            ({"kind": "min_cap", "cap": 2.0}, 5.0, 2.0),
            ({"kind": "one_minus_exp", "scale": 1.0}, 0.0, 0.0),
        ],
    )
    def test_apply(self, spec, x, expected):
        """Test each concave kind"""
        assert float(ConcaveSpec(**spec).apply(x)) == pytest.approx(expected)

    @pytest.mark.parametrize(
        "spec",
        [
            {"kind": "power", "p": 1.5},
            {"kind": "power"},
            {"kind": "min_cap", "cap": -1.0},
            {"kind": "one_minus_exp", "scale": 0.0},
            {"kind": "cube"},
        ],
    )
    def test_invalid_parameters(self, spec):
        """Test parameters outside the concave family are rejected"""
        with pytest.raises(ValidationError):
            ConcaveSpec(**spec)


class TestFacilityLocation:
    """Tests for facility location"""

    def test_values(self):
        """Test f(A) = sum_v max_{a in A} sim(a, v)"""
        f = build_facility_location(np.array([[1.0, 0.5], [0.5, 1.0]]))
        assert f(f.empty()) == 0.0
        assert f(f.subset([0])) == 1.5
        assert f(f.full()) == 2.0
        assert f.flags.polymatroid

    def test_accepts_spec_types(self):
        """Test SimilarityMatrix and FacilityLocationSpec inputs agree"""
        sim = [[1.0, 0.2], [0.3, 1.0]]
        a = build_facility_location(SimilarityMatrix(entries=sim))
        b = build_facility_location(FacilityLocationSpec(similarity=sim))
        assert a(a.subset([1])) == b(b.subset([1]))

    def test_negative_similarity(self):
        """Test negative entries are rejected"""
        with pytest.raises(SpecError):
            build_facility_location(np.array([[1.0, -0.1], [0.0, 1.0]]))

    def test_not_square(self):
        """Test a rectangular matrix is rejected"""
        with pytest.raises(SpecError):
            build_facility_location(np.ones((2, 3)))

    def test_ground_size_mismatch(self):
        """Test the ground set must match the matrix"""
        with pytest.raises(SpecError):
            build_facility_location(np.eye(3), GroundSet.of_size(4))

    def test_feature_based_rewrite_matches(self, rng):
        """Test the min-cap feature rewrite agrees on every subset"""
        sim = rng.uniform(0.0, 1.0, size=(4, 4))
        f = build_facility_location(sim)
        g = build_feature_based(facility_location_as_feature_based(sim))
        np.testing.assert_allclose(value_table(f), value_table(g), atol=1e-9)


class TestFeatureBased:
    """Tests for feature-based functions"""

    def test_values_with_bias(self):
        """Test sum of concave feature totals plus a modular bias"""
        spec = FeatureBasedSpec(
            weights=[[1.0, 3.0, 0.0], [0.0, 1.0, 1.0]],
            concave=[ConcaveSpec(kind="sqrt")],
            bias={"weights": [0.0, -1.0, 0.0]},
        )
        f = build_feature_based(spec)
        assert f(f.subset([0, 1])) == pytest.approx(2.0 + 1.0 - 1.0)
        assert not f.flags.claims_monotone

    def test_concave_count_mismatch(self):
        """Test the concave list must have 1 or U entries"""
        spec = FeatureBasedSpec(
            weights=np.ones((3, 2)),
            concave=[ConcaveSpec(kind="sqrt"), ConcaveSpec(kind="log1p")],
        )
        with pytest.raises(SpecError):
            build_feature_based(spec)


class TestCoverage:
    """Tests for probabilistic coverage"""

    def test_set_cover(self):
        """Test 0/1 memberships count covered concepts"""
        f = build_coverage(
            CoverageSpec(membership_prob=[[1, 0, 0], [1, 1, 0], [0, 0, 1]])
        )
        assert f(f.subset([0])) == 2.0
        assert f(f.subset([0, 1])) == 2.0
        assert f(f.full()) == 3.0

    def test_probabilistic(self):
        """Test 1 - prod(1 - p) coverage with concept weights"""
        f = build_coverage(
            CoverageSpec(membership_prob=[[0.5, 0.5]], concept_weights=[2.0])
        )
        assert f(f.full()) == pytest.approx(1.5)

    def test_probability_out_of_range(self):
        """Test memberships must lie in [0, 1]"""
        with pytest.raises(SpecError):
            build_coverage(CoverageSpec(membership_prob=[[1.5, 0.0]]))


class TestGraphCut:
    """Tests for the generalized graph cut"""

    def test_classic_cut(self):
        """Test lambda = alpha = 1 is the cut function of a path"""
        f = build_graph_cut(GraphCutSpec(edge_weights=PATH_EDGES))
        assert f(f.subset([0])) == 1.0
        assert f(f.subset([1])) == 2.0
        assert f(f.subset([0, 1])) == 1.0
        assert f(f.full()) == 0.0
        assert f.flags.claims_symmetric

    def test_lambda_zero_is_modular_and_monotone(self):
        """Test lambda = 0 gives the node-weight sum"""
        f = build_graph_cut(GraphCutSpec(edge_weights=PATH_EDGES, lam=0.0))
        assert f(f.subset([0, 1])) == 3.0
        assert f.flags.claims_monotone
        assert check_monotone(f).verdict

    def test_lambda_alias(self):
        """Test documents spell lambda as 'lambda'"""
        spec = GraphCutSpec.model_validate({"edge_weights": PATH_EDGES, "lambda": 0.5})
        assert spec.lam == 0.5

    def test_generalized_is_submodular(self, rng):
        """Test a random (lambda, alpha) instance passes the checker"""
        w = rng.uniform(0.0, 1.0, size=(6, 6))
        w = w + w.T
        np.fill_diagonal(w, 0.0)
        f = build_graph_cut(GraphCutSpec(edge_weights=w, lam=0.5, alpha=0.7))
        assert check_submodular(f).verdict

    @pytest.mark.parametrize(
        "overrides",
        [{"lam": -1.0}, {"alpha": 1.5}, {"edge_weights": np.eye(3)}],
    )
    def test_invalid(self, overrides):
        """Test negative lambda, alpha outside [0, 1] and self-loops"""
        params = {"edge_weights": PATH_EDGES, **overrides}
        with pytest.raises(SpecError):
            build_graph_cut(GraphCutSpec(**params))


class TestLogDet:
    """Tests for log-determinant"""

    def test_diagonal_kernel(self):
        """Test f(X) = |X| log 2 for 2I"""
        f = build_log_det(LogDetSpec(matrix=2.0 * np.eye(3)))
        assert f(f.empty()) == 0.0
        assert f(f.subset([0, 2])) == pytest.approx(2 * math.log(2.0))

    def test_not_positive_definite(self):
        """Test a singular kernel fails the Cholesky check"""
        with pytest.raises(NotPositiveDefiniteError):
            build_log_det(LogDetSpec(matrix=[[1.0, 1.0], [1.0, 1.0]]))

    def test_not_symmetric(self):
        """Test an asymmetric kernel is rejected"""
        with pytest.raises(SpecError):
            build_log_det(LogDetSpec(matrix=[[2.0, 0.5], [0.0, 2.0]]))

    def test_correlated_pair_not_monotone(self):
        """Test rho = 0.9 gives f(V) = log 0.19 below f({0}) = 0"""
        f = build_log_det(LogDetSpec(matrix=[[1.0, 0.9], [0.9, 1.0]]))
        assert f(f.subset([0])) == pytest.approx(0.0)
        assert f(f.full()) == pytest.approx(math.log(0.19))
        assert not f.flags.claims_monotone

        report = check_monotone(f)
        assert not report.verdict
        assert len(report.violations) == 2
        assert all(
            v.deficit == pytest.approx(-math.log(0.19)) for v in report.violations
        )
        assert check_submodular(f).verdict

    def test_submodular(self, rng):
        """Test a random PD kernel passes the checker"""
        X = rng.normal(size=(5, 8))
        f = build_log_det(LogDetSpec(matrix=X @ X.T + 0.1 * np.eye(5)))
        assert check_submodular(f).verdict


class TestDsf:
    """Tests for deep submodular functions"""

    def test_single_layer(self):
        """Test one sqrt layer with unit output weights"""
        spec = DsfSpec(
            layers=[
                DsfLayer(weights=[[1, 1, 0], [0, 1, 1]], concave=[ConcaveSpec(kind="sqrt")])
            ],
            output_weights=[1.0, 1.0],
        )
        f = build_dsf(spec)
        assert f(f.subset([1])) == pytest.approx(2.0)
        assert f(f.subset([0, 1])) == pytest.approx(math.sqrt(2.0) + 1.0)

    def test_two_layers_submodular_monotone(self, dsf_small):
        """Test nested concave layers stay monotone submodular"""
        assert check_submodular(dsf_small).verdict
        assert check_monotone(dsf_small).verdict
        assert dsf_small.ground.labels == tuple("abcdef")

    def test_counterexample_values(self):
        """Test min(min(|A ∩ abcd|, 3) + min(|A ∩ cdef|, 3), 5) as two min_cap layers"""
        f = build_dsf(_nested_cap_spec(), GroundSet(size_n=6, labels=tuple("abcdef")))

        assert f(f.full()) == pytest.approx(5.0)
        assert f(f.subset([0, 1])) == pytest.approx(2.0)
        assert f(f.subset([2, 3])) == pytest.approx(4.0)
        assert f(f.subset([0, 1, 2, 3])) == pytest.approx(5.0)

    def test_counterexample_is_polymatroid(self):
        """Test the nested-cap function passes both exhaustive checks"""
        f = build_dsf(_nested_cap_spec())
        assert f.flags.claims_monotone
        assert check_submodular(f).verdict
        assert check_monotone(f).verdict

    def test_width_mismatch(self):
        """Test layer widths must chain"""
        spec = DsfSpec(
            layers=[
                DsfLayer(weights=np.ones((2, 3)), concave=[ConcaveSpec(kind="sqrt")]),
                DsfLayer(weights=np.ones((1, 4)), concave=[ConcaveSpec(kind="sqrt")]),
            ],
            output_weights=[1.0],
        )
        with pytest.raises(SpecError):
            build_dsf(spec)

    def test_negative_weight(self):
        """Test internal weights must be nonnegative"""
        spec = DsfSpec(
            layers=[DsfLayer(weights=[[1.0, -1.0]], concave=[ConcaveSpec(kind="sqrt")])],
            output_weights=[1.0],
        )
        with pytest.raises(SpecError):
            build_dsf(spec)


class TestRouge:
    """Tests for ROUGE-N"""

    def test_unigram_recall(self):
        """Test clipped unigram recall against one reference"""
        spec = RougeSpec.from_texts(
            ["the cat sat", "on the mat"], ["the cat sat on the mat"], ngram_size=1
        )
        f = build_rouge_n(spec)
        assert f(f.subset([0])) == pytest.approx(0.5)
        assert f(f.full()) == pytest.approx(1.0)

    def test_ngram_counts(self):
        """Test lowercased bigram counts"""
        assert ngram_counts("A b a b", 2) == {"a b": 2, "b a": 1}

    def test_empty_reference(self):
        """Test references without n-grams are rejected"""
        spec = RougeSpec(reference_counts=[{}], candidate_counts=[{"a": 1}])
        with pytest.raises(SpecError):
            build_rouge_n(spec)


class TestBuildFunction:
    """Tests for build_function dispatch"""

    def test_modular(self):
        """Test a modular spec builds a modular handle"""
        f = build_function(ModularSpec(weights=[1.0, 2.0], constant=0.5))
        assert f(Subset.full(f.ground)) == 3.5
        assert not f.flags.claims_normalized
