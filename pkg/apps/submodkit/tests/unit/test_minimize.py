"""Unit tests for minimize module"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from pydantic import ValidationError

from src.analysis import brute_force_opt, value_table
from src.core import (
    GroundSet,
    Mixture,
    ModularWeights,
    SetFunctionHandle,
    Subset,
    derive_transform,
    modular_handle,
    symmetric_information,
)
from src.minimize import (
    MinimizationError,
    NonConvergenceError,
    PermutationChain,
    SymmetryError,
    base_vertex,
    ds_minimize,
    lovasz_extension,
    min_norm_point,
    queyranne_minimize,
    verify_symmetry,
)
from src.schemas import ConcaveSpec, FeatureBasedSpec, GraphCutSpec
from src.zoo import build_facility_location, build_feature_based, build_graph_cut


def _random_submodular(seed, n=6):
    """Facility location plus feature-based plus a signed modular term"""
    rng = np.random.default_rng(seed)
    ground = GroundSet.of_size(n)
    fl = build_facility_location(rng.uniform(0.0, 1.0, size=(n, n)), ground)
    fb = build_feature_based(
        FeatureBasedSpec(
            weights=rng.uniform(0.0, 1.0, size=(3, n)), concave=[ConcaveSpec(kind="sqrt")]
        ),
        ground,
    )
    m = modular_handle(ModularWeights(weights=rng.uniform(-1.5, 0.5, size=n)), ground)
    return derive_transform(fl, Mixture(components=[(1.0, fl), (1.0, fb), (1.0, m)]))


def _proper_minimum(f):
    table = value_table(f)
    return float(table[1:-1].min())


class TestPermutationChain:
    """Tests for PermutationChain"""

    def test_descending_is_stable(self):
        """Test ties keep index order"""
        chain = PermutationChain.descending(np.array([1.0, 3.0, 3.0, 0.0]))
        assert chain.order == (1, 2, 0, 3)
        assert chain.prefix_bits() == [0, 0b10, 0b110, 0b111, 0b1111]

    def test_not_a_permutation(self):
        """Test repeated indices are rejected"""
        with pytest.raises(ValidationError):
            PermutationChain(order=(0, 0, 1))


class TestLovaszExtension:
    """Tests for lovasz_extension and base_vertex"""

    def test_vertex_tightness(self, fl_small):
        """Test f̂(1_A) = f(A) on every vertex of the cube"""
        table = value_table(fl_small)
        for bits in range(1 << fl_small.size_n):
            x = Subset(fl_small.ground, bits).mask().astype(float)
            value, _, _ = lovasz_extension(fl_small, x)
            assert value == pytest.approx(table[bits], abs=1e-12)

    def test_convexity(self, fl_small, rng):
        """Test f̂ is convex along random segments"""
        for _ in range(200):
            x, y = rng.normal(size=6), rng.normal(size=6)
            theta = rng.uniform()
            mixed, _, _ = lovasz_extension(fl_small, theta * x + (1 - theta) * y)
            fx, _, _ = lovasz_extension(fl_small, x)
            fy, _, _ = lovasz_extension(fl_small, y)
            assert mixed <= theta * fx + (1 - theta) * fy + 1e-9

    def test_positive_homogeneity(self, fl_small, rng):
        """Test f̂(cx) = c f̂(x) for c >= 0"""
        x = rng.normal(size=6)
        value, _, _ = lovasz_extension(fl_small, x)
        scaled, _, _ = lovasz_extension(fl_small, 2.5 * x)
        assert scaled == pytest.approx(2.5 * value, rel=1e-12)

    def test_inner_product_with_vertex(self, fl_small, rng):
        """Test <x, y_sigma> = f̂(x) when sigma sorts x"""
        for _ in range(20):
            x = rng.normal(size=6)
            value, _, chain = lovasz_extension(fl_small, x)
            assert float(x @ base_vertex(fl_small, chain).point) == pytest.approx(value, abs=1e-9)

    @given(st.lists(st.floats(-10, 10), min_size=4, max_size=4))
    @settings(max_examples=50)
    def test_modular_is_linear(self, x):
        """Test the extension of a normalized modular function is w . x"""
        w = np.array([1.0, -2.0, 0.5, 3.0])
        f = modular_handle(ModularWeights(weights=w))
        value, _, _ = lovasz_extension(f, x)
        assert value == pytest.approx(float(w @ np.array(x)), abs=1e-9)

    def test_sqrt_cardinality_vertex(self):
        """Test y = (1, sqrt 2 - 1) for sqrt|A| along (0, 1)"""
        f = SetFunctionHandle(GroundSet.of_size(2), lambda A: math.sqrt(len(A)))
        vertex = base_vertex(f, PermutationChain(order=(0, 1)))
        np.testing.assert_allclose(vertex.point, [1.0, math.sqrt(2.0) - 1.0])

    def test_vertex_sums_to_full_value(self, fl_small):
        """Test y(V) = f(V) for any chain"""
        vertex = base_vertex(fl_small, PermutationChain(order=(5, 3, 1, 0, 2, 4)))
        assert vertex.point.sum() == pytest.approx(fl_small(fl_small.full()))


class TestMinNormPoint:
    """Tests for min_norm_point"""

    def test_modular(self):
        """Test x* = m and min_set = negative support"""
        f = modular_handle(ModularWeights(weights=(1.0, -2.0, 0.5, -0.1)))
        certificate = min_norm_point(f)

        assert certificate.min_set == [1, 3]
        assert certificate.min_value == pytest.approx(-2.1)
        np.testing.assert_allclose(certificate.norm_point, [1.0, -2.0, 0.5, -0.1])
        assert certificate.duality_gap == pytest.approx(0.0, abs=1e-9)

    def test_graph_cut_minimum_is_zero(self, two_component_cut):
        """Test a normalized cut attains 0 at the empty set"""
        certificate = min_norm_point(two_component_cut)
        assert certificate.min_value == pytest.approx(0.0, abs=1e-9)
        assert certificate.min_set == []

    @pytest.mark.parametrize("seed", range(100))
    def test_matches_brute_force(self, seed):
        """Test the minimum equals exhaustive search for n from 8 to 12"""
        f = _random_submodular(seed, n=8 + seed % 5)
        certificate = min_norm_point(f)
        best = brute_force_opt(f, sense="min")

        assert certificate.min_value == pytest.approx(best.value, abs=1e-6)
        assert f(certificate.subset(f)) == pytest.approx(certificate.min_value)
        assert -1e-6 <= certificate.duality_gap <= 1e-5

    def test_shifts_non_normalized(self):
        """Test f(∅) != 0 is handled by shifting"""
        f = modular_handle(ModularWeights(weights=(1.0, -1.0), constant=5.0))
        certificate = min_norm_point(f)
        assert certificate.min_set == [1]
        assert certificate.min_value == pytest.approx(4.0)

    def test_iteration_cap(self, two_component_cut):
        """Test the cap raises with a best-so-far certificate"""
        with pytest.raises(NonConvergenceError) as info:
            min_norm_point(two_component_cut, max_iterations=1)
        assert info.value.certificate.iterations == 1


class TestQueyranne:
    """Tests for queyranne_minimize"""

    def test_two_components(self, two_component_cut):
        """Test a component with cut value 0 is returned"""
        certificate = queyranne_minimize(two_component_cut)
        assert certificate.min_value == pytest.approx(0.0)
        assert certificate.min_set in ([0, 1, 2], [3, 4, 5])

    def test_single_edge(self):
        """Test two nodes joined by weight w"""
        w = np.array([[0.0, 2.5], [2.5, 0.0]])
        certificate = queyranne_minimize(build_graph_cut(GraphCutSpec(edge_weights=w)))
        assert certificate.min_value == pytest.approx(2.5)
        assert certificate.min_set in ([0], [1])

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_brute_force(self, seed):
        """Test symmetric information functions against proper-subset search"""
        rng = np.random.default_rng(100 + seed)
        fl = build_facility_location(rng.uniform(0.0, 1.0, size=(7, 7)))
        f = symmetric_information(fl)
        certificate = queyranne_minimize(f)

        assert certificate.min_value == pytest.approx(_proper_minimum(f), abs=1e-9)
        assert 0 < len(certificate.min_set) < 7

    @pytest.mark.parametrize("n", [10, 20, 30, 40])
    def test_cubic_oracle_calls(self, n):
        """Test a phase over g groups costs g(g - 1) + 1 calls, (n^3 - n)/3 + n - 1 overall"""
        rng = np.random.default_rng(n)
        w = np.triu(rng.uniform(0.0, 1.0, size=(n, n)), 1)
        f = build_graph_cut(GraphCutSpec(edge_weights=w + w.T))
        certificate = queyranne_minimize(f)

        assert certificate.iterations == n - 1
        assert certificate.oracle_calls == (n**3 - n) // 3 + n - 1
        assert certificate.oracle_calls <= n**3

    def test_agrees_with_min_norm_on_proper_subsets(self, rng):
        """Test Queyranne matches exhaustive search where min-norm sees ∅"""
        w = rng.uniform(0.0, 1.0, size=(6, 6))
        w = w + w.T
        np.fill_diagonal(w, 0.0)
        f = build_graph_cut(GraphCutSpec(edge_weights=w))
        assert queyranne_minimize(f).min_value == pytest.approx(_proper_minimum(f))
        assert min_norm_point(f).min_value == pytest.approx(0.0, abs=1e-9)

    def test_not_symmetric(self, fl_small):
        """Test a monotone function fails the symmetry check"""
        with pytest.raises(SymmetryError):
            queyranne_minimize(fl_small)

    def test_needs_two_elements(self):
        """Test n = 1 is rejected"""
        f = build_facility_location(np.ones((1, 1)))
        with pytest.raises(MinimizationError):
            queyranne_minimize(f)

    def test_verify_symmetry_accepts_cut(self, two_component_cut):
        """Test a cut passes the sampled symmetry check"""
        verify_symmetry(two_component_cut, samples=16, seed=1)


class TestDsMinimize:
    """Tests for ds_minimize"""

    def test_zero_g_reduces_to_min_norm(self):
        """Test g = 0 gives the min-norm result"""
        f = _random_submodular(3)
        zero = modular_handle(ModularWeights(weights=[0.0] * 6), f.ground)
        trace = ds_minimize(f, zero, f.empty(), seed=0)
        assert trace.value == pytest.approx(min_norm_point(f).min_value, abs=1e-6)

    def test_zero_f_returns_positive_support(self):
        """Test f = 0 and modular g selects the positive weights"""
        ground = GroundSet.of_size(4)
        zero = modular_handle(ModularWeights(weights=[0.0] * 4), ground)
        g = modular_handle(ModularWeights(weights=(1.0, -1.0, 2.0, 0.0)), ground)
        trace = ds_minimize(zero, g, Subset.empty(ground), seed=0)
        assert trace.min_set == [0, 2]
        assert trace.value == pytest.approx(-3.0)

    @pytest.mark.parametrize("seed", range(5))
    def test_trace_nonincreasing(self, seed):
        """Test h never increases along the iterates"""
        rng = np.random.default_rng(seed)
        f = _random_submodular(seed)
        g = build_facility_location(rng.uniform(0.0, 1.0, size=(6, 6)), f.ground)
        start = f.subset([0, 1])
        trace = ds_minimize(f, g, start, seed=seed)

        assert all(b <= a + 1e-12 for a, b in zip(trace.trace, trace.trace[1:]))
        assert trace.value <= f(start) - g(start) + 1e-12
        assert trace.value == pytest.approx(
            f(f.subset(trace.min_set)) - g(g.subset(trace.min_set))
        )
