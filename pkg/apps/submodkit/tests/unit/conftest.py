"""Shared fixtures for unit tests"""

import numpy as np
import pytest

from src.core import GroundSet, ModularWeights, modular_handle
from src.schemas import ConcaveSpec, DsfLayer, DsfSpec, GraphCutSpec
from src.zoo import build_dsf, build_facility_location, build_graph_cut


@pytest.fixture
def rng():
    return np.random.default_rng(7)


@pytest.fixture
def fl_small(rng):
    """Facility location over a random 6x6 similarity matrix"""
    return build_facility_location(rng.uniform(0.0, 1.0, size=(6, 6)))


@pytest.fixture
def modular_small():
    return modular_handle(ModularWeights(weights=(3.0, 1.0, 2.0, 0.5)))


@pytest.fixture
def two_component_cut():
    """Classic cut of two disjoint triangles {0, 1, 2} and {3, 4, 5}"""
    w = np.zeros((6, 6))
    for block in ((0, 1, 2), (3, 4, 5)):
        for i in block:
            for j in block:
                if i != j:
                    w[i, j] = 1.0
    return build_graph_cut(GraphCutSpec(edge_weights=w))


@pytest.fixture
def dsf_small():
    """Two-layer deep submodular function over 6 elements"""
    spec = DsfSpec(
        layers=[
            DsfLayer(
                weights=[
                    [1, 1, 0, 0, 0, 1],
                    [0, 1, 1, 1, 0, 0],
                    [0, 0, 0, 1, 1, 1],
                ],
                concave=[ConcaveSpec(kind="sqrt")],
            ),
            DsfLayer(weights=[[1, 2, 1], [0, 1, 1]], concave=[ConcaveSpec(kind="log1p")]),
        ],
        output_weights=[1.0, 0.5],
    )
    return build_dsf(spec, GroundSet(size_n=6, labels=tuple("abcdef")))
