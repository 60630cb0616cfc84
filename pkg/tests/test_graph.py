import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import graph_distances, incidence
from quantpassive.exceptions import GraphError
from quantpassive.graph import (OrientedGraph, complete_graph, cycle_graph, diameter, incidence_matrix, kron,
                                laplacian_spectrum, path_graph, random_connected_graph, ratio_rho, star_graph)


@st.composite
def connected_graphs(draw, max_nodes=10):
    n = draw(st.integers(2, max_nodes))
    seed = draw(st.integers(0, 2**32 - 1))
    prob = draw(st.floats(0.0, 1.0))
    return random_connected_graph(n, prob, np.random.default_rng(seed))


def test_incidence_matrix_columns():
    D = incidence_matrix(path_graph(3))
    assert D.tolist() == [[1, 0], [-1, 1], [0, -1]]


def test_edge_orientation_gives_relative_position():
    g = OrientedGraph(3, ((2, 0), (1, 2)))
    x = np.array([1.0, 4.0, 9.0])
    assert (incidence_matrix(g).T @ x).tolist() == [8.0, -5.0]


@given(connected_graphs())
def test_incidence_matches_oracle_and_columns_sum_to_zero(g):
    D = incidence_matrix(g)
    assert np.array_equal(D, incidence(g.num_nodes, g.edges))
    assert np.all(D.sum(axis=0) == 0)
    assert np.all(np.abs(D).sum(axis=0) == 2)


@given(connected_graphs())
def test_laplacian_spectrum_properties(g):
    D = incidence_matrix(g)
    spec = laplacian_spectrum(D)
    L = D @ D.T
    assert spec.eigenvalues[0] == 0.0
    assert spec.lambda2 > 0
    assert np.all(np.diff(spec.eigenvalues) >= -1e-12)
    V = spec.eigenvectors
    assert np.allclose(V.T @ V, np.eye(g.num_nodes), atol=1e-10)
    assert np.allclose(L @ V, V * spec.eigenvalues, atol=1e-9)
    assert spec.lambdaN <= 2 * g.degrees().max() + 1e-9


@given(connected_graphs(), st.integers(0, 50))
def test_spectrum_invariant_under_edge_flip(g, k):
    k = k % g.num_edges
    a = laplacian_spectrum(incidence_matrix(g)).eigenvalues
    b = laplacian_spectrum(incidence_matrix(g.flipped(k))).eigenvalues
    assert np.allclose(a, b, atol=1e-12)


@given(connected_graphs())
def test_distances_and_diameter_match_floyd_warshall(g):
    ref = graph_distances(g.num_nodes, g.edges)
    assert np.array_equal(g.distances(), ref.astype(int))
    assert diameter(g) == int(ref.max())


@pytest.mark.parametrize("g, lam2, lamN", [
    (complete_graph(5), 5.0, 5.0),
    (path_graph(3), 1.0, 3.0),
    (cycle_graph(6), 1.0, 4.0),
    (star_graph(4), 1.0, 5.0),
])
def test_known_spectra(g, lam2, lamN):
    spec = laplacian_spectrum(incidence_matrix(g))
    assert spec.lambda2 == pytest.approx(lam2, abs=1e-12)
    assert spec.lambdaN == pytest.approx(lamN, abs=1e-12)


def test_cycle_lambda2_closed_form():
    for n in (6, 10, 14):
        lam2 = laplacian_spectrum(incidence_matrix(cycle_graph(n))).lambda2
        assert lam2 == pytest.approx(2 - 2 * math.cos(2 * math.pi / n), abs=1e-12)


def test_diameters():
    assert diameter(path_graph(3)) == 2
    assert diameter(cycle_graph(6)) == 3
    assert diameter(complete_graph(5)) == 1


def test_disconnected_graph_rejected():
    g = OrientedGraph(4, ((0, 1), (2, 3)))
    assert not g.is_connected()
    with pytest.raises(GraphError):
        laplacian_spectrum(incidence_matrix(g))
    with pytest.raises(GraphError):
        g.require_connected()


@pytest.mark.parametrize("edges", [((0, 0),), ((0, 1), (1, 0)), ((0, 5),)])
def test_invalid_edges_rejected(edges):
    with pytest.raises(GraphError):
        OrientedGraph(3, edges)


def test_single_node_has_no_spectrum():
    with pytest.raises(GraphError):
        laplacian_spectrum(np.zeros((1, 0)))


def test_ratio_rho_cycle():
    # D^T D of a cycle shares its nonzero spectrum with the Laplacian
    n = 6
    expected = 4.0 / (2 - 2 * math.cos(2 * math.pi / n))
    assert ratio_rho(incidence_matrix(cycle_graph(n))) == pytest.approx(expected, rel=1e-12)


def test_kron_matches_definition():
    A = np.array([[1.0, 2.0], [3.0, 4.0]])
    B = np.array([[0.0, 1.0], [1.0, 0.0]])
    K = kron(A, B)
    for i in range(2):
        for j in range(2):
            assert np.array_equal(K[2 * i:2 * i + 2, 2 * j:2 * j + 2], A[i, j] * B)


@given(connected_graphs(max_nodes=7), st.integers(1, 3))
def test_kron_incidence_relative_positions(g, p):
    rng = np.random.default_rng(0)
    x = rng.standard_normal((g.num_nodes, p))
    z = (kron(incidence_matrix(g).T, np.eye(p)) @ x.reshape(-1)).reshape(g.num_edges, p)
    for k, (i, j) in enumerate(g.edges):
        assert np.allclose(z[k], x[i] - x[j])
