import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from absaga.digraph import DirectedGraph, complete_graph, exponential_graph, ring_graph
from absaga.errors import NumericalFailure, PreconditionError
from absaga.weights import (
    COLUMN,
    DOUBLY,
    ROW,
    StochasticMatrix,
    WeightSystem,
    column_stochastic_from_outdegree,
    contraction_factor,
    directivity,
    limit_horizon,
    limit_matrix,
    matrix_power,
    perron_left,
    perron_right,
    row_stochastic_from_indegree,
)

from conftest import A2, B2


def _solve_stationary(T):
    """Independent oracle: solve (T - I) pi = 0 with sum(pi) = 1 by least squares."""
    n = T.shape[0]
    lhs = np.vstack([T - np.eye(n), np.ones((1, n))])
    rhs = np.zeros(n + 1)
    rhs[-1] = 1.0
    return np.linalg.lstsq(lhs, rhs, rcond=None)[0]


def test_uniform_weights_complete():
    g = complete_graph(3)
    assert np.allclose(row_stochastic_from_indegree(g).entries, 1 / 3)
    assert np.allclose(column_stochastic_from_outdegree(g).entries, 1 / 3)


def test_two_ring_weights():
    g = ring_graph(2)
    for M in (row_stochastic_from_indegree(g), column_stochastic_from_outdegree(g)):
        assert np.allclose(M.entries, 0.5)


def test_exponential_four_weights():
    g = exponential_graph(4)
    A = row_stochastic_from_indegree(g).entries
    B = column_stochastic_from_outdegree(g).entries
    for i in range(4):
        expect = np.zeros(4)
        expect[[i, (i - 1) % 4, (i - 2) % 4]] = 1 / 3
        assert np.allclose(A[i], expect)
        expect = np.zeros(4)
        expect[[i, (i + 1) % 4, (i + 2) % 4]] = 1 / 3
        assert np.allclose(B[:, i], expect)


def test_weights_need_self_loops():
    g = DirectedGraph.from_edges(3, [(0, 1), (1, 2), (2, 0)])
    with pytest.raises(PreconditionError):
        row_stochastic_from_indegree(g)
    with pytest.raises(PreconditionError):
        column_stochastic_from_outdegree(g)


def test_weights_respect_edges():
    g = exponential_graph(9)
    adj = g.adjacency()
    for M in (row_stochastic_from_indegree(g), column_stochastic_from_outdegree(g)):
        assert ((M.entries > 0) == adj).all()


def test_stochastic_matrix_validation():
    with pytest.raises(ValueError):
        StochasticMatrix(np.array([[0.5, 0.6], [0.5, 0.4]]), ROW)
    with pytest.raises(ValueError):
        StochasticMatrix(A2, COLUMN)
    with pytest.raises(ValueError):
        StochasticMatrix(np.array([[1.5, -0.5], [0.0, 1.0]]), ROW)
    StochasticMatrix(np.full((3, 3), 1 / 3), DOUBLY)


def test_perron_two_by_two():
    pr = perron_left(StochasticMatrix(A2, ROW))
    pc = perron_right(StochasticMatrix(B2, COLUMN))
    assert np.allclose(pr, [2 / 3, 1 / 3], atol=1e-13)
    assert np.allclose(pc, [2 / 3, 1 / 3], atol=1e-13)
    assert np.allclose(pr, _solve_stationary(A2.T), atol=1e-13)
    assert np.allclose(pc, _solve_stationary(B2), atol=1e-13)


@pytest.mark.parametrize("g", [ring_graph(3), exponential_graph(8), complete_graph(5)])
def test_perron_circulant_uniform(g):
    w = WeightSystem.from_graph(g)
    assert np.allclose(w.pi_r, 1 / g.n, atol=1e-13)
    assert np.allclose(w.pi_c, 1 / g.n, atol=1e-13)


def test_perron_non_primitive_fails():
    # bipartite, period 2: from the uniform start the iterates alternate forever
    periodic = StochasticMatrix(np.array([[0.0, 0.5, 0.5], [1.0, 0.0, 0.0], [1.0, 0.0, 0.0]]), ROW)
    with pytest.raises(NumericalFailure):
        perron_left(periodic)


def test_contraction_uniform_is_zero():
    M = StochasticMatrix(np.full((4, 4), 0.25), ROW)
    assert contraction_factor(M, np.full(4, 0.25)) == pytest.approx(0.0, abs=1e-15)
    M = StochasticMatrix(np.full((2, 2), 0.5), DOUBLY)
    assert contraction_factor(M, np.full(2, 0.5)) == pytest.approx(0.0, abs=1e-15)


def test_contraction_two_by_two(two_node):
    lam2 = sorted(np.abs(np.linalg.eigvals(A2)))[0]
    assert lam2 == pytest.approx(0.25)
    assert two_node.sigma_A >= lam2 - 1e-12
    # the pair is reversible, so the weighted matrix is symmetric and sigma is exactly |lambda_2|
    assert two_node.sigma_A == pytest.approx(0.25, abs=1e-12)
    assert two_node.sigma_B == pytest.approx(0.25, abs=1e-12)


def test_directivity_examples():
    assert directivity(np.full(5, 0.2), np.full(5, 0.2)) == pytest.approx(1.0, abs=1e-14)
    assert directivity([2 / 3, 1 / 3], [2 / 3, 1 / 3], 2) == pytest.approx(9 / 5, rel=1e-14)
    assert directivity([2 / 3, 1 / 3], [1 / 3, 2 / 3], 2) == pytest.approx(9 / 4, rel=1e-14)


def test_matrix_power_examples():
    A = StochasticMatrix(A2, ROW)
    assert np.array_equal(matrix_power(A, 1).entries, A2)
    R = StochasticMatrix(np.full((2, 2), 0.5), DOUBLY)
    assert np.allclose(matrix_power(R, 2).entries, 0.5)
    expect = np.array([[11 / 16, 5 / 16], [5 / 8, 3 / 8]])
    assert np.allclose(matrix_power(A, 2).entries, expect, atol=1e-15)
    assert matrix_power(A, 3).kind == ROW
    with pytest.raises(ValueError):
        matrix_power(A, 0)


def test_weight_system_summary(two_node):
    s = two_node.summary()
    assert s["psi"] == pytest.approx(9 / 5)
    assert s["h_r"] == pytest.approx(2.0) and s["h_c"] == pytest.approx(2.0)
    assert s["pi_r_dot_pi_c"] == pytest.approx(5 / 9)


def test_limit_horizon():
    assert limit_horizon(0.0) == 1
    assert limit_horizon(0.5) == 30
    assert 0.9 ** limit_horizon(0.9) <= 1e-9 < 0.9 ** (limit_horizon(0.9) - 1)


def _random_strong_graph(n, extra, seed):
    rng = np.random.default_rng(seed)
    edges = [(i, (i + 1) % n) for i in range(n)] + [(i, i) for i in range(n)]
    edges += [tuple(e) for e in rng.integers(0, n, size=(extra, 2))]
    return DirectedGraph.from_edges(n, edges)


graphs = st.builds(_random_strong_graph, st.integers(2, 12), st.integers(0, 30), st.integers(0, 2**31))


@settings(max_examples=40, deadline=None)
@given(graphs, st.integers(1, 64))
def test_powers_stay_stochastic(g, c):
    w = WeightSystem.from_graph(g)
    Ac, Bc = w.mixing(c, c)
    assert np.allclose(Ac.sum(axis=1), 1.0, atol=1e-10, rtol=0)
    assert np.allclose(Bc.sum(axis=0), 1.0, atol=1e-10, rtol=0)


@settings(max_examples=40, deadline=None)
@given(graphs, st.integers(1, 8))
def test_perron_consistent_under_powers(g, c):
    w = WeightSystem.from_graph(g)
    Ac = matrix_power(w.A, c)
    Bc = matrix_power(w.B, c)
    assert np.allclose(perron_left(Ac), w.pi_r, atol=1e-9, rtol=0)
    assert np.allclose(perron_right(Bc), w.pi_c, atol=1e-9, rtol=0)
    assert np.allclose(w.pi_r, _solve_stationary(w.A.entries.T), atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(graphs, st.integers(1, 6))
def test_contraction_submultiplicative(g, k):
    w = WeightSystem.from_graph(g)
    for M, pi, sigma in ((w.A, w.pi_r, w.sigma_A), (w.B, w.pi_c, w.sigma_B)):
        assert 0 <= sigma < 1
        assert contraction_factor(matrix_power(M, k), pi) <= sigma**k + 1e-9


@settings(max_examples=40, deadline=None)
@given(graphs)
def test_limit_reached_at_horizon(g):
    w = WeightSystem.from_graph(g)
    for M, pi, sigma in ((w.A, w.pi_r, w.sigma_A), (w.B, w.pi_c, w.sigma_B)):
        K = limit_horizon(sigma)
        tail = np.abs(np.linalg.matrix_power(M.entries, K) - limit_matrix(M, pi)).max()
        assert tail <= 1e-8
    assert w.h_r >= 1 and w.h_c >= 1 and w.psi >= 1 - 1e-10


@pytest.mark.parametrize("g", [exponential_graph(16), ring_graph(7), complete_graph(6)])
def test_doubly_stochastic_directivity(g):
    w = WeightSystem.from_graph(g)
    assert w.h_r == pytest.approx(1.0, abs=1e-10)
    assert w.pi_dot == pytest.approx(1 / g.n, abs=1e-12)
    assert abs(w.psi - 1.0) <= 1e-10
