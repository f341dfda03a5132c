import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from aerlab.generators import cycle_interval, interval_line
from aerlab.graph import (INF, AxiomViolation, FiniteGraph, GraphError, Measure, ball,
                          ball_masses, check_axioms, check_measure_axiom, doubling_constant,
                          format_edge_list, graph_distance, read_edge_list, ruzsa_cover,
                          weak_fubini)

from conftest import small_graphs
import oracles


def cycle(N, w=1):
    return cycle_interval(N, w).graph


# -- construction ---------------------------------------------------------


def test_from_edges_symmetrises_and_adds_loops():
    g = FiniteGraph.from_edges(3, [(0, 1)])
    assert g.normalized
    assert list(g.neighbors(0)) == [0, 1]
    assert list(g.neighbors(1)) == [0, 1]
    assert list(g.neighbors(2)) == [2]
    g.audit()


def test_already_normal_input_not_flagged():
    A = np.eye(3, dtype=bool)
    A[0, 1] = A[1, 0] = True
    assert not FiniteGraph.from_adjacency(A).normalized


def test_out_of_range_edge_rejected():
    with pytest.raises(GraphError):
        FiniteGraph.from_edges(3, [(0, 3)])


@given(small_graphs())
def test_graph_invariants(data):
    n, edges = data
    g = FiniteGraph.from_edges(n, edges)
    for u in range(n):
        nb = list(g.neighbors(u))
        assert u in nb
        assert nb == sorted(set(nb))
        assert all(0 <= v < n for v in nb)
        for v in nb:
            assert u in g.neighbors(v)


# -- balls and distances ----------------------------------------------------


def test_ball_examples():
    assert ball(FiniteGraph.complete(5), 0, 1) == {0, 1, 2, 3, 4}
    assert ball(cycle(12), 0, 2) == {10, 11, 0, 1, 2}
    assert ball(cycle(12), 3, 0) == {3}


def test_distance_examples():
    g = cycle(12)
    assert graph_distance(g, 0, 0) == 0
    assert graph_distance(g, 0, 5) == 5
    two = FiniteGraph.from_edges(4, [(0, 1), (2, 3)])
    assert graph_distance(two, 0, 3) == INF


@given(small_graphs())
def test_distance_matches_bfs_and_is_a_metric(data):
    n, edges = data
    g = FiniteGraph.from_edges(n, edges)
    adj = oracles.nbr_sets(n, edges)
    D = g.distances()
    for a in range(n):
        ref = oracles.bfs_dist(adj, a)
        for b in range(n):
            assert D[a, b] == ref.get(b, math.inf)
            assert graph_distance(g, a, b) == graph_distance(g, b, a)
    for a in range(n):
        for b in range(n):
            for c in range(n):
                assert D[a, c] <= D[a, b] + D[b, c]


@given(small_graphs(), st.integers(0, 4))
def test_balls_nested(data, r):
    n, edges = data
    g = FiniteGraph.from_edges(n, edges)
    for a in range(n):
        assert ball(g, a, r) <= ball(g, a, r + 1)


# -- doubling -----------------------------------------------------------------


def test_doubling_examples():
    for g in (FiniteGraph.complete(6), FiniteGraph.identity(6)):
        r = doubling_constant(g)
        assert (r.k_lower, r.k_upper) == (1, 1)
    for N in (7, 12, 30):
        r = doubling_constant(cycle(N))
        assert (r.k_lower, r.k_upper) == (2, 2)


@given(small_graphs(max_n=8))
def test_doubling_exact_matches_exhaustive_cover(data):
    n, edges = data
    g = FiniteGraph.from_edges(n, edges)
    adj = oracles.nbr_sets(n, edges)
    r = doubling_constant(g)
    for a in range(n):
        lo, up = r.per_vertex[a]
        assert r.exact[a]
        assert up == oracles.min_cover_size(adj, a) == lo


@given(small_graphs())
def test_doubling_witnesses_cover(data):
    n, edges = data
    g = FiniteGraph.from_edges(n, edges)
    r = doubling_constant(g, exact_threshold=0)
    for a in range(n):
        covered = set().union(*(ball(g, c, 1) for c in r.witnesses[a]))
        assert covered >= ball(g, a, 2)
        lo, up = r.per_vertex[a]
        assert lo <= up == len(r.witnesses[a])


@pytest.mark.parametrize("g", [cycle(40, 2), interval_line(30, 2).graph, FiniteGraph.complete(5)])
def test_ruzsa_growth(g):
    k = doubling_constant(g).k_upper
    for a in range(g.n):
        one = len(ball(g, a, 1))
        for r in range(1, 5):
            assert len(ball(g, a, r)) <= one * k ** (r - 1)


def test_ruzsa_cover_examples():
    g = cycle(12)
    centers = ruzsa_cover(g, 0, 3)
    assert len(centers) == 3
    covered = set().union(*(ball(g, c, 2) for c in centers))
    assert covered >= {9, 10, 11, 0, 1, 2, 3}
    assert ruzsa_cover(FiniteGraph.complete(6), 2, 3) == [2]
    assert ruzsa_cover(FiniteGraph.identity(6), 4, 3) == [4]


# -- measure ------------------------------------------------------------------


def test_measure_modes():
    g = cycle(12)
    mu = Measure.build(g)
    assert mu.unit == Fraction(1, 12)
    assert mu.mass_exact(range(12)) == 1
    loc = Measure.build(g, mode="local")
    assert loc.unit == Fraction(1, 3)
    assert all(m == 1 for m in ball_masses(g, loc))
    with pytest.raises(GraphError):
        Measure.build(g, weights=[0.0] * 12)
    with pytest.raises(GraphError):
        Measure.build(g, weights=[-1.0] + [1.0] * 11)


def test_measure_axiom_examples():
    assert check_measure_axiom(FiniteGraph.complete(5), Measure.build(FiniteGraph.complete(5))) == (1, 1)
    g = cycle(12)
    assert check_measure_axiom(g, Measure.build(g)) == (4, Fraction(7, 12))
    g = FiniteGraph.identity(10)
    assert check_measure_axiom(g, Measure.build(g)) == (10, Fraction(1, 10))


def test_zero_mass_neighbourhood_names_vertex():
    g = FiniteGraph.identity(3)
    mu = Measure.build(g, weights=[1.0, 0.0, 1.0])
    with pytest.raises(AxiomViolation) as err:
        check_measure_axiom(g, mu)
    assert err.value.vertex == 1


def test_transitive_inputs_have_constant_per_vertex_quantities():
    g = cycle(30, 2)
    mu = Measure.build(g)
    assert len(set(ball_masses(g, mu, 1))) == 1
    assert len({len(ball(g, a, 3)) for a in range(g.n)}) == 1


# -- weak Fubini -------------------------------------------------------------


def test_fubini_examples():
    g = cycle(12)
    assert weak_fubini(g, Measure.build(g)).theta == Fraction(2, 12)
    for n in (3, 5, 8):
        K = FiniteGraph.complete(n)
        assert weak_fubini(K, Measure.build(K)).theta == 1 - Fraction(1, n)
    I = FiniteGraph.identity(10)
    r = weak_fubini(I, Measure.build(I))
    assert r.theta < Fraction(1, 10)
    assert not r.attained


@given(small_graphs())
def test_fubini_matches_oracle(data):
    n, edges = data
    g = FiniteGraph.from_edges(n, edges)
    mu = Measure.build(g)
    r = weak_fubini(g, mu)
    sup, attained = oracles.fubini_oracle(oracles.nbr_sets(n, edges))
    assert r.supremum == Fraction(sup, n)
    assert r.attained == attained
    # the reported level satisfies the defining inequality at every vertex
    adj = oracles.nbr_sets(n, edges)
    for a in range(n):
        mass = Fraction(sum(1 for b in range(n) if Fraction(len(adj[a] & adj[b]), n) >= r.theta), n)
        assert mass > r.theta


def test_fubini_weighted_agrees_with_uniform_float_path():
    g = cycle(20, 2)
    exact = weak_fubini(g, Measure.build(g)).theta
    w = weak_fubini(g, Measure.build(g, weights=np.r_[[1.0 + 1e-15], np.ones(19)])).theta
    assert w == pytest.approx(float(exact), rel=1e-9)


# -- axiom report ------------------------------------------------------------


def test_axiom_report_cycle_and_identity():
    g = cycle(1000, 3)
    r = check_axioms(g, Measure.build(g))
    assert r.k_upper == 2 and r.varpi == Fraction(1000, 7) and r.ok()
    I = FiniteGraph.identity(1000)
    r = check_axioms(I, Measure.build(I))
    assert not r.passes["weak_fubini"]
    assert r.theta <= Fraction(1, 1000)


def test_axiom_report_components():
    g = FiniteGraph.from_edges(7, [(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 6), (6, 3)])
    r = check_axioms(g, Measure.build(g))
    assert not r.connected
    assert [c["size"] for c in r.components] == [3, 4]


# -- IO -------------------------------------------------------------------------


def test_edge_list_round_trip(tmp_path):
    g = cycle(9, 2)
    p = tmp_path / "g.edges"
    p.write_text(format_edge_list(g))
    h, mu = read_edge_list(p)
    assert h.edges() == g.edges()
    assert mu.unit == Fraction(1, 9)


def test_edge_list_header_mismatch(tmp_path):
    p = tmp_path / "g.edges"
    p.write_text("3 2\n0 1\n")
    with pytest.raises(GraphError):
        read_edge_list(p)
