import json
import math

import numpy as np
import pytest

from aerlab.generators import (cayley_relation, cycle_interval, heisenberg_ball, interval_line,
                               load_instance, make_rng, regenerate, save_instance, sprinkle,
                               torus_packing)
from aerlab.graph import FiniteGraph, GraphError, ball, doubling_constant
from aerlab.groupmix import cyclic_group, sl2_group, symmetric_hull
from aerlab.homogeneity import embedding_counts


def same_graph(a: FiniteGraph, b: FiniteGraph) -> bool:
    return a.n == b.n and a.edges(loops=True) == b.edges(loops=True)


def test_cycle_interval():
    g = cycle_interval(12, 1).graph
    assert g.n == 12 and set(g.degrees()) == {3}
    assert same_graph(cycle_interval(5, 0).graph, FiniteGraph.identity(5))
    g = cycle_interval(8, 3).graph
    assert all(ball(g, a, 2) == set(range(8)) for a in range(8))
    with pytest.raises(GraphError):
        cycle_interval(4, 2)


def test_interval_line():
    g = interval_line(2, 1).graph
    assert g.degrees().tolist() == [2, 3, 3, 3, 2]
    assert same_graph(interval_line(6, 0).graph, FiniteGraph.identity(13))
    deg = interval_line(100, 1).graph.degrees()
    assert set(deg) == {2, 3} and (deg == 2).sum() / len(deg) == 2 / 201


def test_torus_packing_small_and_maximal():
    inst = torus_packing(1, 10.0, 1.0, seed=3)
    assert 5 <= inst.n <= 10
    x = np.sort(inst.coords[:, 0])
    gaps = np.diff(np.r_[x, x[0] + 10.0])
    assert (gaps >= 1.0).all() and (gaps <= 2.0).all()
    assert inst.meta["probe_holes"] == 0


def test_torus_packing_deterministic_and_separated():
    a = torus_packing(2, 8.0, 0.25, seed=7)
    b = torus_packing(2, 8.0, 0.25, seed=7)
    assert np.array_equal(a.coords, b.coords) and same_graph(a.graph, b.graph)
    assert a.meta["probe_holes"] == 0
    d = np.abs(a.coords[:, None] - a.coords[None])
    d = np.sqrt((np.minimum(d, 8.0 - d) ** 2).sum(-1))
    np.fill_diagonal(d, np.inf)
    assert d.min() >= 0.25
    # probe maximality re-checked independently
    probes = make_rng(99).random((1000, 2)) * 8.0
    q = np.abs(probes[:, None] - a.coords[None])
    q = np.sqrt((np.minimum(q, 8.0 - q) ** 2).sum(-1))
    assert q.min(axis=1).max() < 0.25


def test_torus_packing_rejects_bad_parameters():
    with pytest.raises(GraphError):
        torus_packing(2, 2.0, 0.25, seed=1)
    with pytest.raises(GraphError):
        torus_packing(4, 8.0, 0.25, seed=1)


@pytest.mark.slow
def test_torus_packing_doubling_independent_of_size():
    small = doubling_constant(torus_packing(2, 8.0, 0.2, seed=7).graph).k_upper
    large = doubling_constant(torus_packing(2, 16.0, 0.2, seed=7).graph).k_upper
    assert abs(small - large) <= 2


def test_sprinkle_examples():
    one = sprinkle("torus", 1, seed=0)
    assert one.n == 1 and one.graph.edges(loops=True) == [(0, 0)]
    inst = sprinkle("torus", 1000, seed=12)
    p = math.pi / 64
    stripped = inst.graph.degrees() - 1
    # each stripped degree is Binomial(999, p)
    sd = math.sqrt(999 * p * (1 - p))
    assert abs(stripped.mean() - 1000 * p) <= 3 * sd
    assert abs(stripped.std() - sd) <= 0.2 * sd
    assert inst.measure.mode == "local"
    sph = sprinkle("sphere2", 500, seed=4)
    deg = sph.graph.degrees()
    assert deg.std() / deg.mean() < 0.2


def test_sprinkle_sphere_edges_are_geodesic():
    inst = sprinkle("sphere2", 200, seed=2)
    P = inst.coords
    ang = np.arccos(np.clip(P @ P.T, -1, 1))
    A = inst.graph.adjacency().toarray()
    assert np.array_equal(A, ang <= 1.0)


def test_sprinkle_determinism_and_regenerate():
    a = sprinkle("torus", 300, seed=77)
    b = regenerate(a.provenance)
    assert np.array_equal(a.coords, b.coords) and same_graph(a.graph, b.graph)
    c = sprinkle("torus", 300, seed=78)
    assert not np.array_equal(a.coords, c.coords)


def test_cayley_relation_examples():
    Z = cyclic_group(20)
    inst = cayley_relation(Z, [0])
    assert same_graph(inst.graph, FiniteGraph.identity(20))
    assert same_graph(cayley_relation(Z, range(20)).graph, FiniteGraph.complete(20))
    X = [(k % 20) for k in range(-2, 3)]
    assert same_graph(cayley_relation(Z, X).graph, cycle_interval(20, 2).graph)
    inst = cayley_relation(Z, [1, 19])
    assert inst.meta["identity_added"]
    with pytest.raises(GraphError, match="element 1"):
        cayley_relation(Z, [0, 1])


def test_cayley_outputs_are_vertex_transitive():
    G = sl2_group(3)
    X = symmetric_hull(G, [1, 5])
    g = cayley_relation(G, X).graph
    g.audit()
    C = embedding_counts(g, 2)
    assert (C == C[0]).all()


def test_heisenberg_ball():
    G, X = heisenberg_ball(0, 7)
    assert X == [G.identity]
    G, X = heisenberg_ball(2, 5)
    assert len(X) == G.order == 125
    G, X = heisenberg_ball(1, 13)
    assert len(X) == 27
    E = G.elements
    prods = {int(G.mul(x, y)) for x in X for y in X}
    assert len(prods) <= 5 * 5 * 7
    lift = lambda v: v if v <= 6 else v - 13  # noqa: E731
    for z in prods:
        a, b, c = (lift(int(v)) for v in E[z])
        assert abs(a) <= 2 and abs(b) <= 2 and abs(c) <= 3
    with pytest.raises(GraphError):
        heisenberg_ball(3, 6)


def test_save_load_round_trip(tmp_path):
    inst = sprinkle("torus", 150, seed=5)
    d = save_instance(inst, tmp_path / "inst")
    back = load_instance(d)
    assert same_graph(inst.graph, back.graph)
    assert back.measure.mode == "local"
    assert np.array_equal(back.coords, inst.coords)
    prov = json.loads((d / "provenance.json").read_text())
    assert prov["seed"] == 5 and prov["rng"] == "philox4x64"
    assert same_graph(regenerate(prov).graph, inst.graph)
    assert not list(d.glob("*.tmp"))


def test_seed_range():
    with pytest.raises(GraphError):
        make_rng(-1)
    with pytest.raises(GraphError):
        make_rng(2 ** 64)
