import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from aerlab.generators import cycle_interval
from aerlab.graph import FiniteGraph, Measure
from aerlab.vcnet import (SetSystem, arcs_system, epsilon_net, fit_curve, net_size,
                          packing_centers, packing_centers_table, packing_count,
                          packing_dimension_estimate, sauer_shelah_bound, shatter_function,
                          symdiff_metric, vc_dimension)

import oracles

set_systems = st.integers(1, 7).flatmap(lambda g: st.tuples(
    st.just(g),
    st.lists(st.frozensets(st.integers(0, g - 1)), min_size=1, max_size=12)))


def test_vc_examples():
    single = SetSystem.from_sets(5, [{i} for i in range(5)])
    assert vc_dimension(single) == (1, False)
    power = SetSystem.from_sets(4, [set(s) for k in range(5) for s in itertools.combinations(range(4), k)])
    assert vc_dimension(power, cap=4) == (4, True)
    assert vc_dimension(power, cap=6) == (4, False)
    assert vc_dimension(SetSystem.from_sets(3, [{0, 1}])) == (0, False)


def test_arcs_vc_and_shatter():
    ss = arcs_system(20, 1)
    assert vc_dimension(ss)[0] == 2
    value, est = shatter_function(ss, 3)
    assert not est
    assert value == oracles.shatter_bruteforce(20, ss.sets(), 3) == 6
    assert shatter_function(ss, 0) == (1, False)


def test_power_set_shatter():
    power = SetSystem.from_sets(5, [set(s) for k in range(6) for s in itertools.combinations(range(5), k)])
    assert shatter_function(power, 3)[0] == 8


def test_neighborhood_system_of_graph():
    g = cycle_interval(20, 1).graph
    ss = SetSystem.neighborhoods(g)
    assert ss.sets() == arcs_system(20, 1).sets()


@given(set_systems)
def test_vc_matches_brute_force_and_sauer_shelah(data):
    ground, sets = data
    ss = SetSystem.from_sets(ground, [set(s) for s in sets])
    d, _ = vc_dimension(ss)
    assert d == oracles.vc_bruteforce(ground, [set(s) for s in sets])
    distinct = len(set(sets))
    assert distinct <= sauer_shelah_bound(ground, d)
    for k in range(ground + 1):
        assert shatter_function(ss, k)[0] <= sauer_shelah_bound(k, d)


@given(set_systems, st.frozensets(st.integers(0, 6)))
def test_vc_monotone_under_adding_members(data, extra):
    ground, sets = data
    ss = SetSystem.from_sets(ground, [set(s) for s in sets])
    bigger = ss.add({x for x in extra if x < ground})
    assert vc_dimension(bigger)[0] >= vc_dimension(ss)[0]


def test_net_size():
    x = 8 * 2 * 4
    assert net_size(2, 4) == math.ceil(x * math.log(x)) == 267


def test_epsilon_net_on_arcs():
    g = cycle_interval(60, 3).graph
    ss = SetSystem.neighborhoods(g)
    r = epsilon_net(ss, Measure.build(g), 2, 10, seed=5)
    assert r.verified and len(r.samples) == net_size(2, 10)
    hit = set(r.samples)
    for s in ss.sets():
        if Fraction(len(s), 60) >= Fraction(1, 10):
            assert s & hit
    again = epsilon_net(ss, Measure.build(g), 2, 10, seed=5)
    assert again.samples == r.samples


def test_symdiff_examples():
    g = cycle_interval(12, 1).graph
    mu = Measure.build(g)
    d1, d2 = symdiff_metric(g, mu, 0, 1)
    assert d1 == Fraction(2, 12) and d2 == pytest.approx(math.sqrt(2 / 12))
    assert symdiff_metric(g, mu, 3, 3)[0] == 0


@given(st.integers(5, 20), st.integers(1, 2))
def test_symdiff_is_pseudometric(N, w):
    if 2 * w + 2 > N:
        return
    g = cycle_interval(N, w).graph
    mu = Measure.build(g)
    T1 = [[symdiff_metric(g, mu, a, b)[0] for b in range(N)] for a in range(N)]
    T2 = [[symdiff_metric(g, mu, a, b)[1] for b in range(N)] for a in range(N)]
    for a in range(N):
        for b in range(N):
            assert T1[a][b] == T1[b][a] and T2[a][b] ** 2 == pytest.approx(float(T1[a][b]))
            for c in range(N):
                assert T1[a][c] <= T1[a][b] + T1[b][c]
                assert T2[a][c] <= T2[a][b] + T2[b][c] + 1e-12


def test_packing_on_cycle_symdiff():
    g = cycle_interval(20, 1).graph
    mu = Measure.build(g)
    f = lambda a, b: float(symdiff_metric(g, mu, a, b)[0])  # noqa: E731
    assert packing_count(range(20), f, 1 / 24) == 20


def test_identical_points_slope_zero():
    curve = packing_dimension_estimate([0.0] * 10, lambda a, b: abs(a - b), [2, 4, 8])
    assert curve.counts == [1, 1, 1] and curve.slope == 0


def test_fit_curve_recovers_power_law():
    res = [2, 4, 8, 16]
    curve = fit_curve(res, [r * r for r in res])
    assert curve.slope == pytest.approx(2.0)


@given(st.lists(st.floats(0, 10), min_size=1, max_size=40), st.floats(0.05, 2))
def test_packing_valid_and_maximal(points, radius):
    f = lambda a, b: abs(a - b)  # noqa: E731
    kept = packing_centers(points, f, radius)
    for a, b in itertools.combinations(kept, 2):
        assert f(a, b) > 2 * radius
    for p in points:
        assert any(f(p, q) <= 2 * radius for q in kept)
    D = np.abs(np.subtract.outer(points, points))
    idx = packing_centers_table(D, 2 * radius)
    assert [points[i] for i in idx] == kept
