import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from aerlab.groupmix import (GroupError, GroupFunction, constant, convolve, cyclic_group, delta,
                             expansion_radius, fiber_profile, heisenberg_group, indicator_density,
                             interval_density, l1_distance_to_uniform, mixing_experiment,
                             parse_poly, parse_word, sl2_group, stabilizer_of, trace_density,
                             word_pushforward)

import oracles


def det_one_count(p):
    return sum(1 for a, b, c, d in itertools.product(range(p), repeat=4) if (a * d - b * c) % p == 1)


@pytest.mark.parametrize("p,order", [(2, 6), (3, 24), (5, 120)])
def test_sl2_orders(p, order):
    G = sl2_group(p)
    assert G.order == order == det_one_count(p)
    G.audit()


def test_sl2_rejects_bad_primes():
    for p in (4, 37):
        with pytest.raises(GroupError):
            sl2_group(p)


def test_group_axioms_on_table():
    for G in (cyclic_group(9), sl2_group(3), heisenberg_group(3)):
        n = G.order
        for a in range(n):
            assert G.mul(a, G.inv[a]) == G.identity == G.mul(G.inv[a], a)
            assert G.mul(a, G.identity) == a
        rng = np.random.Generator(np.random.Philox(1))
        t = rng.integers(0, n, size=(200, 3))
        lhs = G.mul(G.mul(t[:, 0], t[:, 1]), t[:, 2])
        rhs = G.mul(t[:, 0], G.mul(t[:, 1], t[:, 2]))
        assert np.array_equal(lhs, rhs)


def test_convolution_matches_double_loop():
    G = sl2_group(3)
    rng = np.random.Generator(np.random.Philox(4))
    f = GroupFunction.of(G, [Fraction(int(v)) for v in rng.integers(0, 5, G.order)])
    g = GroupFunction.of(G, [Fraction(int(v)) for v in rng.integers(0, 5, G.order)])
    ref = oracles.convolve_loop(lambda a, b: int(G.mul(a, b)), lambda a: int(G.inv[a]), f.values, g.values)
    assert convolve(G, f, g).values == ref
    fl = convolve(G, f, g, exact=False)
    assert np.allclose(fl.values, [float(v) for v in ref], rtol=1e-12)


def test_tent_exact():
    G = cyclic_group(1000)
    f = interval_density(G, 1000)
    h = convolve(G, f, f)
    assert h.exact
    expect = [Fraction(x + 1, 10) if x <= 99 else Fraction(199 - x, 10) if x <= 198 else 0
              for x in range(1000)]
    assert h.values == expect
    assert l1_distance_to_uniform(G, h) == Fraction(81, 50)


def test_tent_matches_double_loop_oracle():
    G = cyclic_group(100)
    f = interval_density(G, 100)
    ref = oracles.convolve_loop(lambda a, b: (a + b) % 100, lambda a: -a % 100, f.values, f.values)
    assert convolve(G, f, f).values == ref


def test_identity_and_constant():
    for G in (cyclic_group(12), sl2_group(3)):
        d = delta(G)
        g = trace_density(G, 3) if G.order == 24 else indicator_density(G, [0, 3, 5])
        assert convolve(G, d, g).values == g.values
        assert convolve(G, g, d).values == g.values
        one = constant(G)
        assert convolve(G, one, one).values == one.values
        assert l1_distance_to_uniform(G, one) == 0
        assert l1_distance_to_uniform(G, d) == 2 * (1 - Fraction(1, G.order))


nonneg = st.lists(st.integers(0, 6), min_size=24, max_size=24).filter(any)


@given(nonneg, nonneg)
def test_l1_multiplicative(a, b):
    G = sl2_group(3)
    f, g = GroupFunction.of(G, a), GroupFunction.of(G, b)
    assert convolve(G, f, g).l1() == f.l1() * g.l1()


def test_translation_covariance():
    G = sl2_group(5)
    f = trace_density(G, 5)
    rng = np.random.Generator(np.random.Philox(8))
    g = GroupFunction.of(G, [Fraction(int(v)) for v in rng.integers(0, 4, G.order)])
    h = convolve(G, f, g)
    for w in rng.integers(0, G.order, 20).tolist():
        assert convolve(G, f.translate(w), g).values == h.translate(w).values


def test_stabilizer_examples():
    G = cyclic_group(12)
    r = stabilizer_of(G, indicator_density(G, range(0, 12, 2)))
    assert r.elements == [0, 2, 4, 6, 8, 10] and r.is_subgroup and r.index == 2
    r = stabilizer_of(G, constant(G))
    assert len(r.elements) == 12 and r.index == 1


@given(st.lists(st.integers(0, 3), min_size=24, max_size=24))
def test_stabilizer_tol_zero_is_subgroup(vals):
    G = sl2_group(3)
    r = stabilizer_of(G, GroupFunction.of(G, vals), tol=0)
    assert r.is_subgroup and G.identity in r.elements
    assert G.order % len(r.elements) == 0


def test_mixing_table_shapes():
    rows = mixing_experiment("sl2", [5, 7])
    assert [r.param for r in rows] == [5, 7]
    assert all(r.density == "trace_qr" for r in rows)
    zero = mixing_experiment("cyclic", [100], density="const")
    assert zero[0].l1_dist == 0
    with pytest.raises(GroupError):
        mixing_experiment("cyclic", [105])


def test_parse_word():
    assert parse_word("abAB") == [(0, 1), (1, 1), (0, -1), (1, -1)]
    with pytest.raises(GroupError):
        parse_word("a1")


def test_word_single_letter_uniform():
    G = sl2_group(3)
    F, info = word_pushforward(G, "a")
    assert all(v == 1 for v in F.values) and info["fiber_sum"] == 24


def test_abelian_commutator_full_mass_at_identity():
    G = cyclic_group(10)
    F, info = word_pushforward(G, "abAB")
    assert F.values[G.identity] == 10 and sum(F.values) == 10
    assert info["fiber_sum"] == 100


def test_sl2_commutator():
    G = sl2_group(3)
    F, info = word_pushforward(G, "abAB")
    assert info["fiber_sum"] == 24 ** 2
    assert F.values[G.identity] > 1
    assert sum(fiber_profile(F).values()) == 24
    assert F.l1() == 1
    # commutators lie in the derived subgroup
    support = [x for x in range(24) if F.values[x] > 0]
    comm = {int(G.mul(G.mul(a, b), G.mul(G.inv[a], G.inv[b]))) for a in range(24) for b in range(24)}
    assert set(support) == comm


def test_word_fiber_sum_heisenberg():
    G = heisenberg_group(3)
    F, info = word_pushforward(G, "abA")
    assert info["fiber_sum"] == G.order ** 2


def test_monte_carlo_agrees_with_exhaustive():
    G = sl2_group(3)
    exact, _ = word_pushforward(G, "abAB")
    samples = 200_000
    mc, info = word_pushforward(G, "abAB", samples=samples, seed=11)
    assert info["mode"] == "monte_carlo"
    ref = exact.as_float()
    # the density estimate G*count/samples has sd sqrt(G F / samples)
    tol = 3 * np.sqrt(G.order * ref / samples) + 1e-12
    assert (np.abs(mc.values - ref) <= tol).all()
    with pytest.raises(GroupError):
        word_pushforward(G, "ab", samples=10)


def test_parse_poly():
    assert sorted(parse_poly("x + y**2")) == [(1, 0, 2), (1, 1, 0)]
    assert parse_poly([[3, 1, 0]]) == [(3, 1, 0)]
    for bad in ("x +", "x/2", [[1, -1, 0]]):
        with pytest.raises(GroupError):
            parse_poly(bad)


def test_expansion_radius_trivial_cases():
    r = expansion_radius(7, ("y", "x + y**2"), "y - x**2", cap=10)
    p = 7
    for x in range(p):
        assert r.xi[x, x * x % p] == 0
    ident = expansion_radius(7, ("x", "y"), "y - x**2", cap=5)
    assert ident.xi[0, 1] == -1 and ident.exceeded == 49 - 7
    assert ident.max_attained == 0


def test_expansion_radius_matches_direct_iteration():
    p = 11
    r = expansion_radius(p, ("y", "x + y**2"), "y - x**2", cap=12)
    for x0, y0 in itertools.product(range(p), repeat=2):
        x, y, found = x0, y0, -1
        for n in range(13):
            if (y - x * x) % p == 0:
                found = n
                break
            x, y = y, (x + y * y) % p
        assert r.xi[x0, y0] == found
