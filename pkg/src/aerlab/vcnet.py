"""VC dimension, epsilon-nets and packing-dimension estimates."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .graph import FiniteGraph, GraphError, Measure, _bits_to_list

VC_CAP = 6


@dataclass
class SetSystem:
    """Member sets over ``0..ground-1`` stored as bitsets."""

    ground: int
    members: list[int]
    ids: list = field(default_factory=list)
    source: str = "custom"

    def __post_init__(self):
        if not self.ids:
            self.ids = list(range(len(self.members)))
        if len(set(self.ids)) != len(self.ids):
            raise GraphError("member identifiers must be unique")
        full = (1 << self.ground) - 1
        for s in self.members:
            if s & ~full:
                raise GraphError("member set leaves the ground set")

    @classmethod
    def from_sets(cls, ground: int, sets, ids=None, source="custom") -> "SetSystem":
        members = []
        for s in sets:
            b = 0
            for x in s:
                b |= 1 << int(x)
            members.append(b)
        return cls(ground, members, list(ids) if ids is not None else [], source)

    @classmethod
    def neighborhoods(cls, g: FiniteGraph) -> "SetSystem":
        """The family ``{R(b)}`` indexed by ``b``."""
        return cls(g.n, list(g.bits), list(range(g.n)), "graph-neighborhoods")

    def add(self, s, ident=None) -> "SetSystem":
        other = SetSystem.from_sets(self.ground, [s]).members[0]
        ident = ident if ident is not None else len(self.members)
        return SetSystem(self.ground, self.members + [other], self.ids + [ident], self.source)

    def sets(self) -> list[set[int]]:
        return [set(_bits_to_list(b)) for b in self.members]


def _traces(ss: SetSystem, subset) -> set[int]:
    mask = 0
    for x in subset:
        mask |= 1 << x
    return {b & mask for b in ss.members}


def _shattered(ss: SetSystem, subset) -> bool:
    return len(_traces(ss, subset)) == 1 << len(subset)


def vc_dimension(ss: SetSystem, cap: int = VC_CAP):
    """Largest ``k <= cap`` with a shattered ``k``-subset; ``(k, at_least)``.

    Any subset of a shattered set is shattered, so candidate ``k``-sets are
    grown only from shattered ``(k-1)``-sets.
    """
    if cap > VC_CAP or cap < 0:
        raise GraphError(f"cap must be in 0..{VC_CAP}")
    if not ss.members:
        return -1, False
    level = [()]
    k = 0
    while k < cap:
        nxt = set()
        for base in level:
            start = base[-1] + 1 if base else 0
            for x in range(start, ss.ground):
                cand = base + (x,)
                if _shattered(ss, cand):
                    nxt.add(cand)
        if not nxt:
            return k, False
        level = sorted(nxt)
        k += 1
    return k, True


def shatter_function(ss: SetSystem, k: int, samples: int = 20000, seed: int = 0):
    """Max number of traces on a ``k``-subset; ``(value, is_estimate)``."""
    if k == 0:
        return (1 if ss.members else 0), False
    if ss.ground <= 20 and k <= 5:
        return max(len(_traces(ss, A)) for A in itertools.combinations(range(ss.ground), k)), False
    rng = np.random.Generator(np.random.Philox(seed))
    best = 0
    for _ in range(samples):
        A = rng.choice(ss.ground, size=k, replace=False)
        best = max(best, len(_traces(ss, A.tolist())))
    return best, True


def sauer_shelah_bound(k: int, d: int) -> int:
    return sum(math.comb(k, i) for i in range(0, d + 1))


def net_size(d_vc: int, n: int) -> int:
    """``ceil(8 d n ln(8 d n))``."""
    if d_vc < 1 or n < 1:
        raise GraphError("need d_vc >= 1 and n >= 1")
    x = 8 * d_vc * n
    return math.ceil(x * math.log(x))


@dataclass
class NetResult:
    N: int
    samples: list[int]
    verified: bool
    attempts: list[dict]


def epsilon_net(ss: SetSystem, mu: Measure, d_vc: int, n: int, seed: int,
                retries: int = 3) -> NetResult:
    """Draw ``N`` i.i.d. ``mu``-samples and check they hit every set of mass ``>= 1/n``."""
    N = net_size(d_vc, n)
    p = mu.atoms() / mu.atoms().sum()
    if mu.uniform:
        heavy = [i for i, b in enumerate(ss.members)
                 if mu.mass_exact(_bits_to_list(b)) >= Fraction(1, n)]
    else:
        heavy = [i for i, b in enumerate(ss.members) if mu.mass(_bits_to_list(b)) >= 1 / n]
    rng = np.random.Generator(np.random.Philox(seed))
    attempts = []
    samples = []
    for attempt in range(retries):
        samples = rng.choice(ss.ground, size=N, replace=True, p=p).tolist()
        hit = 0
        for c in set(samples):
            hit |= 1 << c
        missed = [ss.ids[i] for i in heavy if not ss.members[i] & hit]
        attempts.append({"attempt": attempt, "missed": missed, "ok": not missed})
        if not missed:
            return NetResult(N, samples, True, attempts)
    return NetResult(N, samples, False, attempts)


def arcs_system(N: int, w: int) -> SetSystem:
    """Neighbourhoods of the cycle ``Z/N`` with interval width ``w`` (arcs of length ``2w+1``)."""
    sets = [[(c + j) % N for j in range(-w, w + 1)] for c in range(N)]
    return SetSystem.from_sets(N, sets, source="graph-neighborhoods")


# ---------------------------------------------------------------------------
# Packing dimension


def symdiff_metric(g: FiniteGraph, mu: Measure, a: int, b: int):
    """``(mu(R(a) ^ R(b)), sqrt of it)``."""
    diff = _bits_to_list(g.bits[a] ^ g.bits[b])
    d1 = mu.mass_exact(diff) if mu.uniform else mu.mass(diff)
    return d1, math.sqrt(d1)


def packing_count(points, metric_fn, radius: float) -> int:
    """Greedy packing: keep a point if it is farther than ``2 radius`` from all kept ones."""
    return len(packing_centers(points, metric_fn, radius))


def packing_centers(points, metric_fn, radius: float) -> list:
    kept = []
    for p in points:
        if all(metric_fn(p, q) > 2 * radius for q in kept):
            kept.append(p)
    return kept


def packing_centers_table(D: np.ndarray, sep: float) -> list[int]:
    """Greedy packing in index order against a dense distance table (``D > sep``)."""
    n = len(D)
    alive = np.ones(n, dtype=bool)
    kept = []
    for i in range(n):
        if alive[i]:
            kept.append(i)
            alive &= D[i] > sep
    return kept


@dataclass
class PackingCurve:
    resolutions: list[int]
    counts: list[int]
    slope: float
    intercept: float

    def rows(self):
        return list(zip(self.resolutions, self.counts))


def fit_curve(resolutions, counts) -> PackingCurve:
    x = np.log(np.asarray(resolutions, dtype=float))
    y = np.log(np.asarray(counts, dtype=float))
    if len(set(counts)) == 1:
        slope, intercept = 0.0, float(y[0])
    else:
        slope, intercept = np.polyfit(x, y, 1)
    return PackingCurve(list(resolutions), list(counts), float(slope), float(intercept))


def packing_dimension_estimate(points, metric_fn, resolutions) -> PackingCurve:
    """Packing counts at radius ``1/n`` and the log-log least-squares slope."""
    counts = [packing_count(points, metric_fn, 1.0 / n) for n in resolutions]
    return fit_curve(resolutions, counts)


def packing_curve_metric(metric, resolutions) -> PackingCurve:
    """Packing curve of a :class:`StabilizerMetric` using its distance table."""
    D = metric.d_values(metric.raw_matrix())
    counts = [len(packing_centers_table(D, 2.0 / n)) for n in resolutions]
    return fit_curve(resolutions, counts)
