"""Local statistics and approximate homogeneity.

For a vertex ``a`` and a connected rooted pattern ``gamma`` on ``0..m``,
``LS_m(a)(gamma)`` counts embeddings of ``gamma`` sending the root to ``a``,
divided by ``varpi**m``.  A graph is (m, eps)-homogeneous when these vectors
all sit in one eps-ball of the sup metric.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .graph import FiniteGraph, GraphError, Measure, _bits_to_list

PATTERN_CAP = 4
MODES = ("induced", "injective_hom")


@dataclass(frozen=True)
class RootedPattern:
    m: int
    edges: tuple[tuple[int, int], ...]

    @property
    def key(self) -> str:
        if not self.edges:
            return "root"
        return "-".join(f"{i}{j}" for i, j in self.edges)

    def adjacency(self) -> list[set[int]]:
        adj = [set() for _ in range(self.m + 1)]
        for i, j in self.edges:
            adj[i].add(j)
            adj[j].add(i)
        return adj


def _connected(m: int, edges) -> bool:
    adj = [set() for _ in range(m + 1)]
    for i, j in edges:
        adj[i].add(j)
        adj[j].add(i)
    seen, stack = {0}, [0]
    while stack:
        for v in adj[stack.pop()] - seen:
            seen.add(v)
            stack.append(v)
    return len(seen) == m + 1


def canonical_edges(m: int, edges) -> tuple[tuple[int, int], ...]:
    """Lexicographically least sorted edge list over relabelings fixing 0."""
    best = None
    for perm in itertools.permutations(range(1, m + 1)):
        relabel = (0,) + perm
        e = tuple(sorted(tuple(sorted((relabel[i], relabel[j]))) for i, j in edges))
        if best is None or e < best:
            best = e
    return best if best is not None else ()


def enumerate_patterns(m: int) -> list[RootedPattern]:
    """All connected graphs on ``0..m`` up to relabelings that fix the root."""
    if not 0 <= m <= PATTERN_CAP:
        raise GraphError(f"pattern size m must be in 0..{PATTERN_CAP}")
    pairs = list(itertools.combinations(range(m + 1), 2))
    keys = set()
    for mask in range(1 << len(pairs)):
        edges = [pairs[i] for i in range(len(pairs)) if mask >> i & 1]
        if _connected(m, edges):
            keys.add(canonical_edges(m, edges))
    return [RootedPattern(m, e) for e in sorted(keys)]


def _order(p: RootedPattern) -> list[int]:
    """Pattern vertices in BFS order from the root."""
    adj = p.adjacency()
    out, seen = [0], {0}
    i = 0
    while i < len(out):
        for v in sorted(adj[out[i]]):
            if v not in seen:
                seen.add(v)
                out.append(v)
        i += 1
    return out


def _stripped_bits(g: FiniteGraph) -> list[int]:
    return [b & ~(1 << v) for v, b in enumerate(g.bits)]


def _count(nb: list[int], p: RootedPattern, a: int, induced: bool) -> int:
    if p.m == 0:
        return 1
    order = _order(p)
    adj = p.adjacency()
    plan = []
    for k in range(1, len(order)):
        v = order[k]
        earlier = order[:k]
        plan.append(([j for j in range(k) if earlier[j] in adj[v]],
                     [j for j in range(k) if earlier[j] not in adj[v]]))
    images = [a]
    used = 1 << a
    last = len(plan) - 1

    def rec(level: int, used: int) -> int:
        nbrs, non = plan[level]
        cand = -1
        for j in nbrs:
            cand &= nb[images[j]]
        if induced:
            for j in non:
                cand &= ~nb[images[j]]
        cand &= ~used
        if level == last:
            return cand.bit_count()
        total = 0
        for u in _bits_to_list(cand):
            images.append(u)
            total += rec(level + 1, used | (1 << u))
            images.pop()
        return total

    return rec(0, used)


def embedding_counts(g: FiniteGraph, m: int, mode: str = "induced", vertices=None,
                     patterns: list[RootedPattern] | None = None) -> np.ndarray:
    """Integer matrix of rooted embedding counts, one row per vertex."""
    if mode not in MODES:
        raise GraphError(f"unknown mode {mode!r}")
    patterns = patterns or enumerate_patterns(m)
    nb = _stripped_bits(g)
    vertices = range(g.n) if vertices is None else vertices
    induced = mode == "induced"
    return np.array([[_count(nb, p, a, induced) for p in patterns] for a in vertices],
                    dtype=np.int64).reshape(len(vertices), len(patterns))


def default_varpi(*graphs: FiniteGraph) -> float:
    """Mean neighbour count with the loop removed, pooled over the graphs."""
    deg = np.concatenate([g.degrees() - 1 for g in graphs])
    v = float(deg.mean())
    if v <= 0:
        raise GraphError("mean stripped degree is zero; pass varpi explicitly")
    return v


def local_stats(g: FiniteGraph, a: int, m: int, varpi: float, mode: str = "induced") -> np.ndarray:
    """``LS_m(a)``: per-pattern embedding counts over ``varpi**m``."""
    if not varpi > 0:
        raise GraphError("varpi must be positive")
    g._check(a)
    return embedding_counts(g, m, mode, vertices=[a])[0] / float(varpi) ** m


@dataclass
class HomogeneityReport:
    m: int
    mode: str
    varpi: float
    eps_exact: float
    eps_ae: float
    center: list
    patterns: list[RootedPattern] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"m": self.m, "mode": self.mode, "varpi": self.varpi,
                "eps_exact": self.eps_exact, "eps_ae": self.eps_ae, "center": self.center,
                "patterns": [{"key": p.key, "edges": [list(e) for e in p.edges]}
                             for p in self.patterns]}


def _stats(g, m, mode, varpi):
    patterns = enumerate_patterns(m)
    counts = embedding_counts(g, m, mode, patterns=patterns)
    varpi = default_varpi(g) if varpi is None else float(varpi)
    return patterns, counts, varpi, counts / varpi ** m


AE_GRID = 1000


def _ae_level(dev: np.ndarray, mu: Measure) -> float:
    """Smallest ``j/1000`` with ``mu{dev > j/1000} < j/1000``; level 0 needs no outliers."""
    if not (dev > 0).any():
        return 0.0
    atoms = mu.atoms()
    j = 1
    while True:
        eps = j / AE_GRID
        out = np.flatnonzero(dev > eps)
        if mu.uniform:
            if mu.mass_exact(out) < Fraction(j, AE_GRID):
                return eps
        elif float(atoms[out].sum()) < eps:
            return eps
        j += 1


def ae_homogeneity(g: FiniteGraph, mu: Measure | None, m: int, mode: str = "induced",
                   varpi: float | None = None) -> float:
    """Almost-everywhere homogeneity level around the coordinatewise median."""
    mu = mu or Measure.build(g)
    _, _, _, ls = _stats(g, m, mode, varpi)
    v = np.median(ls, axis=0)
    return _ae_level(np.abs(ls - v).max(axis=1), mu)


def homogeneity_epsilon(g: FiniteGraph, m: int, mode: str = "induced",
                        varpi: float | None = None, mu: Measure | None = None) -> HomogeneityReport:
    """Half the sup-metric diameter of the ``LS_m`` range, plus the a.e. level."""
    patterns, counts, varpi, ls = _stats(g, m, mode, varpi)
    # identical count rows give exactly zero spread
    spread = (counts.max(axis=0) - counts.min(axis=0)) / varpi ** m
    eps_exact = float(spread.max() / 2) if len(spread) else 0.0
    v = np.median(ls, axis=0)
    eps_ae = _ae_level(np.abs(ls - v).max(axis=1), mu or Measure.build(g))
    return HomogeneityReport(m, mode, varpi, eps_exact, eps_ae, v.tolist(), patterns)


def local_stats_matrix(g: FiniteGraph, m: int, mode: str = "induced", varpi: float | None = None):
    """``(patterns, LS matrix, varpi)`` for CSV export."""
    patterns, _, varpi, ls = _stats(g, m, mode, varpi)
    return patterns, ls, varpi


def sequence_closeness(g1: FiniteGraph, g2: FiniteGraph, m: int, mode: str = "induced",
                       eps: float = 0.1, varpi: float | None = None):
    """Whether the two ``LS_m`` ranges come within ``eps`` of each other, and their
    Hausdorff distance.  Both sides use the same ``varpi``."""
    varpi = default_varpi(g1, g2) if varpi is None else float(varpi)
    _, _, _, a = _stats(g1, m, mode, varpi)
    _, _, _, b = _stats(g2, m, mode, varpi)
    a, b = np.unique(a, axis=0), np.unique(b, axis=0)
    D = np.abs(a[:, None, :] - b[None, :, :]).max(axis=2)
    gap = float(D.min())
    haus = float(max(D.min(axis=1).max(), D.min(axis=0).max()))
    return gap <= eps, haus, gap
