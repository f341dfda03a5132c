"""Finite approximate equivalence relations.

A :class:`FiniteGraph` is a symmetric reflexive relation ``R`` on the vertex
set ``0..n-1``.  Balls ``R^r(a)`` are computed by breadth-first expansion over
Python-int bitsets, which makes neighbour-set intersection a single ``&``.

The axiom checks (doubling, ball measures, weak Fubini) follow the usual
definition of a near equivalence relation.  Whenever the measure is uniform
every quantity is reported exactly as a :class:`fractions.Fraction`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

INF = math.inf


class GraphError(ValueError):
    pass


class AxiomViolation(GraphError):
    """Raised when a measure gives some neighbour set zero mass."""

    def __init__(self, vertex: int, message: str):
        super().__init__(f"vertex {vertex}: {message}")
        self.vertex = vertex


def _bits_to_list(bits: int) -> list[int]:
    out = []
    while bits:
        low = bits & -bits
        out.append(low.bit_length() - 1)
        bits ^= low
    return out


def _mask_from_indices(idx: Iterable[int], n: int) -> int:
    row = np.zeros(n, dtype=bool)
    row[np.fromiter(idx, dtype=np.int64)] = True
    return int.from_bytes(np.packbits(row, bitorder="little").tobytes(), "little")


class FiniteGraph:
    """Symmetric reflexive relation on ``n`` vertices.

    ``neighbors(u)`` is a sorted array that always contains ``u`` itself.
    Construct through :meth:`from_edges` or :meth:`from_adjacency`; both add
    the diagonal and symmetrise, and record whether they had to.
    """

    def __init__(self, n: int, neighbor_lists: Sequence[np.ndarray],
                 labels: Sequence[str] | None = None, normalized: bool = False):
        if n < 0:
            raise GraphError("vertex count must be nonnegative")
        if len(neighbor_lists) != n:
            raise GraphError("need one neighbour list per vertex")
        self.n = n
        self._nbrs = [np.asarray(x, dtype=np.int64) for x in neighbor_lists]
        self.labels = list(labels) if labels is not None else None
        # True when the constructor had to add loops or reverse edges.
        self.normalized = normalized
        self._bits: list[int] | None = None
        self._adj: sparse.csr_matrix | None = None
        self._dist: np.ndarray | None = None

    # construction -----------------------------------------------------
    @classmethod
    def from_adjacency(cls, adj, labels=None) -> "FiniteGraph":
        A = sparse.csr_matrix(adj, dtype=bool)
        n = A.shape[0]
        if A.shape != (n, n):
            raise GraphError("adjacency must be square")
        sym = (A + A.T + sparse.identity(n, dtype=bool, format="csr")).tocsr()
        sym.sort_indices()
        normalized = (sym != A).nnz > 0
        nbrs = [sym.indices[sym.indptr[i]:sym.indptr[i + 1]].copy() for i in range(n)]
        g = cls(n, nbrs, labels=labels, normalized=normalized)
        g._adj = sym
        return g

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]], labels=None) -> "FiniteGraph":
        e = np.array(list(edges), dtype=np.int64).reshape(-1, 2)
        if e.size and (e.min() < 0 or e.max() >= n):
            raise GraphError("edge endpoint out of range")
        A = sparse.coo_matrix((np.ones(len(e), dtype=bool), (e[:, 0], e[:, 1])), shape=(n, n))
        return cls.from_adjacency(A, labels=labels)

    @classmethod
    def complete(cls, n: int) -> "FiniteGraph":
        return cls.from_adjacency(np.ones((n, n), dtype=bool))

    @classmethod
    def identity(cls, n: int) -> "FiniteGraph":
        return cls.from_adjacency(sparse.identity(n, dtype=bool))

    # access -------------------------------------------------------------
    def neighbors(self, u: int) -> np.ndarray:
        self._check(u)
        return self._nbrs[u]

    def degree(self, u: int) -> int:
        """Size of ``R(u)``, loop included."""
        return len(self._nbrs[u])

    def degrees(self) -> np.ndarray:
        return np.array([len(x) for x in self._nbrs], dtype=np.int64)

    @property
    def bits(self) -> list[int]:
        if self._bits is None:
            A = self.adjacency().toarray() if self.n <= 4096 else None
            if A is not None:
                packed = np.packbits(A, axis=1, bitorder="little")
                self._bits = [int.from_bytes(r.tobytes(), "little") for r in packed]
            else:
                self._bits = [_mask_from_indices(x, self.n) for x in self._nbrs]
        return self._bits

    def adjacency(self) -> sparse.csr_matrix:
        if self._adj is None:
            indptr = np.zeros(self.n + 1, dtype=np.int64)
            indptr[1:] = np.cumsum([len(x) for x in self._nbrs])
            idx = np.concatenate(self._nbrs) if self.n else np.zeros(0, dtype=np.int64)
            self._adj = sparse.csr_matrix((np.ones(len(idx), dtype=bool), idx, indptr),
                                          shape=(self.n, self.n))
        return self._adj

    def edges(self, loops: bool = False) -> list[tuple[int, int]]:
        out = []
        for u, nb in enumerate(self._nbrs):
            for v in nb:
                if u < v or (loops and u == v):
                    out.append((u, int(v)))
        return out

    def audit(self) -> None:
        """Raise :class:`GraphError` unless symmetric, reflexive and duplicate free."""
        for u, nb in enumerate(self._nbrs):
            if len(nb) and (nb.min() < 0 or nb.max() >= self.n):
                raise GraphError(f"vertex {u} has an out-of-range neighbour")
            if len(np.unique(nb)) != len(nb):
                raise GraphError(f"vertex {u} has duplicate neighbours")
        A = self.adjacency()
        if (A != A.T).nnz:
            raise GraphError("relation is not symmetric")
        if not A.diagonal().all():
            raise GraphError("relation is not reflexive")

    def _check(self, u: int) -> None:
        if not 0 <= u < self.n:
            raise GraphError(f"vertex {u} out of range for n={self.n}")

    def __repr__(self) -> str:
        return f"FiniteGraph(n={self.n}, edges={len(self.edges())})"

    # metric -------------------------------------------------------------
    def ball_bits(self, a: int, r: int) -> int:
        self._check(a)
        if r < 0:
            raise GraphError("radius must be nonnegative")
        bits = self.bits
        ball = 1 << a
        frontier = ball
        for _ in range(r):
            new = 0
            for v in _bits_to_list(frontier):
                new |= bits[v]
            frontier = new & ~ball
            if not frontier:
                break
            ball |= frontier
        return ball

    def layers(self, a: int, r: int) -> list[int]:
        """BFS spheres ``S_0..S_r`` around ``a`` as bitsets (empty tail dropped)."""
        self._check(a)
        bits = self.bits
        seen = 1 << a
        out = [seen]
        for _ in range(r):
            new = 0
            for v in _bits_to_list(out[-1]):
                new |= bits[v]
            new &= ~seen
            if not new:
                break
            seen |= new
            out.append(new)
        return out

    def distances(self) -> np.ndarray:
        """All-pairs graph distance (float, ``inf`` when unreachable)."""
        if self._dist is None:
            self._dist = csgraph.shortest_path(self.adjacency(), unweighted=True, directed=False)
        return self._dist

    def components(self) -> np.ndarray:
        _, labels = csgraph.connected_components(self.adjacency(), directed=False)
        return labels


def ball(g: FiniteGraph, a: int, r: int) -> set[int]:
    """``R^r(a)``: vertices within graph distance ``r`` of ``a``."""
    return set(_bits_to_list(g.ball_bits(a, r)))


def graph_distance(g: FiniteGraph, a: int, b: int) -> int | float:
    g._check(a)
    g._check(b)
    if a == b:
        return 0
    if g._dist is not None:
        d = g._dist[a, b]
        return int(d) if np.isfinite(d) else INF
    bits = g.bits
    seen = 1 << a
    frontier = seen
    r = 0
    target = 1 << b
    while frontier:
        r += 1
        new = 0
        for v in _bits_to_list(frontier):
            new |= bits[v]
        frontier = new & ~seen
        if frontier & target:
            return r
        seen |= frontier
    return INF


# ---------------------------------------------------------------------------
# Measure


@dataclass
class Measure:
    """Vertex weights with a normalising scale, ``mu(S) = c * sum(w[S])``.

    In ``global`` mode ``c`` makes the total mass 1.  In ``local`` mode ``c``
    makes the median 1-ball mass equal to 1.  ``exact_scale`` holds ``c`` as a
    Fraction when all weights are equal, which switches downstream code to
    exact arithmetic.
    """

    weights: np.ndarray
    scale: float
    mode: str = "global"
    exact_scale: Fraction | None = None
    # locality budget C_k for k = 1, 2, ...; stored, never enforced
    locality_budget: list[float] | None = None

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if (self.weights < 0).any():
            raise GraphError("weights must be nonnegative")
        if not (self.weights > 0).any():
            raise GraphError("at least one weight must be positive")
        if self.mode not in ("global", "local"):
            raise GraphError(f"unknown measure mode {self.mode!r}")
        if not self.scale > 0:
            raise GraphError("scale must be positive")

    @classmethod
    def build(cls, g: FiniteGraph, weights=None, mode: str = "global") -> "Measure":
        w = np.ones(g.n) if weights is None else np.asarray(weights, dtype=float)
        if len(w) != g.n:
            raise GraphError("need one weight per vertex")
        uniform = bool(len(w)) and bool(np.all(w == w[0])) and w[0] > 0
        if mode == "global":
            total = float(w.sum())
            if total <= 0:
                raise GraphError("at least one weight must be positive")
            exact = Fraction(1, g.n) / Fraction(w[0]) if uniform else None
            return cls(w, 1.0 / total, "global", exact)
        if mode == "local":
            A = g.adjacency()
            ball_w = A @ w
            med = float(np.median(ball_w))
            if med <= 0:
                raise GraphError("median 1-ball weight is zero")
            exact = None
            if uniform:
                d = np.sort(g.degrees())
                k = len(d)
                med_deg = Fraction(int(d[k // 2])) if k % 2 else Fraction(int(d[k // 2 - 1] + d[k // 2]), 2)
                exact = 1 / (med_deg * Fraction(w[0]))
            return cls(w, 1.0 / med, "local", exact)
        raise GraphError(f"unknown measure mode {mode!r}")

    @property
    def uniform(self) -> bool:
        return self.exact_scale is not None

    @property
    def unit(self) -> Fraction:
        """Exact mass of a single vertex (uniform measures only)."""
        if self.exact_scale is None:
            raise GraphError("measure is not uniform")
        return self.exact_scale * Fraction(self.weights[0])

    def atoms(self) -> np.ndarray:
        return self.scale * self.weights

    def mass(self, vertices) -> float:
        idx = np.fromiter(vertices, dtype=np.int64)
        return float(self.scale * self.weights[idx].sum())

    def mass_exact(self, vertices) -> Fraction:
        vs = list(vertices)
        if self.uniform:
            return self.unit * len(vs)
        return sum((Fraction(self.scale) * Fraction(self.weights[v]) for v in vs), Fraction(0))


def _value(x):
    """Fractions are kept, everything else goes to float."""
    return x if isinstance(x, Fraction) else float(x)


# ---------------------------------------------------------------------------
# Doubling


def _greedy_cover(universe: int, candidates: list[int]) -> list[int]:
    uncovered = universe
    chosen = []
    while uncovered:
        best = max(range(len(candidates)), key=lambda i: (candidates[i] & uncovered).bit_count())
        if not candidates[best] & uncovered:
            raise GraphError("candidate balls do not cover the target set")
        chosen.append(best)
        uncovered &= ~candidates[best]
    return chosen


def _exact_cover(universe: int, candidates: list[int], upper: list[int]) -> list[int]:
    """Minimum set cover by branch and bound, seeded with a known cover."""
    best = list(upper)
    # drop candidates dominated by another one
    cands = sorted(set(c & universe for c in candidates), key=lambda c: -c.bit_count())
    kept: list[int] = []
    for c in cands:
        if not any((c | k) == k for k in kept):
            kept.append(c)
    idx_of = {c & universe: i for i, c in enumerate(candidates)}
    maxsize = max(k.bit_count() for k in kept)

    def rec(uncovered: int, picked: list[int]):
        nonlocal best
        if not uncovered:
            if len(picked) < len(best):
                best = [idx_of[c] for c in picked]
            return
        # each further pick covers at most maxsize points
        if len(picked) + -(-uncovered.bit_count() // maxsize) >= len(best):
            return
        low = uncovered & -uncovered
        for c in kept:
            if c & low:
                picked.append(c)
                rec(uncovered & ~c, picked)
                picked.pop()

    rec(universe, [])
    return best


def _disjoint_packing(g: FiniteGraph, points: list[int]) -> list[int]:
    """Greedy points with pairwise disjoint 1-balls."""
    bits = g.bits
    used = 0
    out = []
    for p in points:
        if not bits[p] & used:
            out.append(p)
            used |= bits[p]
    return out


@dataclass
class DoublingResult:
    k_lower: int
    k_upper: int
    per_vertex: list[tuple[int, int]]
    witnesses: list[list[int]]
    exact: list[bool]


def doubling_constant(g: FiniteGraph, exact_threshold: int = 24) -> DoublingResult:
    """Bounds on the number of 1-balls needed to cover every 2-ball.

    The upper bound is a greedy (or, for small 2-balls, minimum) cover whose
    centres are kept as witnesses.  The lower bound is a set of points of
    ``R^2(a)`` with pairwise disjoint 1-balls: no single 1-ball contains two
    of them, so any cover needs at least that many balls.
    """
    if g.n == 0:
        raise GraphError("empty graph")
    bits = g.bits
    per_vertex, witnesses, exact = [], [], []
    for a in range(g.n):
        two = g.ball_bits(a, 2)
        three = g.ball_bits(a, 3)
        centers = _bits_to_list(three)
        cands = [bits[b] & two for b in centers]
        pick = _greedy_cover(two, cands)
        is_exact = two.bit_count() <= exact_threshold
        if is_exact:
            pick = _exact_cover(two, cands, pick)
        cover = [centers[i] for i in pick]
        # far points first: they are the ones a single ball cannot share
        pts = [v for layer in reversed(g.layers(a, 2)) for v in _bits_to_list(layer)]
        lower = len(cover) if is_exact else len(_disjoint_packing(g, pts))
        per_vertex.append((lower, len(cover)))
        witnesses.append(cover)
        exact.append(is_exact)
    return DoublingResult(max(lo for lo, _ in per_vertex), max(up for _, up in per_vertex),
                          per_vertex, witnesses, exact)


def ruzsa_cover(g: FiniteGraph, a: int, r: int) -> list[int]:
    """Maximal centres in ``R^r(a)`` with disjoint 1-balls; their 2-balls cover ``R^r(a)``."""
    if r < 1:
        raise GraphError("radius must be at least 1")
    layers = g.layers(a, r)
    region = 0
    for layer in layers:
        region |= layer
    pts = [v for layer in layers for v in _bits_to_list(layer)]
    centers = _disjoint_packing(g, pts)
    covered = 0
    for c in centers:
        covered |= g.ball_bits(c, 2)
    if region & ~covered:
        raise GraphError("Ruzsa cover failed to cover the ball")
    return centers


# ---------------------------------------------------------------------------
# Measure axiom and weak Fubini


def ball_masses(g: FiniteGraph, mu: Measure, r: int = 1):
    """Per-vertex ``mu(R^r(a))``, exact in the uniform case."""
    if r == 1:
        if mu.uniform:
            return [mu.unit * int(d) for d in g.degrees()]
        return list(g.adjacency() @ mu.atoms())
    out = []
    atoms = mu.atoms()
    for a in range(g.n):
        b = g.ball_bits(a, r)
        out.append(mu.unit * b.bit_count() if mu.uniform
                   else float(atoms[_bits_to_list(b)].sum()))
    return out


def check_measure_axiom(g: FiniteGraph, mu: Measure):
    """Return ``(varpi, kappa)``: the tightest ball-mass bounds."""
    one = ball_masses(g, mu, 1)
    varpi = None
    for a, m in enumerate(one):
        if m == 0:
            raise AxiomViolation(a, "neighbour set has measure zero")
        v = max(m, 1 / m)
        varpi = v if varpi is None else max(varpi, v)
    kappa = max(ball_masses(g, mu, 3))
    return _value(varpi), _value(kappa)


def overlap_counts(g: FiniteGraph) -> sparse.csr_matrix:
    """``C[x, z] = |R(x) & R(z)|`` as a sparse integer matrix."""
    A = g.adjacency().astype(np.int64)
    return (A @ A).tocsr()


def overlap_masses(g: FiniteGraph, mu: Measure) -> sparse.csr_matrix:
    """``O[x, z] = mu(R(x) & R(z))`` (float)."""
    A = g.adjacency().astype(float)
    return (A @ sparse.diags(mu.atoms()) @ A).tocsr()


@dataclass
class FubiniResult:
    theta: object
    supremum: object
    attained: bool
    per_vertex: list
    violation: bool = False


def weak_fubini(g: FiniteGraph, mu: Measure) -> FubiniResult:
    """Largest level ``t`` with ``mu{b : mu(R(a) & R(b)) >= t} > t`` for all ``a``.

    Per vertex the feasible levels form an interval ``(0, s_a)`` or
    ``(0, s_a]`` where ``s_a = max_j min(L_j, M_j)`` over attained overlap
    levels ``L_j`` and cumulative masses ``M_j``.  The global supremum is the
    minimum of the ``s_a``.  When it is not attained the reported value is
    ``s * (n - 1) / n``, the largest point of that grid strictly inside.
    """
    n = g.n
    exact = mu.uniform
    C = overlap_counts(g) if exact else overlap_masses(g, mu)
    atoms = mu.atoms()
    sup_per = []
    for a in range(n):
        row = C.getrow(a)
        vals, cols = row.data, row.indices
        keep = vals > 0
        vals, cols = vals[keep], cols[keep]
        if exact:
            # integer levels with multiplicities; masses are counts
            order = np.argsort(-vals, kind="stable")
            lv = vals[order]
            cum = np.arange(1, len(lv) + 1)
            last = np.r_[lv[1:] != lv[:-1], True]
            s = int(np.max(np.minimum(lv[last], cum[last])))
        else:
            w = atoms[cols]
            order = np.argsort(-vals, kind="stable")
            lv, cw = vals[order], np.cumsum(w[order])
            last = np.r_[lv[1:] != lv[:-1], True]
            s = float(np.max(np.minimum(lv[last], cw[last])))
        sup_per.append(s)
    s_min = min(sup_per)

    attained = True
    for a in range(n):
        row = C.getrow(a)
        if exact:
            mass = int((row.data >= s_min).sum())
            if not mass > s_min:
                attained = False
                break
        else:
            sel = row.indices[row.data >= s_min]
            if not atoms[sel].sum() > s_min:
                attained = False
                break
    if exact:
        sup = mu.unit * s_min
        per = [mu.unit * s for s in sup_per]
    else:
        sup = float(s_min)
        per = [float(s) for s in sup_per]
    if attained:
        theta = sup
    else:
        theta = sup * Fraction(n - 1, n) if exact else sup * (n - 1) / n
    return FubiniResult(theta=theta, supremum=sup, attained=attained, per_vertex=per,
                        violation=not theta > 0)


# ---------------------------------------------------------------------------
# Axiom report


@dataclass
class AxiomReport:
    k_lower: int
    k_upper: int
    varpi: object
    kappa: object
    theta: object
    connected: bool
    passes: dict = field(default_factory=dict)
    components: list = field(default_factory=list)
    normalized_input: bool = False

    def ok(self) -> bool:
        return all(self.passes.values())


def check_axioms(g: FiniteGraph, mu: Measure, exact_threshold: int = 24,
                 max_k: int | None = None, max_varpi=None, max_kappa=None,
                 fubini_floor=None) -> AxiomReport:
    """Run the three axiom checks, overall and per connected component.

    ``fubini_floor`` defaults to the largest single-vertex mass: any reflexive
    relation reaches that level through ``b = a`` alone, so only a larger
    ``theta`` witnesses the weak Fubini property non-trivially.
    """
    dbl = doubling_constant(g, exact_threshold)
    varpi, kappa = check_measure_axiom(g, mu)
    fub = weak_fubini(g, mu)
    if fubini_floor is None:
        fubini_floor = (mu.unit if mu.uniform else float(mu.atoms().max()))
    passes = {
        "doubling": max_k is None or dbl.k_upper <= max_k,
        "measure": (max_varpi is None or varpi <= max_varpi)
                   and (max_kappa is None or kappa <= max_kappa),
        "weak_fubini": bool(fub.theta > fubini_floor),
    }
    labels = g.components()
    comps = []
    one = ball_masses(g, mu, 1)
    for c in range(int(labels.max()) + 1 if g.n else 0):
        vs = np.flatnonzero(labels == c)
        comps.append({
            "component": c,
            "size": int(len(vs)),
            "k_upper": max(dbl.per_vertex[v][1] for v in vs),
            "k_lower": max(dbl.per_vertex[v][0] for v in vs),
            "varpi": _value(max(max(one[v], 1 / one[v]) for v in vs)),
            "theta_sup": _value(min(fub.per_vertex[v] for v in vs)),
        })
    return AxiomReport(dbl.k_lower, dbl.k_upper, varpi, kappa, fub.theta,
                       connected=len(comps) == 1, passes=passes, components=comps,
                       normalized_input=g.normalized)


# ---------------------------------------------------------------------------
# IO


def read_edge_list(path, weights_path=None, mode: str = "global"):
    """Read the ``n m`` edge-list format (and an optional weights file)."""
    lines = [ln.strip() for ln in open(path) if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise GraphError(f"{path}: empty edge list")
    n, m = (int(x) for x in lines[0].split()[:2])
    if len(lines) - 1 != m:
        raise GraphError(f"{path}: header says {m} edges, found {len(lines) - 1}")
    edges = [tuple(int(x) for x in ln.split()[:2]) for ln in lines[1:]]
    g = FiniteGraph.from_edges(n, edges)
    weights = None
    if weights_path is not None:
        weights = [float(ln) for ln in open(weights_path) if ln.strip() and not ln.startswith("#")]
        if len(weights) != n:
            raise GraphError(f"{weights_path}: expected {n} weights, found {len(weights)}")
    return g, Measure.build(g, weights, mode)


def format_edge_list(g: FiniteGraph) -> str:
    edges = g.edges(loops=False)
    out = [f"{g.n} {len(edges)}"]
    out += [f"{u} {v}" for u, v in edges]
    return "\n".join(out) + "\n"
