"""Example families as graph + measure instances.

Random generators draw from a Philox counter-based stream seeded with a
64-bit integer; the seed and every parameter go into ``provenance`` so
:func:`regenerate` rebuilds the instance bit for bit.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .graph import FiniteGraph, GraphError, Measure, format_edge_list, read_edge_list

RNG_NAME = "philox4x64"


def make_rng(seed: int) -> np.random.Generator:
    if not 0 <= int(seed) < 2 ** 64:
        raise GraphError("seed must be a 64-bit unsigned integer")
    return np.random.Generator(np.random.Philox(int(seed)))


@dataclass
class GeneratedInstance:
    graph: FiniteGraph
    measure: Measure
    provenance: dict
    coords: np.ndarray | None = None
    labels: list | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.graph.n


def _provenance(name, seed=None, **params):
    out = {"generator": name, "params": params}
    if seed is not None:
        out["seed"] = int(seed)
        out["rng"] = RNG_NAME
    return out


# ---------------------------------------------------------------------------
# Deterministic families


def cycle_interval(N: int, w: int) -> GeneratedInstance:
    """``Z/N`` with ``x ~ y`` iff the cyclic distance is at most ``w``."""
    if N < 2 * w + 2 or w < 0:
        raise GraphError(f"cycle_interval needs N >= 2w+2, got N={N}, w={w}")
    edges = [(i, (i + j) % N) for i in range(N) for j in range(1, w + 1)]
    g = FiniteGraph.from_edges(N, edges)
    return GeneratedInstance(g, Measure.build(g), _provenance("cycle_interval", N=N, w=w))


def interval_line(n: int, w: int) -> GeneratedInstance:
    """Integers in ``[-n, n]`` with ``x ~ y`` iff ``|x - y| <= w``; vertex ``i`` is ``i - n``."""
    if n < 0 or w < 0:
        raise GraphError("interval_line needs n, w >= 0")
    size = 2 * n + 1
    edges = [(i, i + j) for i in range(size) for j in range(1, w + 1) if i + j < size]
    g = FiniteGraph.from_edges(size, edges)
    coords = (np.arange(size) - n).astype(float)[:, None]
    return GeneratedInstance(g, Measure.build(g), _provenance("interval_line", n=n, w=w),
                             coords=coords)


# ---------------------------------------------------------------------------
# Geometry


def _torus_delta(a: np.ndarray, b: np.ndarray, L: float) -> np.ndarray:
    d = np.abs(a - b)
    return np.minimum(d, L - d)


def _torus_edges(points: np.ndarray, L: float, radius: float = 1.0) -> list[tuple[int, int]]:
    tree = cKDTree(np.mod(points, L), boxsize=L)
    return sorted(tree.query_pairs(radius))


class _Grid:
    """Spatial hash on the torus for separation tests."""

    def __init__(self, L: float, dim: int, cell: float):
        self.L = L
        self.dim = dim
        self.k = max(1, int(L // cell))
        self.cell = L / self.k
        self.cells: dict[tuple, list[int]] = {}
        self.points: list[np.ndarray] = []
        self.offsets = np.array(np.meshgrid(*[[-1, 0, 1]] * dim, indexing="ij")).reshape(dim, -1).T

    def _key(self, p):
        return tuple((np.floor(p / self.cell).astype(int) % self.k).tolist())

    def near(self, p, r: float) -> bool:
        base = np.floor(p / self.cell).astype(int)
        seen = set()
        for off in self.offsets:
            key = tuple(((base + off) % self.k).tolist())
            if key in seen:
                continue
            seen.add(key)
            for i in self.cells.get(key, ()):
                if np.sqrt((_torus_delta(p, self.points[i], self.L) ** 2).sum()) < r:
                    return True
        return False

    def add(self, p):
        self.cells.setdefault(self._key(p), []).append(len(self.points))
        self.points.append(p)


def torus_packing(dim: int, L: float, eps: float, seed: int, probes: int = 1000) -> GeneratedInstance:
    """Greedy maximal ``eps``-separated set on the flat torus ``(R/LZ)^dim``.

    Candidates come from a uniform stream of length ``50 (L/eps)^dim``,
    followed by a grid sweep at spacing ``eps/4`` that fills leftover holes.
    Maximality is then audited with seeded uniform probes.
    """
    if not (1 <= dim <= 3 and 0 < eps <= 1 < L / 2):
        raise GraphError("torus_packing needs dim in 1..3 and 0 < eps <= 1 < L/2")
    rng = make_rng(seed)
    grid = _Grid(L, dim, eps)
    stream = int(math.ceil(50 * (L / eps) ** dim))
    cand = rng.random((stream, dim)) * L
    for p in cand:
        if not grid.near(p, eps):
            grid.add(p)
    steps = int(math.ceil(L / (eps / 4)))
    axis = (np.arange(steps) + 0.5) * (L / steps)
    for p in np.array(np.meshgrid(*[axis] * dim, indexing="ij")).reshape(dim, -1).T:
        if not grid.near(p, eps):
            grid.add(p)
    rounds = _fill_corners(grid, eps, L) if dim <= 2 else 0
    pts = np.array(grid.points)
    probe = rng.random((probes, dim)) * L
    tree = cKDTree(pts, boxsize=L)
    dist, _ = tree.query(probe)
    holes = int((dist >= eps).sum())
    g = FiniteGraph.from_edges(len(pts), _torus_edges(pts, L))
    prov = _provenance("torus_packing", seed=seed, dim=dim, L=L, eps=eps, probes=probes)
    return GeneratedInstance(g, Measure.build(g), prov, coords=pts,
                             meta={"probe_holes": holes, "stream": stream, "fill_rounds": rounds})


def _corner_candidates(pts: np.ndarray, eps: float, L: float) -> np.ndarray:
    """Corners of the region left uncovered by the ``eps``-balls, nudged outward.

    Any open hole has a boundary corner: in one dimension the points
    ``p +- eps``, in two the intersections of two ``eps``-circles.
    """
    nudge = 1e-9 * eps
    if pts.shape[1] == 1:
        return np.mod(np.concatenate([pts + eps + nudge, pts - eps - nudge]), L)
    tree = cKDTree(pts, boxsize=L)
    pairs = np.array(sorted(tree.query_pairs(2 * eps)), dtype=np.int64).reshape(-1, 2)
    if not len(pairs):
        return np.empty((0, 2))
    p, q = pts[pairs[:, 0]], pts[pairs[:, 1]]
    delta = q - p
    delta -= L * np.round(delta / L)
    half = np.linalg.norm(delta, axis=1) / 2
    keep = (half > 0) & (half < eps)
    p, delta, half = p[keep], delta[keep], half[keep]
    mid = p + delta / 2
    normal = np.stack([-delta[:, 1], delta[:, 0]], axis=1) / (2 * half)[:, None]
    h = np.sqrt(eps * eps - half * half)[:, None] + nudge
    return np.mod(np.concatenate([mid + h * normal, mid - h * normal]), L)


def _fill_corners(grid: "_Grid", eps: float, L: float) -> int:
    """Add uncovered corner points until none is left; returns the round count."""
    rounds = 0
    while True:
        cand = _corner_candidates(np.array(grid.points), eps, L)
        added = 0
        for p in cand:
            if not grid.near(p, eps):
                grid.add(p)
                added += 1
        rounds += 1
        if not added:
            return rounds


def sprinkle(space: str, n: int, seed: int, dim: int = 2, L: float = 8.0) -> GeneratedInstance:
    """``n`` uniform points on a torus or the unit sphere, joined at distance ``<= 1``.

    The measure is uniform in local mode.
    """
    if n < 1:
        raise GraphError("sprinkle needs n >= 1")
    rng = make_rng(seed)
    if space == "torus":
        if not 1 <= dim <= 3 or not L > 2:
            raise GraphError("torus sprinkle needs dim in 1..3 and L > 2")
        pts = np.mod(rng.random((n, dim)) * L, L)
        edges = _torus_edges(pts, L)
        prov = _provenance("sprinkle", seed=seed, space="torus", n=n, dim=dim, L=L)
    elif space == "sphere2":
        x = rng.standard_normal((n, 3))
        pts = x / np.linalg.norm(x, axis=1, keepdims=True)
        # geodesic distance <= 1 on the unit sphere, via the dot product
        tree = cKDTree(pts)
        chord = 2 * math.sin(0.5) * (1 + 1e-12)
        edges = sorted((i, j) for i, j in tree.query_pairs(chord)
                       if np.arccos(np.clip(pts[i] @ pts[j], -1, 1)) <= 1.0)
        prov = _provenance("sprinkle", seed=seed, space="sphere2", n=n)
    else:
        raise GraphError(f"unknown space {space!r}")
    g = FiniteGraph.from_edges(n, edges)
    return GeneratedInstance(g, Measure.build(g, mode="local"), prov, coords=pts)


# ---------------------------------------------------------------------------
# Groups


def cayley_relation(group, X) -> GeneratedInstance:
    """``x ~ y`` iff ``x^-1 y`` lies in the symmetric set ``X`` (identity added)."""
    X = sorted(set(int(x) for x in X))
    added_identity = group.identity not in X
    if added_identity:
        X = sorted(X + [group.identity])
    xs = set(X)
    for x in X:
        if int(group.inv[x]) not in xs:
            raise GraphError(f"X is not symmetric: inverse of element {x} is missing")
    rows, cols = [], []
    for x in X:
        # y = g * x for every g
        rows.append(np.arange(group.order))
        cols.append(group.right_mul(x))
    r, c = np.concatenate(rows), np.concatenate(cols)
    g = FiniteGraph.from_edges(group.order, zip(r.tolist(), c.tolist()))
    prov = _provenance("cayley_relation", group=group.name, X=X)
    return GeneratedInstance(g, Measure.build(g), prov, labels=group.labels(),
                             meta={"identity_added": added_identity})


def heisenberg_ball(entry_bound: int, modulus: int):
    """Unitriangular 3x3 matrices over ``Z/modulus`` and the box of small entries."""
    from .groupmix import heisenberg_group

    if entry_bound < 0 or modulus < 2 * entry_bound + 1:
        raise GraphError("modulus must be at least 2*entry_bound + 1")
    G = heisenberg_group(modulus)
    small = {v % modulus for v in range(-entry_bound, entry_bound + 1)}
    X = [i for i, (a, b, c) in enumerate(G.elements.tolist())
         if a in small and b in small and c in small]
    return G, X


# ---------------------------------------------------------------------------
# Persistence


def regenerate(provenance: dict) -> GeneratedInstance:
    name = provenance["generator"]
    p = dict(provenance["params"])
    if name == "cycle_interval":
        return cycle_interval(**p)
    if name == "interval_line":
        return interval_line(**p)
    if name == "torus_packing":
        return torus_packing(seed=provenance["seed"], **p)
    if name == "sprinkle":
        return sprinkle(seed=provenance["seed"], **p)
    raise GraphError(f"cannot regenerate {name!r} from provenance alone")


def save_instance(inst: GeneratedInstance, directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    _atomic_write(d / "graph.edges", format_edge_list(inst.graph))
    _atomic_write(d / "weights.txt", "".join(f"{w:.17g}\n" for w in inst.measure.weights))
    prov = dict(inst.provenance)
    prov["measure_mode"] = inst.measure.mode
    prov["n"] = inst.graph.n
    if inst.meta:
        prov["meta"] = inst.meta
    _atomic_write(d / "provenance.json", json.dumps(prov, indent=2, sort_keys=True) + "\n")
    if inst.coords is not None:
        c = np.asarray(inst.coords)
        head = ",".join(f"x{i}" for i in range(c.shape[1]))
        body = "".join(",".join(f"{v:.17g}" for v in row) + "\n" for row in c)
        _atomic_write(d / "coords.csv", head + "\n" + body)
    return d


def load_instance(directory) -> GeneratedInstance:
    d = Path(directory)
    prov = json.loads((d / "provenance.json").read_text()) if (d / "provenance.json").exists() else {}
    weights = d / "weights.txt"
    g, mu = read_edge_list(d / "graph.edges", weights if weights.exists() else None,
                           prov.get("measure_mode", "global"))
    coords = None
    if (d / "coords.csv").exists():
        coords = np.loadtxt(d / "coords.csv", delimiter=",", skiprows=1, ndmin=2)
    return GeneratedInstance(g, mu, prov, coords=coords)


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)
