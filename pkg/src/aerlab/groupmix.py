"""Convolution and mixing on finite groups.

Groups are enumerated: element ``i`` is row ``i`` of ``elements`` and products
go through a multiplication table (small groups) or a vectorised formula plus
an index lookup (larger ones).  Functions on a group are plain arrays; exact
arithmetic uses integer arrays with a common denominator.
"""
from __future__ import annotations

import math
import time
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

TABLE_MAX = 5000
EXACT_MAX = 4000


class GroupError(ValueError):
    pass


class FiniteGroup:
    """Finite group on indices ``0..order-1``.

    ``multiply(A, B)`` maps two arrays of element rows to their products and
    ``encode`` maps element rows to integer codes, so ``lookup[encode(E)]``
    recovers indices.
    """

    def __init__(self, name: str, elements: np.ndarray, multiply: Callable, encode: Callable,
                 table_max: int = TABLE_MAX):
        self.name = name
        self.elements = np.asarray(elements, dtype=np.int64)
        self.order = len(self.elements)
        self._multiply = multiply
        self._encode = encode
        codes = encode(self.elements)
        self._lookup = np.full(int(codes.max()) + 1, -1, dtype=np.int64)
        self._lookup[codes] = np.arange(self.order)
        self.table = None
        if self.order <= table_max:
            dtype = np.int16 if self.order < 2 ** 15 else np.int32
            self.table = np.empty((self.order, self.order), dtype=dtype)
            for i in range(self.order):
                self.table[i] = self._row(i)
        # the identity is the unique idempotent
        self.identity = int(self._find_identity())
        self.inv = self._inverses()

    def _index(self, rows: np.ndarray) -> np.ndarray:
        idx = self._lookup[self._encode(rows)]
        if (idx < 0).any():
            raise GroupError("product left the enumerated element set")
        return idx

    def _row(self, i: int) -> np.ndarray:
        a = np.broadcast_to(self.elements[i], self.elements.shape)
        return self._index(self._multiply(a, self.elements))

    def _find_identity(self) -> int:
        sq = self._index(self._multiply(self.elements, self.elements))
        fixed = np.flatnonzero(sq == np.arange(self.order))
        if len(fixed) != 1:
            raise GroupError("could not identify a unique identity element")
        return fixed[0]

    def _inverses(self) -> np.ndarray:
        inv = np.empty(self.order, dtype=np.int64)
        for i in range(self.order):
            row = self.left_mul(i)
            j = np.flatnonzero(row == self.identity)
            if len(j) != 1:
                raise GroupError(f"element {i} has no unique inverse")
            inv[i] = j[0]
        return inv

    def left_mul(self, t: int) -> np.ndarray:
        """Indices of ``t * x`` for every ``x``."""
        if self.table is not None:
            return self.table[t].astype(np.int64)
        return self._row(t)

    def right_mul(self, x: int) -> np.ndarray:
        """Indices of ``g * x`` for every ``g``."""
        if self.table is not None:
            return self.table[:, x].astype(np.int64)
        b = np.broadcast_to(self.elements[x], self.elements.shape)
        return self._index(self._multiply(self.elements, b))

    def mul(self, a, b):
        """Elementwise product of index arrays (or scalars)."""
        a = np.asarray(a)
        b = np.asarray(b)
        if self.table is not None:
            return self.table[a, b].astype(np.int64)
        A, B = np.broadcast_arrays(a, b)
        out = self._index(self._multiply(self.elements[A.ravel()], self.elements[B.ravel()]))
        return out.reshape(A.shape)

    def labels(self) -> list[str]:
        return [",".join(str(v) for v in row) for row in self.elements.tolist()]

    def audit(self, samples: int = 1000, seed: int = 0) -> None:
        """Spot-check associativity, identity and inverses on seeded triples."""
        rng = np.random.Generator(np.random.Philox(seed))
        a, b, c = rng.integers(0, self.order, size=(3, samples))
        if not np.array_equal(self.mul(self.mul(a, b), c), self.mul(a, self.mul(b, c))):
            raise GroupError(f"{self.name}: associativity fails")
        e = np.full(samples, self.identity)
        if not (np.array_equal(self.mul(e, a), a) and np.array_equal(self.mul(a, e), a)):
            raise GroupError(f"{self.name}: identity fails")
        if not (self.mul(a, self.inv[a]) == self.identity).all() or \
                not (self.mul(self.inv[a], a) == self.identity).all():
            raise GroupError(f"{self.name}: inverse table inconsistent")

    def __repr__(self):
        return f"FiniteGroup({self.name}, order={self.order})"


def cyclic_group(N: int) -> FiniteGroup:
    return FiniteGroup(f"Z/{N}", np.arange(N)[:, None],
                       lambda A, B: (A + B) % N, lambda E: E[:, 0])


def _is_prime(p: int) -> bool:
    return p >= 2 and all(p % q for q in range(2, math.isqrt(p) + 1))


SL2_PRIME_CAP = 31


def sl2_group(p: int, table_max: int = TABLE_MAX) -> FiniteGroup:
    """All 2x2 matrices over ``F_p`` of determinant 1; rows are ``(a, b, c, d)``."""
    if not _is_prime(p) or p > SL2_PRIME_CAP:
        raise GroupError(f"p must be a prime <= {SL2_PRIME_CAP}, got {p}")
    r = np.arange(p)
    a, b, c, d = (x.ravel() for x in np.meshgrid(r, r, r, r, indexing="ij"))
    keep = (a * d - b * c) % p == 1
    E = np.stack([a[keep], b[keep], c[keep], d[keep]], axis=1)

    def mul(X, Y):
        return np.stack([(X[:, 0] * Y[:, 0] + X[:, 1] * Y[:, 2]) % p,
                         (X[:, 0] * Y[:, 1] + X[:, 1] * Y[:, 3]) % p,
                         (X[:, 2] * Y[:, 0] + X[:, 3] * Y[:, 2]) % p,
                         (X[:, 2] * Y[:, 1] + X[:, 3] * Y[:, 3]) % p], axis=1)

    def enc(X):
        return ((X[:, 0] * p + X[:, 1]) * p + X[:, 2]) * p + X[:, 3]

    return FiniteGroup(f"SL2(F{p})", E, mul, enc, table_max)


def heisenberg_group(q: int) -> FiniteGroup:
    """Upper unitriangular 3x3 matrices over ``Z/q``; row ``(a, b, c)`` is
    ``[[1, a, c], [0, 1, b], [0, 0, 1]]``."""
    r = np.arange(q)
    a, b, c = (x.ravel() for x in np.meshgrid(r, r, r, indexing="ij"))
    E = np.stack([a, b, c], axis=1)

    def mul(X, Y):
        return np.stack([(X[:, 0] + Y[:, 0]) % q, (X[:, 1] + Y[:, 1]) % q,
                         (X[:, 2] + Y[:, 2] + X[:, 0] * Y[:, 1]) % q], axis=1)

    return FiniteGroup(f"Heis(Z/{q})", E, mul, lambda X: (X[:, 0] * q + X[:, 1]) * q + X[:, 2])


def symmetric_hull(G: FiniteGroup, X) -> list[int]:
    """``X`` together with the inverses of its elements."""
    xs = set(int(x) for x in X)
    return sorted(xs | {int(G.inv[x]) for x in xs})


# ---------------------------------------------------------------------------
# Functions on a group


def _is_rational(values) -> bool:
    return all(isinstance(v, (int, np.integer, Fraction)) for v in values)


def _to_integers(values) -> tuple[np.ndarray, int]:
    """Integer numerators over a common denominator."""
    fr = [Fraction(v) for v in values]
    den = 1
    for f in fr:
        den = den * f.denominator // math.gcd(den, f.denominator)
    nums = [int(f * den) for f in fr]
    big = max((abs(x) for x in nums), default=0)
    dtype = np.int64 if big < 2 ** 62 else object
    return np.array(nums, dtype=dtype), den


@dataclass
class GroupFunction:
    """Real function on a group; ``values`` is a float array or a list of Fractions."""

    group: FiniteGroup
    values: object
    exact: bool = field(default=False)

    @classmethod
    def of(cls, G: FiniteGroup, values) -> "GroupFunction":
        vals = list(values) if not isinstance(values, np.ndarray) or values.dtype == object \
            else values
        if isinstance(vals, list) and _is_rational(vals):
            return cls(G, [Fraction(v) for v in vals], exact=True)
        arr = np.asarray(values, dtype=float)
        if not np.isfinite(arr).all():
            raise GroupError("function values must be finite")
        return cls(G, arr, exact=False)

    def __len__(self):
        return self.group.order

    def as_float(self) -> np.ndarray:
        return np.array([float(v) for v in self.values]) if self.exact else self.values

    def l1(self):
        """``(1/|G|) sum |f(x)|``."""
        if self.exact:
            return sum((abs(v) for v in self.values), Fraction(0)) / self.group.order
        return float(np.abs(self.values).sum() / self.group.order)

    def translate(self, w: int) -> "GroupFunction":
        """``x -> f(w x)``."""
        idx = self.group.left_mul(w)
        if self.exact:
            return GroupFunction(self.group, [self.values[i] for i in idx], True)
        return GroupFunction(self.group, self.values[idx], False)


def delta(G: FiniteGroup) -> GroupFunction:
    """Point mass at the identity with unit L1 norm."""
    v = [Fraction(0)] * G.order
    v[G.identity] = Fraction(G.order)
    return GroupFunction(G, v, True)


def constant(G: FiniteGroup, c=1) -> GroupFunction:
    return GroupFunction(G, [Fraction(c)] * G.order, True)


def indicator_density(G: FiniteGroup, members) -> GroupFunction:
    """``|G| / |S|`` on ``S`` and 0 elsewhere, so the L1 norm is 1."""
    members = np.unique(np.asarray(members, dtype=np.int64))
    if len(members) == 0:
        raise GroupError("empty support")
    v = [Fraction(0)] * G.order
    val = Fraction(G.order, len(members))
    for m in members.tolist():
        v[m] = val
    return GroupFunction(G, v, True)


def _accumulate(G: FiniteGroup, fv, gv, dtype):
    h = np.zeros(G.order, dtype=dtype)
    comp = np.zeros(G.order) if dtype is float else None
    for t in range(G.order):
        ft = fv[t]
        if ft == 0:
            continue
        term = ft * gv[G.left_mul(int(G.inv[t]))]
        if comp is None:
            h = h + term
        else:
            # compensated summation
            y = term - comp
            s = h + y
            comp = (s - h) - y
            h = s
    return h


def convolve(G: FiniteGroup, f: GroupFunction, g: GroupFunction, exact: bool | None = None) -> GroupFunction:
    """``h(x) = (1/|G|) sum_t f(t) g(t^-1 x)``.

    Exact when both inputs are rational and ``|G| <= 4000`` (unless
    ``exact=False``).
    """
    if f.group is not G or g.group is not G:
        raise GroupError("functions live on different groups")
    use_exact = f.exact and g.exact and G.order <= EXACT_MAX if exact is None else exact
    if use_exact:
        fi, df = _to_integers(f.values)
        gi, dg = _to_integers(g.values)
        bound = int(np.abs(fi).max()) * int(np.abs(gi).max()) * G.order if G.order else 0
        if bound >= 2 ** 62:
            fi, gi = fi.astype(object), gi.astype(object)
        h = _accumulate(G, fi, gi, fi.dtype)
        den = df * dg * G.order
        return GroupFunction(G, [Fraction(int(v), den) for v in h], True)
    h = _accumulate(G, f.as_float(), g.as_float(), float) / G.order
    return GroupFunction(G, h, False)


def l1_distance_to_uniform(G: FiniteGroup, h: GroupFunction):
    """``(1/|G|) sum |h(x) - 1|``."""
    if h.exact:
        return sum((abs(v - 1) for v in h.values), Fraction(0)) / G.order
    return float(np.abs(h.values - 1.0).sum() / G.order)


@dataclass
class StabilizerResult:
    elements: list[int]
    is_subgroup: bool
    index: Fraction


def stabilizer_of(G: FiniteGroup, h: GroupFunction, tol=0) -> StabilizerResult:
    """``{w : (1/|G|) sum_x |h(w x) - h(x)| <= tol}`` with a closure check."""
    if h.exact:
        # compare numerators; tol scales with the common denominator
        vals, den = _to_integers(h.values)
        tol_n = Fraction(tol) * den * G.order
    else:
        vals = h.values
        tol_n = float(tol) * G.order
    S = []
    for w in range(G.order):
        diff = vals[G.left_mul(w)] - vals
        total = sum(abs(int(x)) for x in diff) if vals.dtype == object else np.abs(diff).sum()
        total = int(total) if h.exact else float(total)
        if total <= tol_n:
            S.append(w)
    member = np.zeros(G.order, dtype=bool)
    member[S] = True
    closed = bool(member[G.inv[S]].all())
    if closed:
        Sa = np.array(S)
        for a in S:
            if not member[G.left_mul(a)[Sa]].all():
                closed = False
                break
    return StabilizerResult(S, closed, Fraction(G.order, len(S)))


# ---------------------------------------------------------------------------
# Mixing experiments


def quadratic_residues(p: int) -> set[int]:
    return {(x * x) % p for x in range(1, p)}


def trace_density(G: FiniteGroup, p: int) -> GroupFunction:
    """Normalised indicator of ``{M : trace(M) is a nonzero square mod p}``."""
    qr = quadratic_residues(p)
    tr = (G.elements[:, 0] + G.elements[:, 3]) % p
    return indicator_density(G, np.flatnonzero(np.isin(tr, sorted(qr))))


def interval_density(G: FiniteGroup, N: int) -> GroupFunction:
    """``10`` times the indicator of the first ``N/10`` residues of ``Z/N``."""
    k = N // 10
    if k == 0 or N % 10:
        raise GroupError("interval density needs N divisible by 10")
    return indicator_density(G, np.arange(k))


@dataclass
class MixingRow:
    param: int
    density: str
    l1_dist: object
    runtime_ms: float


def mixing_experiment(family: str, params, density: str = "default") -> list[MixingRow]:
    """``|| f * f - 1 ||_1`` across a family of groups.

    ``sl2`` takes primes and defaults to the quadratic-residue trace density;
    ``cyclic`` takes moduli and defaults to the interval density.  ``const``
    uses ``f = 1`` on either family.
    """
    rows = []
    for param in params:
        t0 = time.perf_counter()
        if family == "sl2":
            G = sl2_group(param)
            name = "trace_qr" if density == "default" else density
            f = trace_density(G, param) if name == "trace_qr" else None
        elif family == "cyclic":
            G = cyclic_group(param)
            name = "interval" if density == "default" else density
            f = interval_density(G, param) if name == "interval" else None
        else:
            raise GroupError(f"unknown family {family!r}")
        if name == "const":
            f = constant(G)
        if f is None:
            raise GroupError(f"unknown density {density!r} for family {family}")
        h = convolve(G, f, f)
        rows.append(MixingRow(param, name, l1_distance_to_uniform(G, h),
                              round(1000 * (time.perf_counter() - t0), 3)))
    return rows


# ---------------------------------------------------------------------------
# Word maps


def parse_word(word: str) -> list[tuple[int, int]]:
    """``"abAB"`` -> letters with exponents; uppercase means inverse."""
    out = []
    for ch in word.replace(" ", ""):
        if not ch.isalpha():
            raise GroupError(f"bad letter {ch!r} in word {word!r}")
        out.append((ord(ch.lower()) - ord("a"), -1 if ch.isupper() else 1))
    return out


EXHAUSTIVE_MAX = 10 ** 8


def _evaluate_word(G: FiniteGroup, letters, tuples: np.ndarray) -> np.ndarray:
    cur = np.full(len(tuples), G.identity, dtype=np.int64)
    for letter, e in letters:
        x = tuples[:, letter]
        cur = G.mul(cur, x if e == 1 else G.inv[x])
    return cur


def word_pushforward(G: FiniteGroup, word: str, arity: int | None = None,
                     samples: int | None = None, seed: int | None = None):
    """Density ``F(x) = |G| |w^-1(x)| / |G|^k`` of the word map's pushforward.

    Exhaustive (exact Fractions) when ``|G|^k <= 1e8`` and no sample count is
    given; otherwise seeded Monte Carlo with ``samples`` tuples.  Returns
    ``(F, info)``.
    """
    letters = parse_word(word)
    k = arity if arity is not None else max(l for l, _ in letters) + 1
    if any(l >= k for l, _ in letters):
        raise GroupError("word uses more letters than its arity")
    total = G.order ** k
    if samples is None and total <= EXHAUSTIVE_MAX:
        counts = np.zeros(G.order, dtype=np.int64)
        chunk = max(1, 2_000_000 // max(1, G.order ** (k - 1)))
        rest = np.array(np.meshgrid(*[np.arange(G.order)] * (k - 1), indexing="ij")).reshape(k - 1, -1).T \
            if k > 1 else np.zeros((1, 0), dtype=np.int64)
        for start in range(0, G.order, chunk):
            first = np.arange(start, min(G.order, start + chunk))
            tuples = np.concatenate([np.repeat(first, len(rest))[:, None],
                                     np.tile(rest, (len(first), 1))], axis=1)
            counts += np.bincount(_evaluate_word(G, letters, tuples), minlength=G.order)
        F = GroupFunction(G, [Fraction(G.order * int(c), total) for c in counts], True)
        return F, {"mode": "exhaustive", "tuples": total, "fiber_sum": int(counts.sum())}
    if seed is None:
        raise GroupError("Monte Carlo word pushforward needs a seed")
    samples = samples or 100_000
    rng = np.random.Generator(np.random.Philox(seed))
    tuples = rng.integers(0, G.order, size=(samples, k))
    counts = np.bincount(_evaluate_word(G, letters, tuples), minlength=G.order)
    F = GroupFunction(G, G.order * counts / samples, False)
    return F, {"mode": "monte_carlo", "samples": samples, "seed": seed}


def fiber_profile(F: GroupFunction) -> dict:
    """Histogram of the fibre densities ``F(x)`` (value -> number of ``x``)."""
    return dict(sorted(Counter(F.values if F.exact else np.round(F.values, 12).tolist()).items()))


# ---------------------------------------------------------------------------
# Expansion radius over F_p^2


Poly = list  # [(coeff, i, j), ...] meaning sum coeff * x^i * y^j


def parse_poly(spec) -> Poly:
    """Accept a term list ``[[c, i, j], ...]`` or an expression string in ``x, y``."""
    if isinstance(spec, str):
        import sympy

        x, y = sympy.symbols("x y")
        try:
            P = sympy.Poly(sympy.sympify(spec, locals={"x": x, "y": y}), x, y)
        except (sympy.SympifyError, sympy.PolynomialError, TypeError) as exc:
            raise GroupError(f"malformed polynomial {spec!r}: {exc}") from None
        terms = []
        for (i, j), c in P.terms():
            if not c.is_integer:
                raise GroupError(f"non-integer coefficient in {spec!r}")
            terms.append((int(c), int(i), int(j)))
        return terms
    terms = []
    for t in spec:
        if len(t) != 3 or any(int(v) != v for v in t) or t[1] < 0 or t[2] < 0:
            raise GroupError(f"malformed term {t!r}")
        terms.append((int(t[0]), int(t[1]), int(t[2])))
    return terms


def _eval_poly(P: Poly, X: np.ndarray, Y: np.ndarray, p: int) -> np.ndarray:
    out = np.zeros_like(X)
    for c, i, j in P:
        term = np.full_like(X, c % p)
        for _ in range(i):
            term = term * X % p
        for _ in range(j):
            term = term * Y % p
        out = (out + term) % p
    return out


@dataclass
class ExpansionResult:
    p: int
    cap: int
    xi: np.ndarray
    histogram: dict
    max_attained: int
    exceeded: int


def expansion_radius(p: int, map_spec, curve_spec, cap: int = 50) -> ExpansionResult:
    """Least ``n <= cap`` with ``f^n(a)`` on the curve, for every ``a`` in ``F_p^2``.

    ``xi`` holds ``-1`` where the cap is exceeded.
    """
    if not _is_prime(p) or p > 499:
        raise GroupError("p must be a prime <= 499")
    fx, fy = (parse_poly(s) for s in map_spec)
    curve = parse_poly(curve_spec)
    r = np.arange(p, dtype=np.int64)
    X, Y = (v.ravel() for v in np.meshgrid(r, r, indexing="ij"))
    xi = np.full(p * p, -1, dtype=np.int64)
    for n in range(cap + 1):
        hit = (xi < 0) & (_eval_poly(curve, X, Y, p) == 0)
        xi[hit] = n
        if n < cap:
            X, Y = _eval_poly(fx, X, Y, p), _eval_poly(fy, X, Y, p)
    attained = xi[xi >= 0]
    hist = dict(sorted(Counter(attained.tolist()).items()))
    exceeded = int((xi < 0).sum())
    if exceeded:
        hist["exceeded"] = exceeded
    return ExpansionResult(p, cap, xi.reshape(p, p), hist,
                           int(attained.max()) if len(attained) else -1, exceeded)
