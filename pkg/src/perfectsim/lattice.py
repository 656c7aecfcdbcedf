"""Spin configurations and interaction families on Z^d.

Vertices are plain tuples of ints; a hyperedge is the sorted tuple of its
vertices. A spin configuration is a ``dict`` mapping vertices to +1/-1,
where a missing key is the unassigned (cemetery) state.

Four interaction families are provided:

* :class:`ExplicitFinite` -- an explicit list of hyperedges and couplings.
* :class:`PairTable` -- translation-invariant pairwise couplings given by a
  finite table of offsets (e.g. the nearest-neighbour Ising chain).
* :class:`PairGeometric` -- translation-invariant pairwise couplings
  ``beta * gamma**|r|_1`` of infinite range, with closed-form sums.
* :class:`Modified` / :class:`Scaled` -- a base interaction changed on a
  finite set of hyperedges, or damped by factors of modulus at most one.
"""
from __future__ import annotations

import heapq
import math
from functools import lru_cache
from itertools import product
from typing import Iterable, Iterator, Mapping, Sequence

from .errors import (
    InfiniteSupport,
    ModelError,
    NotPairwise,
    UnassignedSpin,
    VertexNotInSet,
)

Vertex = tuple
Hyperedge = tuple

UNASSIGNED = 0


# ---------------------------------------------------------------------------
# geometry
# ---------------------------------------------------------------------------

def as_vertex(coords, dim: int) -> Vertex:
    if isinstance(coords, int):
        coords = (coords,)
    v = tuple(int(c) for c in coords)
    if len(v) != dim:
        raise ModelError(f"vertex {coords!r} does not have dimension {dim}")
    return v


def l1(a: Vertex, b: Vertex) -> int:
    return sum(abs(x - y) for x, y in zip(a, b))


def add(v: Vertex, off: Vertex) -> Vertex:
    return tuple(x + y for x, y in zip(v, off))


def sub(w: Vertex, v: Vertex) -> Vertex:
    return tuple(x - y for x, y in zip(w, v))


def canonical(vertices: Iterable[Vertex]) -> Hyperedge:
    return tuple(sorted(vertices))


def shell_size(r: int, dim: int) -> int:
    """Number of lattice points at L1 distance exactly ``r`` from a vertex."""
    if r == 0:
        return 1
    if dim == 1:
        return 2
    if dim == 2:
        return 4 * r
    if dim == 3:
        return 4 * r * r + 2
    raise ModelError(f"unsupported dimension {dim}")


def ball_size(r: int, dim: int) -> int:
    if dim == 1:
        return 2 * r + 1
    if dim == 2:
        return 2 * r * r + 2 * r + 1
    if dim == 3:
        return (2 * r + 1) * (2 * r * r + 2 * r + 3) // 3
    raise ModelError(f"unsupported dimension {dim}")


@lru_cache(maxsize=512)
def shell_offsets(r: int, dim: int) -> tuple:
    """Offsets of L1 norm ``r`` in lexicographic order."""
    if r == 0:
        return ((0,) * dim,)
    pts = [p for p in product(range(-r, r + 1), repeat=dim - 1)
           if sum(abs(x) for x in p) <= r]
    out = []
    for p in pts:
        rest = r - sum(abs(x) for x in p)
        for last in {rest, -rest}:
            out.append(p + (last,))
    out.sort()
    return tuple(out)


def offsets_by_distance(dim: int, start: int = 1) -> Iterator[Vertex]:
    r = start
    while True:
        yield from shell_offsets(r, dim)
        r += 1


def geometric_shell_sum(dim: int, gamma: float) -> float:
    """Closed form of sum_{r>=1} shell_size(r) * gamma**r."""
    g = gamma
    if dim == 1:
        return 2 * g / (1 - g)
    if dim == 2:
        return 4 * g / (1 - g) ** 2
    if dim == 3:
        return 4 * g * (1 + g) / (1 - g) ** 3 + 2 * g / (1 - g)
    raise ModelError(f"unsupported dimension {dim}")


def far_tail_bound(dim: int, c: float, gamma: float, rho: int, slack: int) -> float:
    """Upper bound on sum_{r>rho} shell_size(r) * c*gamma**r * (ball_size(r)+slack).

    Summed explicitly until the term ratio certifies a geometric remainder.
    """
    if c == 0.0:
        return 0.0

    def term(r):
        return shell_size(r, dim) * (ball_size(r, dim) + slack) * c * gamma ** r

    total = 0.0
    r = rho + 1
    while True:
        t = term(r)
        total += t
        nxt = term(r + 1)
        ratio = nxt / t if t > 0 else 0.0
        # the polynomial factor's ratio decreases in r, so later ratios are smaller
        if ratio < 1.0 and nxt / (1.0 - ratio) <= 1e-3 * total + 1e-300:
            return total + nxt / (1.0 - ratio)
        r += 1
        if r > rho + 100000:
            return math.inf


class _Compensated:
    """Neumaier running sum; keeps long accumulations of positive terms exact enough."""

    __slots__ = ("s", "c")

    def __init__(self):
        self.s = 0.0
        self.c = 0.0

    def add(self, x: float) -> None:
        t = self.s + x
        if abs(self.s) >= abs(x):
            self.c += (self.s - t) + x
        else:
            self.c += (x - t) + self.s
        self.s = t

    @property
    def value(self) -> float:
        return self.s + self.c


# ---------------------------------------------------------------------------
# spins
# ---------------------------------------------------------------------------

def chi(B: Iterable[Vertex], sigma: Mapping[Vertex, int]) -> int:
    """Product of the spins of ``sigma`` over the vertices of ``B``."""
    out = 1
    for u in B:
        s = sigma.get(u, UNASSIGNED)
        if s == UNASSIGNED:
            raise UnassignedSpin(f"spin at {u} is unassigned")
        out *= s
    return out


def flipped(sigma: Mapping[Vertex, int], v: Vertex) -> dict:
    out = dict(sigma)
    out[v] = -out[v]
    return out


# ---------------------------------------------------------------------------
# interactions
# ---------------------------------------------------------------------------

def _far_point(exceptional, dim: int) -> Vertex:
    if not exceptional:
        return (0,) * dim
    x = max(max(abs(c) for c in u) for u in exceptional) + 2
    return (x,) + (0,) * (dim - 1)


def _sort_key(v: Vertex):
    def key(item):
        w, mag = item[0], item[1]
        return (-mag, l1(v, w), w)
    return key


class Interaction:
    """Common surface of every interaction family.

    Subclasses implement the pair and higher-order coupling lookups plus the
    strength sums; everything else is derived here.
    """

    family = "abstract"
    dim: int
    pairwise: bool = True
    translation_invariant: bool = False

    # -- lookups ----------------------------------------------------------
    def coupling(self, B: Iterable[Vertex]) -> float:
        raise NotImplementedError

    def pair_coupling(self, v: Vertex, w: Vertex) -> float:
        return self.coupling((v, w))

    def higher_edges_at(self, v: Vertex) -> list:
        """Nonzero hyperedges of size > 2 containing ``v`` (always finitely many)."""
        return []

    def hyperedges_at(self, v: Vertex) -> Iterator[tuple]:
        raise NotImplementedError

    def finite_at(self, v: Vertex) -> bool:
        raise NotImplementedError

    def total_strength(self, v: Vertex) -> float:
        raise NotImplementedError

    def _tail(self, v: Vertex, S) -> float:
        raise NotImplementedError

    def tail_strength(self, v: Vertex, S) -> float:
        """Sum of |J_B| over hyperedges containing ``v`` that are not inside ``S``."""
        if v not in S:
            raise VertexNotInSet(f"{v} is not in the given set")
        return self._tail(v, S)

    def mass(self, v: Vertex) -> float:
        return 2.0 * math.exp(self.total_strength(v))

    @property
    def uniform_mass(self) -> bool:
        return self.translation_invariant

    def flip_rate(self, v: Vertex, sigma: Mapping[Vertex, int]) -> float:
        if not self.finite_at(v):
            raise InfiniteSupport(f"infinitely many hyperedges at {v}")
        s = 0.0
        for B, J in self.hyperedges_at(v):
            s += J * chi(B, sigma)
        return math.exp(-s)

    def new_hyperedges(self, v: Vertex, prev, increment: Sequence[Vertex]) -> list:
        """Hyperedges at ``v`` inside ``prev | increment`` but not inside ``prev``.

        Returned as ``(other_vertices, J)`` with ``v`` left out of the vertex
        tuple. Pairs come first in increment order, then higher hyperedges.
        """
        out = []
        for w in increment:
            J = self.pair_coupling(v, w)
            if J != 0.0:
                out.append(((w,), J))
        higher = self.higher_edges_at(v)
        if higher:
            inc = set(increment)
            for B, J in higher:
                if inc.intersection(B) and all(u in prev or u in inc for u in B):
                    out.append((tuple(u for u in B if u != v), J))
        return out

    # -- far field structure ---------------------------------------------
    def far_field_envelope(self, v: Vertex):
        """``(rho0, c, gamma)`` such that every hyperedge at ``v`` leaving the L1
        ball of radius ``rho0`` is a pair with |J| <= c*gamma**dist, or ``None``
        when the number of hyperedges at ``v`` is finite."""
        return None

    def exceptional_vertices(self):
        """Finite set outside which the model is a translate of one template."""
        return frozenset()

    def far_representative(self) -> Vertex:
        return _far_point(self.exceptional_vertices(), self.dim)

    # -- pairwise ordering ------------------------------------------------
    def sorted_pairs(self, v: Vertex) -> Iterator[tuple]:
        """Neighbours ``(w, |J|)`` by non-increasing |J|, ties by distance then
        lexicographic order."""
        raise NotImplementedError

    def sorted_rank_slack(self, v: Vertex) -> int:
        return 0

    def _require_pairwise(self):
        if not self.pairwise:
            raise NotPairwise(f"{self.family} interaction has hyperedges of size > 2")

    def describe(self) -> dict:
        return {"family": self.family, "dimension": self.dim}


class ExplicitFinite(Interaction):
    """Finite explicit list of ``(vertices, J)`` hyperedges."""

    family = "explicit"

    def __init__(self, dim: int, edges: Iterable[tuple]):
        if dim not in (1, 2, 3):
            raise ModelError(f"dimension must be 1, 2 or 3, got {dim}")
        self.dim = dim
        self._edges: dict = {}
        for verts, J in edges:
            B = canonical(as_vertex(u, dim) for u in verts)
            if len(B) < 2 or len(set(B)) != len(B):
                raise ModelError(f"hyperedge {verts!r} needs >= 2 distinct vertices")
            if B in self._edges:
                raise ModelError(f"duplicate hyperedge {B}")
            J = float(J)
            if not math.isfinite(J):
                raise ModelError(f"non-finite coupling on {B}")
            self._edges[B] = J
        self._edges = {B: J for B, J in sorted(self._edges.items()) if J != 0.0}
        self._at: dict = {}
        self._pairs: dict = {}
        self._higher: dict = {}
        for B, J in self._edges.items():
            for u in B:
                self._at.setdefault(u, []).append((B, J))
                if len(B) > 2:
                    self._higher.setdefault(u, []).append((B, J))
            if len(B) == 2:
                self._pairs[B] = J
        self.pairwise = all(len(B) == 2 for B in self._edges)
        self.translation_invariant = not self._edges

    @property
    def edges(self) -> dict:
        return dict(self._edges)

    def support(self) -> frozenset:
        return frozenset(self._at)

    def coupling(self, B):
        return self._edges.get(canonical(B), 0.0)

    def pair_coupling(self, v, w):
        return self._pairs.get((v, w) if v < w else (w, v), 0.0)

    def higher_edges_at(self, v):
        return self._higher.get(v, [])

    def hyperedges_at(self, v):
        return iter(self._at.get(v, []))

    def finite_at(self, v):
        return True

    def total_strength(self, v):
        return math.fsum(abs(J) for _, J in self._at.get(v, []))

    def _tail(self, v, S):
        return math.fsum(abs(J) for B, J in self._at.get(v, [])
                         if not all(u in S for u in B))

    def exceptional_vertices(self):
        return self.support()

    def sorted_pairs(self, v):
        self._require_pairwise()
        items = []
        for B, J in self._at.get(v, []):
            w = B[0] if B[1] == v else B[1]
            items.append((w, abs(J)))
        items.sort(key=_sort_key(v))
        return iter(items)

    def describe(self):
        return {"family": self.family, "dimension": self.dim,
                "edges": [[[list(u) for u in B], J] for B, J in self._edges.items()]}


class _TranslationInvariantPair(Interaction):
    translation_invariant = True
    pairwise = True

    def offset_coupling(self, r: Vertex) -> float:
        raise NotImplementedError

    def coupling(self, B):
        B = canonical(B)
        if len(B) != 2:
            return 0.0
        return self.offset_coupling(sub(B[1], B[0]))

    def pair_coupling(self, v, w):
        if v == w:
            return 0.0
        return self.offset_coupling(sub(w, v))


class PairTable(_TranslationInvariantPair):
    """Finite-range translation-invariant pair couplings, ``{offset: J}``.

    The table is symmetrised: giving ``(1,): 0.3`` also sets ``(-1,): 0.3``.
    """

    family = "pair_table"

    def __init__(self, dim: int, couplings: Mapping):
        if dim not in (1, 2, 3):
            raise ModelError(f"dimension must be 1, 2 or 3, got {dim}")
        self.dim = dim
        table = {}
        for off, J in couplings.items():
            r = as_vertex(off, dim)
            if not any(r):
                raise ModelError("zero offset is not a pair")
            J = float(J)
            for key in (r, tuple(-x for x in r)):
                if key in table and table[key] != J:
                    raise ModelError(f"asymmetric couplings for offset {key}")
                table[key] = J
        self._table = {r: J for r, J in sorted(table.items()) if J != 0.0}
        self._order = sorted(self._table, key=lambda r: (l1(r, (0,) * dim), r))
        self._total = math.fsum(abs(J) for J in self._table.values())

    @property
    def table(self) -> dict:
        return dict(self._table)

    def offset_coupling(self, r):
        return self._table.get(r, 0.0)

    def hyperedges_at(self, v):
        for r in self._order:
            yield canonical((v, add(v, r))), self._table[r]

    def finite_at(self, v):
        return True

    def range(self) -> int:
        return max((l1(r, (0,) * self.dim) for r in self._table), default=0)

    def total_strength(self, v):
        return self._total

    def _tail(self, v, S):
        return math.fsum(abs(J) for r, J in self._table.items() if add(v, r) not in S)

    def sorted_pairs(self, v):
        items = [(add(v, r), abs(J)) for r, J in self._table.items()]
        items.sort(key=_sort_key(v))
        return iter(items)

    def describe(self):
        half = {r: J for r, J in self._table.items() if r > tuple(-x for x in r)}
        return {"family": self.family, "dimension": self.dim,
                "couplings": [[list(r), J] for r, J in half.items()]}


class PairGeometric(_TranslationInvariantPair):
    """Infinite-range pair couplings ``J_{v, v+r} = beta * gamma**|r|_1``."""

    family = "pair_geometric"

    def __init__(self, dim: int, beta: float, gamma: float):
        if dim not in (1, 2, 3):
            raise ModelError(f"dimension must be 1, 2 or 3, got {dim}")
        if not 0.0 < gamma < 1.0:
            raise ModelError("gamma must lie in (0, 1) for summability")
        self.dim = dim
        self.beta = float(beta)
        self.gamma = float(gamma)
        self._total = abs(self.beta) * geometric_shell_sum(dim, self.gamma)

    def offset_coupling(self, r):
        d = sum(abs(x) for x in r)
        if d == 0:
            return 0.0
        return self.beta * self.gamma ** d

    def hyperedges_at(self, v):
        if self.beta == 0.0:
            return
        for r in offsets_by_distance(self.dim):
            yield canonical((v, add(v, r))), self.offset_coupling(r)

    def finite_at(self, v):
        return self.beta == 0.0

    def total_strength(self, v):
        return self._total

    def _tail(self, v, S):
        inside = math.fsum(abs(self.pair_coupling(v, w)) for w in S if w != v)
        return max(self._total - inside, 0.0)

    def far_field_envelope(self, v):
        if self.beta == 0.0:
            return None
        return (0, abs(self.beta), self.gamma)

    def sorted_pairs(self, v):
        for r in offsets_by_distance(self.dim):
            yield add(v, r), abs(self.offset_coupling(r))

    def describe(self):
        return {"family": self.family, "dimension": self.dim,
                "beta": self.beta, "gamma": self.gamma}


class Modified(Interaction):
    """``base`` with the couplings of finitely many hyperedges replaced."""

    family = "modified"

    def __init__(self, base: Interaction, overrides: Mapping):
        self.base = base
        self.dim = base.dim
        ov = {}
        for verts, J in overrides.items():
            B = canonical(as_vertex(u, self.dim) for u in verts)
            if len(B) < 2 or len(set(B)) != len(B):
                raise ModelError(f"hyperedge {verts!r} needs >= 2 distinct vertices")
            if B in ov:
                raise ModelError(f"duplicate override {B}")
            ov[B] = float(J)
        self.overrides = dict(sorted(ov.items()))
        self._at: dict = {}
        for B in self.overrides:
            for u in B:
                self._at.setdefault(u, []).append(B)
        self.pairwise = base.pairwise and all(
            len(B) == 2 for B, J in self.overrides.items() if J != 0.0)
        self.translation_invariant = base.translation_invariant and not self.overrides

    def coupling(self, B):
        B = canonical(B)
        if B in self.overrides:
            return self.overrides[B]
        return self.base.coupling(B)

    def pair_coupling(self, v, w):
        B = (v, w) if v < w else (w, v)
        J = self.overrides.get(B)
        if J is not None:
            return J
        return self.base.pair_coupling(v, w)

    def higher_edges_at(self, v):
        out = [(B, self.overrides.get(B, J)) for B, J in self.base.higher_edges_at(v)]
        seen = {B for B, _ in out}
        for B in self._at.get(v, []):
            if len(B) > 2 and B not in seen:
                out.append((B, self.overrides[B]))
        return sorted((B, J) for B, J in out if J != 0.0)

    def _extra_at(self, v):
        """Overrides at ``v`` whose hyperedge has zero coupling in the base."""
        return [(B, self.overrides[B]) for B in self._at.get(v, [])
                if self.base.coupling(B) == 0.0 and self.overrides[B] != 0.0]

    def hyperedges_at(self, v):
        yield from self._extra_at(v)
        for B, J in self.base.hyperedges_at(v):
            J = self.overrides.get(B, J)
            if J != 0.0:
                yield B, J

    def finite_at(self, v):
        return self.base.finite_at(v)

    def _delta(self, v, S=None) -> float:
        terms = []
        for B in self._at.get(v, []):
            if S is not None and all(u in S for u in B):
                continue
            terms.append(abs(self.overrides[B]) - abs(self.base.coupling(B)))
        return math.fsum(terms)

    def total_strength(self, v):
        if v not in self._at:
            return self.base.total_strength(v)
        return max(self.base.total_strength(v) + self._delta(v), 0.0)

    def _tail(self, v, S):
        if v not in self._at:
            return self.base._tail(v, S)
        return max(self.base._tail(v, S) + self._delta(v, S), 0.0)

    def far_field_envelope(self, v):
        env = self.base.far_field_envelope(v)
        if env is None:
            return None
        rho0, c, g = env
        for B in self._at.get(v, []):
            rho0 = max(rho0, max(l1(v, u) for u in B))
        return (rho0, c, g)

    def exceptional_vertices(self):
        exc = self.base.exceptional_vertices()
        if exc is None:
            return None
        return frozenset(exc) | frozenset(self._at)

    def sorted_pairs(self, v):
        self._require_pairwise()
        if self.finite_at(v):
            items = []
            for B, J in self.hyperedges_at(v):
                items.append((B[0] if B[1] == v else B[1], abs(J)))
            items.sort(key=_sort_key(v))
            return iter(items)
        special = {}
        for B in self._at.get(v, []):
            special[B[0] if B[1] == v else B[1]] = abs(self.overrides[B])
        extras = sorted(((w, m) for w, m in special.items() if m != 0.0), key=_sort_key(v))
        base = ((w, m) for w, m in self.base.sorted_pairs(v) if w not in special)
        return heapq.merge(base, extras, key=_sort_key(v))

    def sorted_rank_slack(self, v):
        return self.base.sorted_rank_slack(v) + len(self._at.get(v, []))

    def describe(self):
        return {"family": self.family, "dimension": self.dim, "base": self.base.describe(),
                "overrides": [[[list(u) for u in B], J] for B, J in self.overrides.items()]}


class Scaled(Interaction):
    """``base`` with every coupling multiplied by a factor of modulus <= 1.

    ``default`` applies to all hyperedges not listed in ``factors``.
    """

    family = "scaled"

    def __init__(self, base: Interaction, factors: Mapping | None = None, default: float = 1.0):
        self.base = base
        self.dim = base.dim
        self.default = float(default)
        if abs(self.default) > 1.0:
            raise ModelError("scaling factors must have modulus <= 1")
        fs = {}
        for verts, f in (factors or {}).items():
            B = canonical(as_vertex(u, self.dim) for u in verts)
            f = float(f)
            if abs(f) > 1.0:
                raise ModelError(f"factor {f} on {B} has modulus > 1")
            fs[B] = f
        self.factors = dict(sorted(fs.items()))
        self._at: dict = {}
        for B in self.factors:
            for u in B:
                self._at.setdefault(u, []).append(B)
        self.pairwise = base.pairwise
        self.translation_invariant = base.translation_invariant and not self.factors

    def _f(self, B) -> float:
        return self.factors.get(B, self.default)

    def coupling(self, B):
        B = canonical(B)
        return self._f(B) * self.base.coupling(B)

    def pair_coupling(self, v, w):
        B = (v, w) if v < w else (w, v)
        return self._f(B) * self.base.pair_coupling(v, w)

    def higher_edges_at(self, v):
        out = [(B, self._f(B) * J) for B, J in self.base.higher_edges_at(v)]
        return [(B, J) for B, J in out if J != 0.0]

    def hyperedges_at(self, v):
        for B, J in self.base.hyperedges_at(v):
            J = self._f(B) * J
            if J != 0.0:
                yield B, J

    def finite_at(self, v):
        return self.base.finite_at(v) or self.default == 0.0

    def _scale(self, v, base_value, S=None):
        if v not in self._at and self.default == 1.0:
            return base_value
        terms = [abs(self.default) * base_value]
        for B in self._at.get(v, []):
            if S is not None and all(u in S for u in B):
                continue
            terms.append((abs(self.factors[B]) - abs(self.default)) * abs(self.base.coupling(B)))
        return max(math.fsum(terms), 0.0)

    def total_strength(self, v):
        if self.default == 0.0:
            return math.fsum(abs(J) for _, J in self.hyperedges_at(v))
        return self._scale(v, self.base.total_strength(v))

    def _tail(self, v, S):
        if self.default == 0.0:
            return math.fsum(abs(J) for B, J in self.hyperedges_at(v)
                             if not all(u in S for u in B))
        return self._scale(v, self.base._tail(v, S), S)

    def far_field_envelope(self, v):
        if self.default == 0.0:
            return None
        return self.base.far_field_envelope(v)

    def exceptional_vertices(self):
        exc = self.base.exceptional_vertices()
        if exc is None:
            return None
        return frozenset(exc) | frozenset(self._at)

    def sorted_pairs(self, v):
        self._require_pairwise()
        if self.finite_at(v):
            items = [(B[0] if B[1] == v else B[1], abs(J)) for B, J in self.hyperedges_at(v)]
            items.sort(key=_sort_key(v))
            return iter(items)
        special = {}
        for B in self._at.get(v, []):
            special[B[0] if B[1] == v else B[1]] = abs(self.coupling(B))
        extras = sorted(((w, m) for w, m in special.items() if m != 0.0), key=_sort_key(v))
        d = abs(self.default)
        base = ((w, d * m) for w, m in self.base.sorted_pairs(v) if w not in special)
        return heapq.merge(base, extras, key=_sort_key(v))

    def sorted_rank_slack(self, v):
        return self.base.sorted_rank_slack(v) + len(self._at.get(v, []))

    def describe(self):
        return {"family": self.family, "dimension": self.dim, "base": self.base.describe(),
                "default": self.default,
                "factors": [[[list(u) for u in B], f] for B, f in self.factors.items()]}


def nearest_neighbour_ising(dim: int, beta: float) -> PairTable:
    """Ferromagnetic nearest-neighbour Ising couplings ``beta`` on Z^dim."""
    unit = [tuple(1 if i == j else 0 for j in range(dim)) for i in range(dim)]
    return PairTable(dim, {u: beta for u in unit})
