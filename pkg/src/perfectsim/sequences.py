"""Growing region sequences, the lambda distribution and its order theory.

A :class:`RegionSequence` is a lazily produced chain ``B(0) = {v} ⊂ B(1) ⊂ ...``
of finite vertex sets. :class:`LambdaDistribution` turns a sequence and an
interaction into the law of the growth index ``k`` used by the backward
chain, together with the update probabilities of the forward pass.
"""
from __future__ import annotations

import bisect
import math
import threading
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

from .errors import (
    CenterMismatch,
    InfiniteSupport,
    NumericalInconsistency,
    Property1Violation,
    Property2Violation,
    Property3Violation,
    TailNotBoundable,
)
from .lattice import (
    Interaction,
    Vertex,
    add,
    far_tail_bound,
    l1,
    shell_offsets,
    shell_size,
    sub,
    UNASSIGNED,
)
from .errors import UnassignedSpin

DEFAULT_HORIZON = 64
CLAMP_TOL = 1e-12


@dataclass(frozen=True)
class Interval:
    """Closed interval ``[lo, hi]`` enclosing a quantity computed with truncation."""

    lo: float
    hi: float

    @classmethod
    def point(cls, x: float) -> "Interval":
        return cls(x, x)

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def contains(self, x: float, tol: float = 0.0) -> bool:
        return self.lo - tol <= x <= self.hi + tol

    def overlaps(self, other: "Interval", tol: float = 0.0) -> bool:
        return self.lo <= other.hi + tol and other.lo <= self.hi + tol

    def shift(self, c: float) -> "Interval":
        return Interval(self.lo + c, self.hi + c)

    def to_list(self) -> list:
        return [self.lo, self.hi]

    def __str__(self) -> str:
        if self.lo == self.hi:
            return f"{self.lo:.12g}"
        return f"[{self.lo:.12g}, {self.hi:.12g}]"


class ExactSum:
    """Running sum whose ``value`` is the correctly rounded total (same as ``math.fsum``)."""

    __slots__ = ("_partials",)

    def __init__(self):
        self._partials: list = []

    def add(self, x: float) -> None:
        partials = self._partials
        i = 0
        for y in partials:
            if abs(x) < abs(y):
                x, y = y, x
            hi = x + y
            lo = y - (hi - x)
            if lo:
                partials[i] = lo
                i += 1
            x = hi
        partials[i:] = [x]

    @property
    def value(self) -> float:
        return math.fsum(self._partials)


class _SetView:
    """Membership view of ``B(k)`` without materialising a set."""

    __slots__ = ("_pos", "_k")

    def __init__(self, pos: dict, k: int):
        self._pos = pos
        self._k = k

    def __contains__(self, u) -> bool:
        s = self._pos.get(u)
        return s is not None and s <= self._k


class RegionSequence:
    """Lazy increasing chain of finite vertex sets centred at ``center``.

    Parameters
    ----------
    center
        The vertex ``v`` with ``B(0) = {v}``.
    increments
        Iterable of the increments ``B(k) \\ B(k-1)`` for ``k >= 1``, each an
        ordered collection of vertices. It may be infinite.
    kind
        Short tag recorded in reports (``l1_balls``, ``ising_optimal`` ...).
    far_offset
        Constant ``o`` such that a vertex at distance ``r`` enters the chain at a
        step whose set has at most ``ball_size(r) + o`` vertices; ``None`` when
        no such bound is known. Needed for tail bounds of infinite chains.
    exhaustive
        Whether the construction guarantees every lattice vertex carrying a
        nonzero coupling with ``center`` eventually appears.
    skip
        Vertices deliberately never added because nothing couples them to
        ``center``; they count as covered when measuring covered radius.
    """

    def __init__(self, center: Vertex, increments: Iterable, *, kind: str = "custom",
                 far_offset: int | None = None, exhaustive: bool = False,
                 skip: Iterable[Vertex] = (), raw_sets: list | None = None):
        self.center = tuple(center)
        self.dim = len(self.center)
        self.kind = kind
        self.far_offset = far_offset
        self.exhaustive = exhaustive
        self.raw_sets = raw_sets
        self.bound_from_step = 0
        self._it: Iterator = iter(increments)
        self._incs: list = []
        self._pos: dict = {self.center: 0}
        self._sizes: list = [1]
        self._done = False
        self._lock = threading.RLock()
        self.skip = frozenset(tuple(u) for u in skip)
        self._shell = Counter(l1(u, self.center) for u in self.skip)
        self._radius = [self._advance_radius(0)]

    def _advance_radius(self, r: int) -> int:
        while self._shell[r + 1] >= shell_size(r + 1, self.dim):
            r += 1
        return r

    # -- materialisation -------------------------------------------------
    def ensure(self, k: int) -> int:
        """Materialise up to step ``k``; return the number of available steps."""
        if k <= len(self._incs) or self._done:
            return min(k, len(self._incs))
        with self._lock:
            while len(self._incs) < k and not self._done:
                try:
                    inc = next(self._it)
                except StopIteration:
                    self._done = True
                    break
                inc = tuple(tuple(u) for u in inc)
                step = len(self._incs) + 1
                if not inc:
                    raise Property2Violation(f"increment {step} is empty")
                if len(set(inc)) != len(inc) or any(u in self._pos for u in inc):
                    raise Property2Violation(f"increment {step} overlaps an earlier set")
                for u in inc:
                    self._pos[u] = step
                    self._shell[l1(u, self.center)] += 1
                self._incs.append(inc)
                self._sizes.append(self._sizes[-1] + len(inc))
                self._radius.append(self._advance_radius(self._radius[-1]))
        return min(k, len(self._incs))

    @property
    def materialized(self) -> int:
        return len(self._incs)

    def length(self) -> int | None:
        """Number of increments when the stream is known to be finite."""
        return len(self._incs) if self._done else None

    def exhaust(self, cap: int) -> int | None:
        """Try to reach the end of the stream within ``cap`` steps."""
        self.ensure(cap + 1)
        return self.length()

    def has_step(self, k: int) -> bool:
        return self.ensure(k) >= k

    def increment(self, k: int) -> tuple:
        if k < 1 or not self.has_step(k):
            raise IndexError(f"step {k} is not available")
        return self._incs[k - 1]

    def size(self, k: int) -> int:
        if not self.has_step(k):
            raise IndexError(f"step {k} is not available")
        return self._sizes[k]

    def step_of(self, u: Vertex) -> int | None:
        return self._pos.get(tuple(u))

    def view(self, k: int) -> _SetView:
        self.ensure(k)
        return _SetView(self._pos, k)

    def set_at(self, k: int) -> frozenset:
        if not self.has_step(k):
            raise IndexError(f"step {k} is not available")
        return frozenset(u for u, s in self._pos.items() if s <= k)

    def sets(self, horizon: int) -> list:
        n = self.ensure(horizon)
        out = [frozenset([self.center])]
        cur = {self.center}
        for k in range(1, n + 1):
            cur.update(self._incs[k - 1])
            out.append(frozenset(cur))
        return out

    def covered_radius(self, k: int) -> int:
        """Largest ``r`` with the L1 ball of radius ``r`` inside ``B(k)`` (skips count)."""
        self.ensure(k)
        return self._radius[min(k, len(self._incs))]

    # -- derived sequences -------------------------------------------------
    def translate(self, new_center: Vertex) -> "RegionSequence":
        off = sub(tuple(new_center), self.center)
        if not any(off):
            return self

        def gen():
            k = 1
            while self.has_step(k):
                yield tuple(add(u, off) for u in self._incs[k - 1])
                k += 1

        out = RegionSequence(new_center, gen(), kind=self.kind, far_offset=self.far_offset,
                             exhaustive=self.exhaustive,
                             skip=(add(u, off) for u in self.skip))
        out.bound_from_step = self.bound_from_step
        return out

    def descriptor(self, horizon: int) -> tuple:
        """Increments as sorted offsets from the centre, for reports and ordering."""
        n = self.ensure(horizon)
        return tuple(tuple(sorted(sub(u, self.center) for u in self._incs[k]))
                     for k in range(n))

    def __repr__(self) -> str:
        return (f"RegionSequence(center={self.center}, kind={self.kind!r}, "
                f"materialized={len(self._incs)})")


# ---------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------

def l1_balls(center: Vertex) -> RegionSequence:
    """``B(k)`` = L1 ball of radius ``k`` around ``center``."""
    center = tuple(center)
    dim = len(center)

    def gen():
        r = 1
        while True:
            yield tuple(add(center, o) for o in shell_offsets(r, dim))
            r += 1

    return RegionSequence(center, gen(), kind="l1_balls", far_offset=0, exhaustive=True)


def from_offsets(center: Vertex, offset_increments: Sequence[Sequence]) -> RegionSequence:
    """Finite sequence given by increments of offsets relative to the centre."""
    center = tuple(center)
    incs = [tuple(add(center, tuple(o)) for o in inc) for inc in offset_increments]
    return RegionSequence(center, incs, kind="explicit")


def from_sets(center: Vertex, sets: Sequence[Iterable[Vertex]]) -> RegionSequence:
    """Sequence given by its sets ``B(0), B(1), ...``; validity is checked lazily."""
    center = tuple(center)
    raw = [frozenset(tuple(u) for u in s) for s in sets]
    incs = []
    for prev, cur in zip(raw, raw[1:]):
        incs.append(tuple(sorted(cur - prev)))
    return RegionSequence(center, incs, kind="sets", raw_sets=raw)


def from_hyperedge_order(center: Vertex, hyperedges: Sequence[Iterable[Vertex]]) -> RegionSequence:
    """Running unions of ``hyperedges`` with non-growing steps removed."""
    center = tuple(center)
    seen = {center}
    incs = []
    for B in hyperedges:
        new = tuple(sorted(u for u in set(B) if u not in seen))
        if new:
            incs.append(new)
            seen.update(new)
    return RegionSequence(center, incs, kind="running_union")


# ---------------------------------------------------------------------------
# validation and refinement
# ---------------------------------------------------------------------------

@dataclass
class ValidationReport:
    ok: bool
    steps_checked: int
    property3: str


def validate_sequence(seq: RegionSequence, J: Interaction, horizon: int = DEFAULT_HORIZON,
                      cover_cap: int = 1_000_000) -> ValidationReport:
    """Check properties 1-3 of a region sequence.

    Properties 1 and 2 are checked exactly up to ``horizon``. Property 3 is
    checked exactly when the centre has finitely many hyperedges and is
    otherwise reported as certified by construction for built-in sequences.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    v = seq.center
    if seq.raw_sets is not None:
        raw = seq.raw_sets
        if not raw or raw[0] != frozenset([v]):
            raise Property1Violation(f"first set is not {{{v}}}")
        for k in range(1, min(len(raw), horizon + 1)):
            if not raw[k - 1] < raw[k]:
                raise Property2Violation(f"set {k} does not strictly contain set {k - 1}")
    n = seq.ensure(horizon)
    if seq.raw_sets is None and seq.step_of(v) != 0:
        raise Property1Violation(f"first set is not {{{v}}}")

    if J.finite_at(v):
        needed = {u for B, _ in J.hyperedges_at(v) for u in B}
        missing = {u for u in needed if seq.step_of(u) is None}
        k = seq.materialized
        while missing and k < cover_cap and seq.has_step(k + 1):
            k += 1
            missing.difference_update(seq.increment(k))
        if missing:
            raise Property3Violation(
                f"vertices {sorted(missing)[:5]} of hyperedges at {v} are never covered")
        return ValidationReport(True, n, "exact")
    if seq.exhaustive:
        return ValidationReport(True, n, "certified by construction")
    raise Property3Violation(f"cannot certify coverage of infinitely many hyperedges at {v}")


def is_less_refined(a: RegionSequence, b: RegionSequence, horizon: int = DEFAULT_HORIZON,
                    cap: int = 1_000_000) -> bool:
    """True iff the sets of ``a`` up to ``horizon`` form a subsequence of the sets of ``b``."""
    if a.center != b.center:
        raise CenterMismatch(f"centres differ: {a.center} vs {b.center}")
    na = a.ensure(horizon)
    j = 0
    for k in range(1, na + 1):
        target = a.size(k)
        # advance b until its size reaches the target size
        while True:
            if j >= cap or not b.has_step(j + 1):
                return False
            j += 1
            if b.size(j) >= target:
                break
        if b.size(j) != target:
            return False
        inc_end = a.increment(k)
        # equal sizes plus containment of a's set in b's set gives equality
        if any(b.step_of(u) is None or b.step_of(u) > j for u in inc_end):
            return False
    # earlier increments of a are contained in b by induction
    return True


# ---------------------------------------------------------------------------
# lambda distribution
# ---------------------------------------------------------------------------

class LambdaDistribution:
    """Law of the growth index at ``seq.center``.

    ``cdf(0) = exp(-2 G)`` and ``cdf(n) = exp(-T(n))`` for ``n >= 1`` where
    ``G`` is the total strength and ``T(n)`` the strength of hyperedges at the
    centre not inside ``B(n)``.
    """

    def __init__(self, J: Interaction, seq: RegionSequence):
        self.J = J
        self.seq = seq
        self.center = v = seq.center
        self.G = J.total_strength(v)
        self.M = 2.0 * math.exp(self.G)
        self.finite = J.finite_at(v)
        self._F = [math.exp(-2.0 * self.G)]
        self._T = [self.G]
        self._edges: list = [()]
        self._dA: list = [0.0]
        self._inside = ExactSum()
        self._lock = threading.RLock()
        self._complete = self.G == 0.0
        if self._complete:
            self._F[0] = 1.0

    # -- growth -------------------------------------------------------------
    @property
    def complete(self) -> bool:
        """True once ``cdf`` has reached exactly one."""
        return self._complete

    @property
    def computed(self) -> int:
        return len(self._F) - 1

    def _extend(self, k: int) -> bool:
        if k < len(self._F):
            return True
        with self._lock:
            while len(self._F) <= k:
                n = len(self._F)
                if self._complete:
                    self._F.append(1.0)
                    self._T.append(0.0)
                    self._edges.append(())
                    self._dA.append(0.0)
                    continue
                if not self.seq.has_step(n):
                    raise Property3Violation(
                        f"sequence at {self.center} ends after {n - 1} steps with "
                        f"uncovered strength {self._T[-1]!r}")
                inc = self.seq.increment(n)
                edges = self.J.new_hyperedges(self.center, self.seq.view(n - 1), inc)
                mags = [abs(J) for _, J in edges]
                for m in mags:
                    self._inside.add(m)
                if self.finite:
                    T = self.J.tail_strength(self.center, self.seq.view(n))
                else:
                    T = max(self.G - self._inside.value, 0.0)
                self._edges.append(tuple(edges))
                self._dA.append(math.fsum(mags))
                self._T.append(T)
                F = math.exp(-T)
                self._F.append(F)
                if T == 0.0:
                    self._complete = True
        return True

    def extend_until_complete(self, cap: int) -> bool:
        """Extend until ``cdf == 1.0`` in floating point or ``cap`` steps.

        Beyond that index no uniform draw in ``[0, 1)`` can select a larger step.
        """
        n = self.computed
        while self._F[-1] != 1.0 and n < cap:
            n += 1
            self._extend(n)
        return self._F[-1] == 1.0

    # -- distribution -----------------------------------------------------
    def cdf(self, n: int) -> float:
        if n < 0:
            return 0.0
        self._extend(n)
        return self._F[n]

    def tail(self, n: int) -> float:
        """Uncovered strength ``T(n)`` used for ``cdf(n)``; ``T(0)`` is ``G``."""
        self._extend(n)
        return self._T[n]

    def pmf(self, k: int) -> float:
        if k < 0:
            return 0.0
        if k == 0:
            return self.cdf(0)
        p = self.cdf(k) - self.cdf(k - 1)
        if p < 0.0:
            if p < -CLAMP_TOL:
                raise NumericalInconsistency(f"negative lambda({k}) = {p}")
            p = 0.0
        return p

    def sample_k(self, u: float) -> int:
        """Smallest ``k`` with ``cdf(k) >= u``."""
        F = self._F
        if F[-1] >= u:
            return bisect.bisect_left(F, u)
        n = len(F)
        while True:
            self._extend(n)
            if self._F[n] >= u:
                return bisect.bisect_left(self._F, u, 0, n + 1)
            n += 1

    def edges(self, k: int) -> tuple:
        """Hyperedges newly inside ``B(k)``: ``(other_vertices, J)`` pairs."""
        self._extend(k)
        return self._edges[k]

    def strength_step(self, k: int) -> float:
        self._extend(k)
        return self._dA[k]

    # -- reindexed law ----------------------------------------------------
    def lambda_hat(self, i: int) -> float:
        if i < 0:
            return 0.0
        if i == 0:
            return self.pmf(0)
        l = 0
        while True:
            l += 1
            if not self.seq.has_step(l):
                return 0.0
            s = self.seq.size(l) - 1
            if s == i:
                return self.pmf(l)
            if s > i:
                return 0.0

    def hat_cdf(self, n: int) -> float:
        """CDF of the reindexed law at ``n``: ``cdf(l)`` for the last ``l`` with ``|B(l)|-1 <= n``."""
        if n < 0:
            return 0.0
        l = 0
        while self.seq.has_step(l + 1) and self.seq.size(l + 1) - 1 <= n:
            l += 1
        if not self.seq.has_step(l + 1):
            # stream ended: all mass is on steps up to l
            self._extend(l)
        return self.cdf(l)

    # -- birth-death expectation -------------------------------------------
    def birth_death_mu(self, tolerance: float = 1e-10, max_steps: int = 2_000_000) -> Interval:
        """Enclosure of ``sum_{l>=1} |B(l)| lambda(l) - 1``."""
        if tolerance <= 0:
            raise ValueError("tolerance must be positive")
        seq = self.seq
        acc = ExactSum()
        acc.add(-1.0)
        env = None if self.finite else self.J.far_field_envelope(self.center)
        if not self.finite and (env is None or seq.far_offset is None):
            raise TailNotBoundable(
                f"no far-field bound for the {seq.kind} sequence at {self.center}")
        last_rho = None
        upper_tail = math.inf
        K = 0
        while True:
            if self.finite and self._complete and K >= self.computed:
                return Interval.point(acc.value)
            if K >= max_steps:
                raise TailNotBoundable(f"tail not resolved within {max_steps} steps")
            K += 1
            self._extend(K)
            lam = self.pmf(K)
            sizes = seq._sizes
            if lam:
                acc.add(sizes[K] * lam)
            if self.finite:
                continue
            rho = seq._radius[K]
            if rho >= env[0] and K >= seq.bound_from_step and rho != last_rho:
                upper_tail = far_tail_bound(seq.dim, env[1], env[2], rho, seq.far_offset)
                last_rho = rho
            if upper_tail is math.inf:
                continue
            partial = acc.value
            nxt = sizes[K + 1] if seq.ensure(K + 1) > K else sizes[K]
            lower_tail = nxt * (1.0 - self._F[K])
            if upper_tail - lower_tail <= tolerance or upper_tail <= tolerance * 1e-3:
                return Interval(partial + lower_tail, partial + upper_tail)

    def mu_point(self) -> float:
        """Exact value for finite support."""
        if not self.finite:
            raise InfiniteSupport(f"infinitely many hyperedges at {self.center}")
        iv = self.birth_death_mu()
        return iv.lo

    def support_size(self, cap: int = 10_000_000) -> int:
        """Largest ``k`` with positive mass when the CDF reaches one within ``cap``."""
        if not self.extend_until_complete(cap):
            raise InfiniteSupport(f"cdf at {self.center} does not reach 1 within {cap} steps")
        return next(k for k, F in enumerate(self._F) if F == 1.0)

    # -- forward-pass probabilities ---------------------------------------
    def _sum_chi(self, k: int, sigma, sv: int) -> float:
        s = 0.0
        for others, J in self._edges[k]:
            c = sv
            for u in others:
                x = sigma.get(u, UNASSIGNED)
                if x == UNASSIGNED:
                    raise UnassignedSpin(f"spin at {u} is unassigned")
                c *= x
            s += J * c
        return s

    def update_prob(self, k: int, sigma) -> float:
        """Probability of flipping the spin at the centre after a step-``k`` event."""
        if k == 0:
            return 0.5
        self._extend(k)
        sv = sigma.get(self.center, UNASSIGNED)
        if sv == UNASSIGNED:
            raise UnassignedSpin(f"spin at {self.center} is unassigned")
        return flip_probability(k, self._edges, self._dA, self._T[1] if k >= 1 else 0.0,
                                self.M, lambda j: self._sum_chi(j, sigma, sv))


def flip_probability(k: int, edges, dA, T1: float, M: float, chi_sum) -> float:
    """Shared formula for the update probability at step ``k >= 1``.

    ``chi_sum(j)`` returns ``sum J chi`` over the hyperedges new at step ``j``.
    """
    if k == 1:
        A = dA[1]
        den = -math.expm1(-(2.0 * A + T1))
        if den == 0.0:
            return 0.0
        s_in = chi_sum(1)
        p = math.exp(-A) * math.expm1(A - s_in) / den / M
    else:
        a = dA[k]
        den = -math.expm1(-a)
        if den == 0.0:
            return 0.0
        inner = 0.0
        for j in range(1, k):
            inner += chi_sum(j)
        d = chi_sum(k)
        p = math.exp(-inner) / M * (math.exp(-a) * math.expm1(a - d) / den)
    return clamp_probability(p)


def clamp_probability(p: float) -> float:
    if p < 0.0:
        if p < -CLAMP_TOL:
            raise NumericalInconsistency(f"update probability {p} below 0")
        return 0.0
    if p > 1.0:
        if p > 1.0 + CLAMP_TOL:
            raise NumericalInconsistency(f"update probability {p} above 1")
        return 1.0
    return p


# ---------------------------------------------------------------------------
# stochastic order
# ---------------------------------------------------------------------------

@dataclass
class DominanceReport:
    """Pointwise comparison of the reindexed CDFs of ``a`` and ``b``.

    ``b_cdf_dominates`` means ``F_a(n) <= F_b(n)`` for all checked ``n``, i.e.
    ``a`` is stochastically larger than ``b``.
    """

    horizon: int
    b_cdf_dominates: bool
    a_cdf_dominates: bool
    max_violation: float


def dominance_report(a: LambdaDistribution, b: LambdaDistribution,
                     horizon: int = DEFAULT_HORIZON, slack: float = 1e-12) -> DominanceReport:
    worst_ab = 0.0
    worst_ba = 0.0
    for n in range(horizon + 1):
        fa, fb = a.hat_cdf(n), b.hat_cdf(n)
        worst_ab = max(worst_ab, fa - fb)
        worst_ba = max(worst_ba, fb - fa)
    return DominanceReport(horizon, worst_ab <= slack, worst_ba <= slack, worst_ab)


def stochastically_dominates(a: LambdaDistribution, b: LambdaDistribution,
                             horizon: int = DEFAULT_HORIZON, slack: float = 1e-12) -> bool:
    """True iff ``hat_cdf_a(n) <= hat_cdf_b(n)`` (up to ``slack``) for all ``n <= horizon``."""
    return dominance_report(a, b, horizon, slack).b_cdf_dominates
