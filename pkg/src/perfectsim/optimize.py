"""Choosing region sequences and checking the applicability conditions.

* :func:`ising_optimal_sequence` adds neighbours one at a time by decreasing
  coupling magnitude, which minimises the birth-death expectation for
  pairwise models.
* :func:`brute_force_min` searches every running-union sequence built from
  the hyperedges at a vertex.
* :func:`upsilon_refine` splits the first block of a sequence into single
  vertex steps and keeps the best ordering.
* :func:`check_H1` / :func:`check_H2` evaluate the two sufficient conditions
  for termination of the backward chain.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import permutations
from typing import Callable, Sequence

from .errors import (
    BlockTooLarge,
    InfiniteSupport,
    ModelError,
    TailNotBoundable,
    TooManyHyperedges,
    UnsupportedModelClass,
)
from .lattice import (
    Interaction,
    Vertex,
    add,
    far_tail_bound,
    l1,
    shell_size,
    sub,
)
from .sequences import (
    ExactSum,
    Interval,
    LambdaDistribution,
    RegionSequence,
    from_offsets,
    l1_balls,
)

DEFAULT_CAP = 8


@dataclass
class OptimizationResult:
    """Outcome of a sequence search at ``center``.

    ``argmin_sequences`` holds descriptors: tuples of increments, each a
    sorted tuple of offsets from the centre. For refinements only the refined
    block is listed; the remaining steps are those of the base sequence.
    """

    center: Vertex
    best_mu: Interval
    argmin_sequences: list
    candidates_evaluated: int
    method: str = "brute_force"
    _builder: Callable | None = field(default=None, repr=False)

    def best_sequence(self) -> RegionSequence:
        """The first argmin sequence under the canonical descriptor order."""
        if self._builder is not None:
            return self._builder(self.argmin_sequences[0])
        return from_offsets(self.center, self.argmin_sequences[0])

    def to_record(self) -> dict:
        return {
            "center": list(self.center),
            "method": self.method,
            "best_mu": self.best_mu.to_list(),
            "candidates_evaluated": self.candidates_evaluated,
            "argmin_sequences": [[[list(o) for o in inc] for inc in d]
                                 for d in self.argmin_sequences],
        }


@dataclass
class ConditionReport:
    condition: str
    holds: bool
    witness_value: Interval
    evaluation_vertex_class: str
    per_vertex: list = field(default_factory=list)

    def to_record(self) -> dict:
        return {
            "condition": self.condition,
            "holds": self.holds,
            "witness_value": self.witness_value.to_list(),
            "evaluation_vertex_class": self.evaluation_vertex_class,
            "per_vertex": [[list(v), iv.to_list()] for v, iv in self.per_vertex],
        }


# ---------------------------------------------------------------------------
# sorted-coupling sequence
# ---------------------------------------------------------------------------

def _zero_neighbours(J: Interaction, v: Vertex) -> set:
    """Vertices whose pair coupling with ``v`` was forced to zero by a finite change."""
    out = set()
    node = J
    while hasattr(node, "base"):
        for B in getattr(node, "_at", {}).get(v, []):
            if len(B) == 2:
                w = B[0] if B[1] == v else B[1]
                if J.pair_coupling(v, w) == 0.0:
                    out.add(w)
        node = node.base
    return out


def ising_optimal_sequence(v: Vertex, J: Interaction) -> RegionSequence:
    """Single-vertex increments ordered by non-increasing ``|J_{v,w}|``.

    Ties are broken by L1 distance, then lexicographically. Vertices with a
    zero coupling to ``v`` are left out.
    """
    v = tuple(v)
    J._require_pairwise()
    if J.finite_at(v):
        stream = [(w,) for w, m in J.sorted_pairs(v) if m != 0.0]
        return RegionSequence(v, stream, kind="ising_optimal", far_offset=0, exhaustive=True)

    def gen():
        for w, m in J.sorted_pairs(v):
            if m != 0.0:
                yield (w,)

    return RegionSequence(v, gen(), kind="ising_optimal",
                          far_offset=J.sorted_rank_slack(v), exhaustive=True,
                          skip=_zero_neighbours(J, v))


def online_optimal_increments(v: Vertex, J: Interaction, steps: int) -> list:
    """Re-derive the sorted order step by step by scanning all remaining neighbours.

    Direct transcription of the online construction; used to cross-check the
    cached sorted sequence on finite instances.
    """
    v = tuple(v)
    if not J.finite_at(v):
        raise InfiniteSupport(f"infinitely many hyperedges at {v}")
    J._require_pairwise()
    remaining = {}
    for B, c in J.hyperedges_at(v):
        w = B[0] if B[1] == v else B[1]
        remaining[w] = abs(c)
    out = []
    while remaining and len(out) < steps:
        best = None
        for w, m in remaining.items():
            key = (-m, l1(v, w), w)
            if best is None or key < best[0]:
                best = (key, w)
        w = best[1]
        out.append((w,))
        del remaining[w]
    return out


def mu_ising_closed_form(v: Vertex, J: Interaction, tolerance: float = 1e-10,
                         max_terms: int = 2_000_000) -> Interval:
    """Birth-death expectation of the sorted sequence from the sorted magnitudes alone.

    Uses ``-2 e^{-2G} + e^{-T_1} + sum_{l>=2} l (e^{-T_l} - e^{-T_{l-1}})`` where
    ``T_l`` is the sum of all magnitudes beyond rank ``l``.
    """
    v = tuple(v)
    J._require_pairwise()
    G = J.total_strength(v)
    if G == 0.0:
        return Interval.point(-1.0)
    finite = J.finite_at(v)
    if finite:
        mags = [m for _, m in J.sorted_pairs(v) if m != 0.0]
        tails = []
        for l in range(1, len(mags) + 1):
            tails.append(math.fsum(mags[l:]))
        terms = [-2.0 * math.exp(-2.0 * G), math.exp(-tails[0])]
        for l in range(2, len(mags) + 1):
            terms.append(l * (math.exp(-tails[l - 1]) - math.exp(-tails[l - 2])))
        return Interval.point(math.fsum(terms))

    env = J.far_field_envelope(v)
    if env is None:
        raise TailNotBoundable(f"no far-field envelope at {v}")
    rho0, c, gamma = env
    dim = len(v)
    slack = J.sorted_rank_slack(v)
    shells: dict = {}
    for w in _zero_neighbours(J, v):
        r = l1(v, w)
        shells[r] = shells.get(r, 0) + 1
    radius = 0
    inside = ExactSum()
    acc = ExactSum()
    acc.add(-2.0 * math.exp(-2.0 * G))
    prev_F = None
    last_rho, upper = None, math.inf
    for l, (w, m) in enumerate((p for p in J.sorted_pairs(v) if p[1] != 0.0), start=1):
        inside.add(m)
        T = max(G - inside.value, 0.0)
        F = math.exp(-T)
        acc.add(F if l == 1 else l * (F - prev_F))
        prev_F = F
        r = l1(v, w)
        shells[r] = shells.get(r, 0) + 1
        while shells.get(radius + 1, 0) >= shell_size(radius + 1, dim):
            radius += 1
        if radius >= rho0 and radius != last_rho:
            upper = far_tail_bound(dim, c, gamma, radius, slack)
            last_rho = radius
        if upper is not math.inf:
            lower = (l + 1) * (1.0 - F)
            if upper - lower <= tolerance or upper <= tolerance * 1e-3:
                s = acc.value
                return Interval(s + lower, s + upper)
        if l >= max_terms:
            break
    raise TailNotBoundable(f"tail not resolved within {max_terms} terms")


# ---------------------------------------------------------------------------
# exhaustive search over running unions of hyperedges
# ---------------------------------------------------------------------------

def _mu_of_sets(J: Interaction, v: Vertex, sets: Sequence[frozenset], memo: dict) -> float:
    """Exact birth-death expectation of a finite sequence covering every hyperedge."""
    G = J.total_strength(v)
    acc = ExactSum()
    acc.add(-1.0)
    prev = math.exp(-2.0 * G)
    for S in sets:
        T = memo.get(S)
        if T is None:
            T = memo[S] = J.tail_strength(v, S)
        F = math.exp(-T)
        lam = F - prev
        if lam:
            acc.add(len(S) * lam)
        prev = F
    return acc.value


def _descriptor(v: Vertex, increments) -> tuple:
    return tuple(tuple(sorted(sub(u, v) for u in inc)) for inc in increments)


def brute_force_min(v: Vertex, J: Interaction, cap: int = DEFAULT_CAP,
                    tie_tol: float = 1e-12) -> OptimizationResult:
    """Minimise the birth-death expectation over all running-union sequences.

    Every ordering of the hyperedges at ``v`` is turned into the chain of
    running unions; steps that add nothing are dropped and duplicate chains
    are evaluated once.
    """
    v = tuple(v)
    if not J.finite_at(v):
        raise InfiniteSupport(f"infinitely many hyperedges at {v}")
    edges = [frozenset(B) for B, _ in J.hyperedges_at(v)]
    if len(edges) > cap:
        raise TooManyHyperedges(f"{len(edges)} hyperedges at {v} exceed cap {cap}")
    if not edges:
        return OptimizationResult(v, Interval.point(-1.0), [()], 1)
    seen: dict = {}
    memo: dict = {}
    for order in permutations(range(len(edges))):
        cur = frozenset([v])
        incs = []
        sets = []
        for i in order:
            nxt = cur | edges[i]
            if nxt != cur:
                incs.append(nxt - cur)
                sets.append(nxt)
                cur = nxt
        d = _descriptor(v, incs)
        if d not in seen:
            seen[d] = _mu_of_sets(J, v, sets, memo)
    best = min(seen.values())
    argmin = sorted(d for d, m in seen.items() if m <= best + tie_tol)
    return OptimizationResult(v, Interval.point(best), argmin, len(seen))


# ---------------------------------------------------------------------------
# block refinement
# ---------------------------------------------------------------------------

def refined_sequence(base: RegionSequence, N: int, order: Sequence[Vertex]) -> RegionSequence:
    """Single-vertex steps through ``order`` (which must enumerate ``B(N) \\ {v}``),
    then the steps of ``base`` after ``N``."""
    order = [tuple(u) for u in order]

    def gen():
        for u in order:
            yield (u,)
        k = N + 1
        while base.has_step(k):
            yield base.increment(k)
            k += 1

    seq = RegionSequence(base.center, gen(), kind=f"upsilon[{base.kind}]",
                         far_offset=base.far_offset, exhaustive=base.exhaustive,
                         skip=base.skip)
    seq.bound_from_step = len(order)
    return seq


def upsilon_refine(base: RegionSequence, N: int, J: Interaction, cap: int = DEFAULT_CAP,
                   tolerance: float = 1e-10, tie_tol: float = 1e-12) -> OptimizationResult:
    """Best refinement of ``base`` that splits ``B(N)`` into single-vertex steps.

    Only the first ``N`` steps change, so the birth-death expectation moves by
    the difference of the two finite head sums and the tail enclosure of the
    base carries over.
    """
    v = base.center
    if N < 1 or not base.has_step(N):
        raise ValueError(f"base sequence has no step {N}")
    block = sorted(u for u in base.set_at(N) if u != v)
    if len(block) > cap:
        raise BlockTooLarge(f"block of {len(block)} vertices exceeds cap {cap}")
    lam = LambdaDistribution(J, base)
    base_mu = lam.birth_death_mu(tolerance)
    F0 = lam.cdf(0)
    head = math.fsum(base.size(l) * lam.pmf(l) for l in range(1, N + 1))

    memo: dict = {}
    results = {}
    for order in permutations(block):
        terms = []
        prev = F0
        cur = {v}
        for i, u in enumerate(order, start=1):
            cur.add(u)
            key = frozenset(cur)
            T = memo.get(key)
            if T is None:
                T = memo[key] = J.tail_strength(v, key)
            F = math.exp(-T) if i < len(order) else lam.cdf(N)
            terms.append((i + 1) * (F - prev))
            prev = F
        results[tuple(sub(u, v) for u in order)] = math.fsum(terms) - head
    best = min(results.values())
    argmin = sorted(((o,) for o, d in results.items() if d <= best + tie_tol))
    descriptors = [tuple((x,) for x in d[0]) for d in argmin]
    best_mu = base_mu.shift(best) if best < 0.0 else base_mu

    improved = best < 0.0
    if not improved:
        # no ordering improves on the base: the base itself is returned
        descriptors = [base.descriptor(N)]

    def build(desc):
        if not improved:
            return base
        return refined_sequence(base, N, [add(v, inc[0]) for inc in desc])

    return OptimizationResult(v, best_mu, descriptors, len(results),
                              method="upsilon", _builder=build)


# ---------------------------------------------------------------------------
# sequence policies
# ---------------------------------------------------------------------------

POLICIES = ("l1_balls", "ising_optimal", "brute_force")


def sequence_for(J: Interaction, v: Vertex, policy) -> RegionSequence:
    """Region sequence at ``v`` chosen by ``policy``.

    ``policy`` is one of :data:`POLICIES`, ``("explicit", offset_increments)``
    or a callable ``(J, v) -> RegionSequence``.
    """
    v = tuple(v)
    if callable(policy):
        return policy(J, v)
    if isinstance(policy, tuple) and policy and policy[0] == "explicit":
        return from_offsets(v, policy[1])
    if policy == "l1_balls":
        return l1_balls(v)
    if policy == "ising_optimal":
        return ising_optimal_sequence(v, J)
    if policy == "brute_force":
        return brute_force_min(v, J).best_sequence()
    raise ModelError(f"unknown sequence policy {policy!r}")


def policy_name(policy) -> str:
    if callable(policy):
        return getattr(policy, "__name__", "custom")
    if isinstance(policy, tuple):
        return policy[0]
    return str(policy)


# ---------------------------------------------------------------------------
# applicability conditions
# ---------------------------------------------------------------------------

def _classes(J: Interaction):
    exc = J.exceptional_vertices()
    if exc is None:
        raise UnsupportedModelClass(
            f"{J.family} model is not translation-invariant up to a finite region")
    return J.far_representative(), sorted(exc)


def check_H1(J: Interaction, tolerance: float = 1e-10) -> ConditionReport:
    """Growth expectation with L1-ball sequences, maximised over vertex classes.

    The value at ``v`` is ``sum_{k>=1} |B(k)| lambda(k)``; the condition holds
    when its upper enclosure is below one at every evaluated vertex.
    """
    far, exc = _classes(J)
    per = []
    for v in [far] + exc:
        mu = LambdaDistribution(J, l1_balls(v)).birth_death_mu(tolerance)
        per.append((v, mu.shift(1.0)))
    witness = Interval(max(iv.lo for _, iv in per), max(iv.hi for _, iv in per))
    desc = "translation class" if not exc else f"far field plus {len(exc)} exceptional vertices"
    return ConditionReport("H1", witness.hi < 1.0, witness, desc, per)


def check_H2(J: Interaction, seq_policy="ising_optimal", tolerance: float = 1e-10) -> ConditionReport:
    """Birth-death expectation at a far-field representative vertex.

    Finite changes of the interaction do not reach the far field, so one
    vertex outside the exceptional region decides the limit. The witness is
    ``mu + 1`` and the condition holds when ``mu`` is certainly negative.
    """
    far, _ = _classes(J)
    mu = LambdaDistribution(J, sequence_for(J, far, seq_policy)).birth_death_mu(tolerance)
    witness = mu.shift(1.0)
    return ConditionReport("H2", mu.hi < 0.0, witness,
                           f"far field at {far} with {policy_name(seq_policy)}",
                           [(far, witness)])
