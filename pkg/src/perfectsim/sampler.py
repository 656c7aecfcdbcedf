"""Backward sketch and forward spin passes of the perfect sampler.

The backward pass runs the set-valued chain ``C_n`` from the window until it
dies out and records each event; the forward pass replays the events in
reverse and assigns spins. :func:`perfect_sample` composes both and picks
between this reference implementation and the table-driven kernel.

Random numbers: each backward event draws two uniforms (vertex selection,
then the growth index) and each forward event draws one.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    EmptyWindow,
    InternalInvariantViolation,
    StepLimitExceeded,
    UnassignedSpin,
)
from .lattice import Interaction, Vertex, UNASSIGNED
from .optimize import sequence_for
from .sequences import LambdaDistribution, RegionSequence

DEFAULT_MAX_STEPS = 10_000_000
RECOMPUTE_EVERY = 1 << 16


def replica_rng(seed: int, index: int = 0) -> np.random.Generator:
    """Independent counter-based stream for replica ``index`` of run ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(ss))


class ModelContext:
    """Per-run cache of region sequences and lambda distributions by vertex."""

    def __init__(self, J: Interaction, policy="ising_optimal"):
        self.J = J
        self.policy = policy
        self._lam: dict = {}
        self._tables = None
        self._tables_error = None

    def sequence(self, v: Vertex) -> RegionSequence:
        return self.lam(v).seq

    def lam(self, v: Vertex) -> LambdaDistribution:
        d = self._lam.get(v)
        if d is None:
            d = self._lam[v] = LambdaDistribution(self.J, sequence_for(self.J, v, self.policy))
        return d

    def mass(self, v: Vertex) -> float:
        return self.lam(v).M

    def tables(self):
        """Kernel tables for this model, or ``None`` if they cannot be built."""
        if self._tables is None and self._tables_error is None:
            from .tables import TablesUnavailable, build_tables
            try:
                self._tables = build_tables(self.J, self.policy)
            except TablesUnavailable as exc:
                self._tables_error = exc
        return self._tables


def _context(J, policy) -> ModelContext:
    if isinstance(J, ModelContext):
        return J
    return ModelContext(J, policy)


@dataclass
class EventRecord:
    """One backward event: ``vertex`` drew growth index ``k``.

    The regions are ``B(k-1)`` and ``B(k)`` of the vertex's sequence for
    ``k >= 1`` and empty for ``k == 0``.
    """

    vertex: Vertex
    k: int
    seq: RegionSequence | None = field(default=None, repr=False, compare=False)

    @property
    def inner_region(self) -> frozenset:
        if self.k == 0:
            return frozenset()
        return self.seq.set_at(self.k - 1)

    @property
    def outer_region(self) -> frozenset:
        if self.k == 0:
            return frozenset()
        return self.seq.set_at(self.k)

    def key(self) -> tuple:
        return (self.vertex, self.k)


@dataclass
class BackwardTrace:
    events: list
    initial_window: tuple
    max_set_size: int
    visited: int

    @property
    def n_stop(self) -> int:
        return len(self.events)

    def keys(self) -> list:
        return [e.key() for e in self.events]

    def replay(self) -> None:
        """Re-run the set chain from the events and require it to end empty."""
        C = set(self.initial_window)
        for i, e in enumerate(self.events):
            if e.vertex not in C:
                raise InternalInvariantViolation(f"event {i} selects {e.vertex} outside C")
            if e.k == 0:
                C.discard(e.vertex)
            else:
                C |= e.outer_region
        if C:
            raise InternalInvariantViolation(f"replay leaves {len(C)} vertices alive")


def _normalise_window(window: Iterable) -> tuple:
    out = []
    seen = set()
    for v in window:
        v = tuple(v)
        if v not in seen:
            seen.add(v)
            out.append(v)
    if not out:
        raise EmptyWindow("window is empty")
    return tuple(out)


def backward_sketch(window: Iterable[Vertex], J, rng: np.random.Generator,
                    max_steps: int = DEFAULT_MAX_STEPS, seq_policy="ising_optimal",
                    check_replay: bool = False) -> BackwardTrace:
    """Run the backward chain from ``window`` until it is empty.

    Vertices are picked with probability proportional to their mass; the
    picked vertex either dies (``k = 0``) or brings in ``B(k)``.
    """
    ctx = _context(J, seq_policy)
    window = _normalise_window(window)
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    uniform = ctx.J.uniform_mass
    C = list(window)
    where = {v: i for i, v in enumerate(C)}
    masses = [] if uniform else [ctx.mass(v) for v in C]
    total = 0.0
    for m in masses:
        total += m
    visited = set(C)
    events = []
    max_size = len(C)
    n = 0
    while C:
        if n >= max_steps:
            raise StepLimitExceeded(max_steps, len(C))
        if not uniform and n and n % RECOMPUTE_EVERY == 0:
            total = 0.0
            for m in masses:
                total += m
        u = rng.random()
        size = len(C)
        if uniform:
            idx = int(u * size)
            if idx >= size:
                idx = size - 1
        else:
            target = u * total
            acc = 0.0
            idx = size - 1
            for i, m in enumerate(masses):
                acc += m
                if target < acc:
                    idx = i
                    break
        w = C[idx]
        lam = ctx.lam(w)
        k = lam.sample_k(rng.random())
        if k == 0:
            last = C.pop()
            del where[w]
            if not uniform:
                m_last = masses.pop()
                total -= m_last if idx == size - 1 else masses[idx]
            if idx < size - 1:
                C[idx] = last
                where[last] = idx
                if not uniform:
                    masses[idx] = m_last
        else:
            seq = lam.seq
            for step in range(1, k + 1):
                for x in seq.increment(step):
                    if x not in where:
                        where[x] = len(C)
                        C.append(x)
                        visited.add(x)
                        if not uniform:
                            mx = ctx.mass(x)
                            masses.append(mx)
                            total += mx
            if len(C) > max_size:
                max_size = len(C)
        events.append(EventRecord(w, k, lam.seq))
        n += 1
    trace = BackwardTrace(events, window, max_size, len(visited))
    if check_replay:
        trace.replay()
    return trace


def update_prob(v: Vertex, k: int, sigma, seq: RegionSequence, J: Interaction) -> float:
    """Flip probability at ``v`` after a step-``k`` event, given spins ``sigma``."""
    return LambdaDistribution(J, seq).update_prob(k, sigma)


def forward_spin(trace: BackwardTrace, J, rng: np.random.Generator,
                 seq_policy="ising_optimal") -> dict:
    """Assign spins by replaying ``trace`` from its last event to its first."""
    ctx = _context(J, seq_policy)
    sigma: dict = {}
    for e in reversed(trace.events):
        u = rng.random()
        v = e.vertex
        if e.k == 0:
            sigma[v] = -1 if u < 0.5 else 1
            continue
        lam = ctx.lam(v)
        seq = lam.seq
        for step in range(0, e.k + 1):
            verts = (v,) if step == 0 else seq.increment(step)
            for x in verts:
                if sigma.get(x, UNASSIGNED) == UNASSIGNED:
                    raise InternalInvariantViolation(
                        f"event ({v}, k={e.k}) reads unassigned spin at {x}")
        try:
            p = lam.update_prob(e.k, sigma)
        except UnassignedSpin as exc:
            raise InternalInvariantViolation(str(exc)) from exc
        if u < p:
            sigma[v] = -sigma[v]
    return sigma


@dataclass
class SampleResult:
    spins: dict
    n_stop: int
    max_set_size: int
    visited: int
    engine: str = "reference"

    def window_spins(self, window: Sequence[Vertex]) -> list:
        return [self.spins[tuple(v)] for v in window]

    @property
    def diagnostics(self) -> dict:
        return {"n_stop": self.n_stop, "max_set_size": self.max_set_size,
                "visited": self.visited, "engine": self.engine}


def perfect_sample(window: Iterable[Vertex], J, seq_policy="ising_optimal",
                   rng: np.random.Generator | None = None,
                   max_steps: int = DEFAULT_MAX_STEPS, engine: str = "auto",
                   seed: int | None = None) -> SampleResult:
    """One exact draw of the spins on ``window``.

    ``engine`` is ``"reference"`` (this module), ``"kernel"`` (table-driven,
    compiled when available) or ``"auto"`` (kernel when its tables can be
    built). Both engines consume the random stream identically.
    """
    ctx = _context(J, seq_policy)
    window = _normalise_window(window)
    if rng is None:
        rng = replica_rng(0 if seed is None else seed, 0)
    if engine not in ("auto", "reference", "kernel"):
        raise ValueError(f"unknown engine {engine!r}")
    if engine != "reference":
        tables = ctx.tables()
        if tables is not None:
            from . import kernel
            spins, n_stop, max_size, visited = kernel.sample(tables, window, rng, max_steps)
            return SampleResult(dict(zip(window, spins)), n_stop, max_size, visited,
                                kernel.BACKEND)
        if engine == "kernel":
            raise ctx._tables_error
    trace = backward_sketch(window, ctx, rng, max_steps)
    sigma = forward_spin(trace, ctx, rng)
    return SampleResult({v: sigma[v] for v in window}, trace.n_stop, trace.max_set_size,
                        trace.visited, "reference")


def sample_replicas(window: Iterable[Vertex], J, seq_policy="ising_optimal", seed: int = 0,
                    replicas: int = 1, max_steps: int = DEFAULT_MAX_STEPS,
                    engine: str = "auto", start: int = 0) -> list:
    """Replicas ``start .. start+replicas-1``; replica ``i`` uses ``replica_rng(seed, i)``."""
    ctx = _context(J, seq_policy)
    window = _normalise_window(window)
    return [perfect_sample(window, ctx, rng=replica_rng(seed, i), max_steps=max_steps,
                           engine=engine)
            for i in range(start, start + replicas)]


def spin_matrix(window: Iterable[Vertex], J, seq_policy="ising_optimal", seed: int = 0,
                replicas: int = 1, max_steps: int = DEFAULT_MAX_STEPS,
                engine: str = "auto") -> np.ndarray:
    """Replica spins on ``window`` as an ``(replicas, |window|)`` int8 array."""
    ctx = _context(J, seq_policy)
    window = _normalise_window(window)
    if engine != "reference" and ctx.tables() is not None:
        from . import kernel
        return kernel.spin_matrix(ctx.tables(), window, seed, replicas, max_steps)
    out = np.empty((replicas, len(window)), dtype=np.int8)
    for i, r in enumerate(sample_replicas(window, ctx, seed=seed, replicas=replicas,
                                          max_steps=max_steps, engine="reference")):
        out[i] = r.window_spins(window)
    return out
