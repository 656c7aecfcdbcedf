"""Generalised set-valued birth-death processes and Galton-Watson trees.

A process is described by an :class:`ExtinctionSpec`: every vertex belongs
to a :class:`VertexClass` giving its growth law ``psi``, its mass and the
regions ``S(l)`` it brings in. One step picks a vertex of ``D_n`` with
probability proportional to mass, draws ``k`` from ``psi`` and either
removes the vertex (``k = 0``) or adds ``S(k)``.
"""
from __future__ import annotations

import bisect
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Hashable, Iterable, Mapping, Sequence

import numpy as np

from .errors import InfiniteExceptionalRegion, ModelError, TailNotBoundable
from .lattice import add
from .sequences import Interval, LambdaDistribution

NORMALISATION_TOL = 1e-12


class TablePMF:
    """Finite-support pmf on ``0..len(probs)-1``."""

    def __init__(self, probs: Sequence[float]):
        probs = [float(p) for p in probs]
        if not probs or any(p < 0 or not math.isfinite(p) for p in probs):
            raise ModelError("pmf entries must be finite and non-negative")
        if abs(math.fsum(probs) - 1.0) > NORMALISATION_TOL:
            raise ModelError(f"pmf sums to {math.fsum(probs)!r}, not 1")
        if probs[0] <= 0:
            raise ModelError("pmf must give positive mass to 0")
        self.probs = probs
        self._cum = list(itertools.accumulate(probs))

    finite = True

    @property
    def support_max(self) -> int:
        return len(self.probs) - 1

    def pmf(self, k: int) -> float:
        return self.probs[k] if 0 <= k < len(self.probs) else 0.0

    def cdf(self, k: int) -> float:
        if k < 0:
            return 0.0
        return self._cum[min(k, len(self._cum) - 1)]

    def sample_k(self, u: float) -> int:
        return min(bisect.bisect_left(self._cum, u), len(self.probs) - 1)

    def mean(self) -> float:
        return math.fsum(k * p for k, p in enumerate(self.probs))


class LambdaPsi:
    """Growth law of a lambda distribution viewed as a ``psi``."""

    finite = False

    def __init__(self, lam: LambdaDistribution):
        self.lam = lam

    def pmf(self, k: int) -> float:
        return self.lam.pmf(k)

    def cdf(self, k: int) -> float:
        return self.lam.cdf(k)

    def sample_k(self, u: float) -> int:
        return self.lam.sample_k(u)


@dataclass
class VertexClass:
    """Dynamics shared by a set of vertices.

    Exactly one of ``offsets``, ``sizes`` or ``sequence`` describes the regions:
    ``offsets[l]`` lists lattice offsets of ``S(l)``; ``sizes[l]`` asks for
    that many fresh abstract individuals; ``sequence`` uses
    ``S(l) = B(l) \\ {v}`` of a region sequence.
    ``vertices`` lists the members, or is ``None`` for the class of all
    remaining vertices.
    """

    psi: object
    mass: float = 1.0
    offsets: Mapping[int, Sequence] | None = None
    sizes: Mapping[int, int] | None = None
    sequence: object = None
    vertices: tuple | None = None

    def __post_init__(self):
        if self.mass < 1.0:
            raise ModelError("masses must be >= 1")
        modes = sum(x is not None for x in (self.offsets, self.sizes, self.sequence))
        if modes > 1:
            raise ModelError("give only one of offsets, sizes or sequence")
        if self.offsets is not None:
            self.offsets = {int(l): tuple(tuple(o) for o in offs)
                            for l, offs in self.offsets.items()}
        if self.sizes is not None:
            self.sizes = {int(l): int(n) for l, n in self.sizes.items()}

    def region_size(self, l: int) -> int:
        if self.offsets is not None:
            return len(self.offsets.get(l, ()))
        if self.sizes is not None:
            return self.sizes.get(l, 0)
        if self.sequence is not None:
            return self.sequence.size(l) - 1
        return 0

    def region(self, v, l: int, fresh) -> tuple:
        if self.offsets is not None:
            return tuple(add(v, o) for o in self.offsets.get(l, ()))
        if self.sizes is not None:
            return tuple(("ind", next(fresh)) for _ in range(self.sizes.get(l, 0)))
        if self.sequence is not None:
            seq = self.sequence
            return tuple(u for step in range(1, l + 1) for u in seq.increment(step))
        return ()

    def eta(self, tolerance: float = 1e-10) -> Interval:
        """``-psi(0) + sum_{l>=1} |S(l)| psi(l)``."""
        if isinstance(self.psi, LambdaPsi):
            # |S(l)| = |B(l)| - 1 turns this into the birth-death expectation
            return self.psi.lam.birth_death_mu(tolerance)
        if not getattr(self.psi, "finite", False):
            raise TailNotBoundable("psi has no finite support and no tail bound")
        terms = [-self.psi.pmf(0)]
        for l in range(1, self.psi.support_max + 1):
            terms.append(self.region_size(l) * self.psi.pmf(l))
        return Interval.point(math.fsum(terms))


class ExtinctionSpec:
    """Classes of vertices plus an initial set.

    Parameters
    ----------
    classes
        ``label -> VertexClass``. At most one class may have ``vertices=None``;
        it is the default class of every vertex not listed elsewhere.
    initial_set
        Ordered initial vertices ``D_0``.
    uniform_mass
        Pick vertices uniformly by index instead of by cumulative mass. Defaults
        to whether all class masses coincide.
    resolver
        Optional ``v -> VertexClass`` used instead of ``classes`` for
        per-vertex specs built from an interaction.
    """

    def __init__(self, classes: Mapping[Hashable, VertexClass], initial_set: Iterable = (),
                 uniform_mass: bool | None = None,
                 resolver: Callable | None = None):
        self.classes = dict(classes)
        self.initial_set = tuple(initial_set)
        self.resolver = resolver
        self._member: dict = {}
        self.default = None
        for label, c in self.classes.items():
            if c.vertices is None:
                if self.default is not None:
                    raise ModelError("only one class may be the default class")
                self.default = label
            else:
                for v in c.vertices:
                    if v in self._member:
                        raise ModelError(f"vertex {v} is in two classes")
                    self._member[v] = label
        if uniform_mass is None:
            uniform_mass = len({c.mass for c in self.classes.values()}) <= 1
        self.uniform_mass = uniform_mass

    def class_of(self, v) -> VertexClass:
        if self.resolver is not None:
            return self.resolver(v)
        label = self._member.get(v, self.default)
        if label is None:
            raise ModelError(f"vertex {v} has no class and there is no default class")
        return self.classes[label]

    def label_of(self, v):
        return self._member.get(v, self.default)

    @classmethod
    def from_lambda(cls, J, seq_policy="ising_optimal", initial_set: Iterable = ()) -> "ExtinctionSpec":
        """Spec with ``psi = lambda``, ``S(l) = B(l) \\ {v}`` and the sampler's masses."""
        from .sampler import ModelContext

        ctx = J if isinstance(J, ModelContext) else ModelContext(J, seq_policy)
        cache: dict = {}

        def resolve(v):
            c = cache.get(v)
            if c is None:
                lam = ctx.lam(v)
                c = cache[v] = VertexClass(LambdaPsi(lam), mass=lam.M, sequence=lam.seq,
                                           vertices=(v,))
            return c

        return cls({}, initial_set, uniform_mass=ctx.J.uniform_mass, resolver=resolve)


def eta(spec: ExtinctionSpec, v, tolerance: float = 1e-10) -> Interval:
    return spec.class_of(v).eta(tolerance)


@dataclass
class SimulationOutcome:
    """Result of one run: ``extinct`` with its ``time``, or survival at the cap."""

    extinct: bool
    steps: int
    max_size: int
    events: list | None = None

    @property
    def time(self) -> int | None:
        return self.steps if self.extinct else None

    def to_record(self) -> dict:
        return {"extinct": self.extinct, "steps": self.steps, "max_size": self.max_size}


def simulate(spec: ExtinctionSpec, rng: np.random.Generator, max_steps: int = 1_000_000,
             record: bool = False) -> SimulationOutcome:
    """Run ``D_n`` until it is empty or ``max_steps`` events have happened."""
    D = list(dict.fromkeys(spec.initial_set))
    where = {v: i for i, v in enumerate(D)}
    uniform = spec.uniform_mass
    masses = [] if uniform else [spec.class_of(v).mass for v in D]
    total = 0.0
    for m in masses:
        total += m
    fresh = itertools.count()
    events = [] if record else None
    max_size = len(D)
    n = 0
    while D:
        if n >= max_steps:
            return SimulationOutcome(False, n, max_size, events)
        if not uniform and n and n % (1 << 16) == 0:
            total = 0.0
            for m in masses:
                total += m
        u = rng.random()
        size = len(D)
        if uniform:
            idx = min(int(u * size), size - 1)
        else:
            target = u * total
            acc = 0.0
            idx = size - 1
            for i, m in enumerate(masses):
                acc += m
                if target < acc:
                    idx = i
                    break
        w = D[idx]
        vc = spec.class_of(w)
        k = vc.psi.sample_k(rng.random())
        if k == 0:
            del where[w]
            m_w = 0.0
            if not uniform:
                m_w = masses[idx]
                total -= m_w
            last = D.pop()
            m_last = masses.pop() if not uniform else 0.0
            if idx < size - 1:
                D[idx] = last
                where[last] = idx
                if not uniform:
                    masses[idx] = m_last
        else:
            for x in vc.region(w, k, fresh):
                if x not in where:
                    where[x] = len(D)
                    D.append(x)
                    if not uniform:
                        mx = spec.class_of(x).mass
                        masses.append(mx)
                        total += mx
            max_size = max(max_size, len(D))
        if record:
            events.append((w, k))
        n += 1
    return SimulationOutcome(True, n, max_size, events)


# ---------------------------------------------------------------------------
# hypothesis check
# ---------------------------------------------------------------------------

@dataclass
class HypothesisReport:
    delta: float
    holds: bool
    eta_by_class: dict
    exceptional_region: list | None
    N: int | None
    xi: float
    sensitivity: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        return {
            "delta": self.delta,
            "holds": self.holds,
            "eta_by_class": {str(k): v.to_list() for k, v in self.eta_by_class.items()},
            "exceptional_region": None if self.exceptional_region is None
            else [list(v) if isinstance(v, tuple) else v for v in self.exceptional_region],
            "N": self.N,
            "xi": self.xi,
            "sensitivity": {str(k): v for k, v in self.sensitivity.items()},
        }


def _region(spec, etas, delta):
    """Vertices with eta > -delta, or ``None`` if the default class is among them."""
    out = []
    for label, iv in etas.items():
        if iv.hi > -delta:
            members = spec.classes[label].vertices
            if members is None:
                return None
            out.extend(members)
    return sorted(out, key=repr)


def check_hypotheses(spec: ExtinctionSpec, delta: float = 0.05,
                     tolerance: float = 1e-10) -> HypothesisReport:
    """Exceptional region, threshold ``N`` and ``xi`` for the extinction criterion.

    The criterion holds when the default (infinite) class has negative
    ``eta``; finitely many exceptional classes may have any ``eta``.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    if spec.resolver is not None or not spec.classes:
        raise ModelError("hypothesis check needs an explicit finite class structure")
    etas = {label: c.eta(tolerance) for label, c in spec.classes.items()}
    xi = min(c.psi.pmf(0) for c in spec.classes.values())
    infinite = [l for l, c in spec.classes.items() if c.vertices is None]
    holds = all(etas[l].hi < 0.0 for l in infinite)
    sensitivity = {}
    for d in (delta / 2, 2 * delta):
        r = _region(spec, etas, d)
        sensitivity[d] = None if r is None else len(r)
    if not holds:
        return HypothesisReport(delta, False, etas, None, None, xi, sensitivity)
    region = _region(spec, etas, delta)
    if region is None:
        raise InfiniteExceptionalRegion(
            f"the default class has eta > -{delta}; choose a smaller delta")
    a = 0.0
    for v in region:
        c = spec.class_of(v)
        a = max(a, c.mass * etas[spec.label_of(v)].hi)
    N = math.ceil(a * len(region) / delta + len(region))
    return HypothesisReport(delta, True, etas, region, N, xi, sensitivity)


# ---------------------------------------------------------------------------
# Galton-Watson
# ---------------------------------------------------------------------------

@dataclass
class GWTrajectory:
    sizes: list
    extinct: bool

    @property
    def generations(self) -> int:
        return len(self.sizes) - 1


def galton_watson(offspring: Sequence[float], generations: int, rng: np.random.Generator,
                  initial: int = 1) -> GWTrajectory:
    """Generation sizes of a Galton-Watson tree up to ``generations``.

    Each generation is drawn at once: the offspring counts of ``Z_n``
    individuals are multinomial over the offspring law.
    """
    pmf = TablePMF(offspring)
    probs = np.array(pmf.probs)
    probs = probs / probs.sum()
    values = np.arange(len(probs))
    sizes = [int(initial)]
    z = int(initial)
    for _ in range(generations):
        if z == 0:
            break
        counts = rng.multinomial(z, probs)
        z = int(values @ counts)
        sizes.append(z)
    return GWTrajectory(sizes, sizes[-1] == 0)


def galton_watson_spec(offspring: Sequence[float], initial: int = 1) -> ExtinctionSpec:
    """Individual-level spec of a Galton-Watson tree.

    Drawing ``l`` children keeps the chosen individual (as one child) and adds
    ``l - 1`` fresh ones, so ``eta`` equals the mean offspring minus one and
    the population size follows the tree's total progeny walk.
    """
    pmf = TablePMF(offspring)
    sizes = {l: l - 1 for l in range(1, pmf.support_max + 1)}
    spec = ExtinctionSpec({"individual": VertexClass(pmf, 1.0, sizes=sizes)},
                          [("ind", -i - 1) for i in range(initial)])
    return spec
