"""Flat per-class tables consumed by the sampling kernels.

Vertices of a model fall into classes: one class per exceptional vertex and
one default class holding the far-field template, which every other vertex
uses after translation. For each class the table stores the growth CDF up to
the first index where it equals one, the increments and the newly covered
hyperedges of each step as coordinate offsets, and the scalars needed by
the update probabilities. All floats are copied from the same
:class:`LambdaDistribution` arithmetic the reference sampler uses, so both
engines make identical decisions.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PerfectSimError
from .lattice import Interaction, Vertex, sub
from .optimize import sequence_for
from .sequences import LambdaDistribution

COORD_BITS = 21
COORD_BIAS = 1 << 20
MAX_COORD = COORD_BIAS - 1
DEFAULT_TABLE_CAP = 200_000


class TablesUnavailable(PerfectSimError):
    """The model cannot be flattened into finite class tables."""


def pack(coords) -> int:
    key = 0
    for i, x in enumerate(coords):
        key |= (int(x) + COORD_BIAS) << (COORD_BITS * i)
    return key


def _pad(off, dim):
    return tuple(off) + (0,) * (3 - dim)


@dataclass
class Tables:
    dim: int
    uniform: bool
    default_class: int
    exc_keys: np.ndarray        # int64, packed exceptional vertices
    exc_class: np.ndarray       # int32
    cls_mass: np.ndarray        # float64
    cls_T1: np.ndarray          # float64
    cls_base: np.ndarray        # int64, first global step index of the class
    cls_K: np.ndarray           # int64, last step index (cdf == 1 there)
    step_F: np.ndarray          # float64, cdf per global step
    step_dA: np.ndarray         # float64, strength of hyperedges new at the step
    step_inc: np.ndarray        # int64, start of the step's increment rows (len + 1)
    step_edge: np.ndarray       # int64, start of the step's edge rows (len + 1)
    inc_off: np.ndarray         # int32 (n, 3)
    edge_J: np.ndarray          # float64
    edge_v: np.ndarray          # int64, start of each edge's vertex rows (len + 1)
    edge_off: np.ndarray        # int32 (m, 3)
    centers: list               # representative vertex of each class

    @property
    def n_classes(self) -> int:
        return len(self.cls_mass)

    def class_of(self, v: Vertex) -> int:
        key = pack(v)
        hit = np.nonzero(self.exc_keys == key)[0]
        return int(self.exc_class[hit[0]]) if len(hit) else self.default_class


def _class_vertices(J: Interaction):
    exc = J.exceptional_vertices()
    if exc is None:
        raise TablesUnavailable(f"{J.family} model has no finite class structure")
    far = J.far_representative()
    return far, sorted(exc)


def build_tables(J: Interaction, policy="ising_optimal",
                 cap: int = DEFAULT_TABLE_CAP) -> Tables:
    """Flatten ``J`` under ``policy`` into :class:`Tables`.

    Raises :class:`TablesUnavailable` when some class needs more than ``cap``
    steps or stored vertices before its CDF reaches one.
    """
    far, exc = _class_vertices(J)
    dim = J.dim
    centers = [far] + exc
    if any(abs(x) > MAX_COORD // 2 for v in centers for x in v):
        raise TablesUnavailable("coordinates too large for packed keys")

    cls_mass, cls_T1, cls_base, cls_K = [], [], [], []
    step_F, step_dA, step_inc, step_edge = [], [], [], []
    inc_off, edge_J, edge_v, edge_off = [], [], [], []
    budget = cap
    for c in centers:
        lam = LambdaDistribution(J, sequence_for(J, c, policy))
        if not lam.extend_until_complete(cap):
            raise TablesUnavailable(f"cdf at {c} does not reach 1 within {cap} steps")
        K = lam.support_size()
        cls_mass.append(lam.M)
        cls_T1.append(lam.tail(1) if K >= 1 else 0.0)
        cls_base.append(len(step_F))
        cls_K.append(K)
        seq = lam.seq
        for k in range(K + 1):
            step_F.append(lam.cdf(k))
            step_dA.append(lam.strength_step(k))
            step_inc.append(len(inc_off))
            step_edge.append(len(edge_J))
            if k == 0:
                continue
            inc = seq.increment(k)
            budget -= len(inc)
            if budget < 0:
                raise TablesUnavailable(f"tables exceed {cap} stored vertices")
            inc_off.extend(_pad(sub(u, c), dim) for u in inc)
            for others, Jv in lam.edges(k):
                edge_J.append(Jv)
                edge_v.append(len(edge_off))
                edge_off.extend(_pad(sub(u, c), dim) for u in others)
    step_inc.append(len(inc_off))
    step_edge.append(len(edge_J))
    edge_v.append(len(edge_off))

    return Tables(
        dim=dim,
        uniform=J.uniform_mass,
        default_class=0,
        exc_keys=np.array([pack(_pad(v, dim)) for v in exc], dtype=np.int64),
        exc_class=np.arange(1, len(exc) + 1, dtype=np.int32),
        cls_mass=np.array(cls_mass, dtype=np.float64),
        cls_T1=np.array(cls_T1, dtype=np.float64),
        cls_base=np.array(cls_base, dtype=np.int64),
        cls_K=np.array(cls_K, dtype=np.int64),
        step_F=np.array(step_F, dtype=np.float64),
        step_dA=np.array(step_dA, dtype=np.float64),
        step_inc=np.array(step_inc, dtype=np.int64),
        step_edge=np.array(step_edge, dtype=np.int64),
        inc_off=np.array(inc_off, dtype=np.int32).reshape(-1, 3),
        edge_J=np.array(edge_J, dtype=np.float64),
        edge_v=np.array(edge_v, dtype=np.int64),
        edge_off=np.array(edge_off, dtype=np.int32).reshape(-1, 3),
        centers=centers,
    )
