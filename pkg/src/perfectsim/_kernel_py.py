"""Pure-Python table-driven sampler, used when the compiled kernel is missing.

Mirrors ``_ckernel.pyx`` step for step so that both consume the random
stream identically and return identical results.
"""
from __future__ import annotations

import numpy as np

from .errors import InternalInvariantViolation, StepLimitExceeded
from .sampler import RECOMPUTE_EVERY, replica_rng
from .sequences import flip_probability
from .tables import Tables, pack


class _Prepared:
    def __init__(self, t: Tables):
        self.uniform = bool(t.uniform)
        self.default = int(t.default_class)
        self.exc = {int(k): int(c) for k, c in zip(t.exc_keys, t.exc_class)}
        self.mass = [float(m) for m in t.cls_mass]
        self.T1 = [float(x) for x in t.cls_T1]
        self.F, self.dA, self.incs, self.edges = [], [], [], []
        inc_off = [tuple(int(x) for x in row) for row in t.inc_off]
        edge_off = [tuple(int(x) for x in row) for row in t.edge_off]
        for c in range(t.n_classes):
            b, K = int(t.cls_base[c]), int(t.cls_K[c])
            self.F.append([float(x) for x in t.step_F[b:b + K + 1]])
            self.dA.append([float(x) for x in t.step_dA[b:b + K + 1]])
            incs, edges = [()], [()]
            for k in range(1, K + 1):
                g = b + k
                incs.append(tuple(inc_off[int(t.step_inc[g]):int(t.step_inc[g + 1])]))
                es = []
                for e in range(int(t.step_edge[g]), int(t.step_edge[g + 1])):
                    rows = edge_off[int(t.edge_v[e]):int(t.edge_v[e + 1])]
                    es.append((float(t.edge_J[e]), tuple(rows)))
                edges.append(tuple(es))
            self.incs.append(incs)
            self.edges.append(edges)


def _prepared(t: Tables) -> _Prepared:
    p = getattr(t, "_py_prepared", None)
    if p is None:
        p = _Prepared(t)
        t._py_prepared = p
    return p


def _bisect_left(F, u):
    lo, hi = 0, len(F) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if F[mid] < u:
            lo = mid + 1
        else:
            hi = mid
    return lo


def sample(t: Tables, window, rng: np.random.Generator, max_steps: int):
    P = _prepared(t)
    coords: list = []
    vcls: list = []
    ids: dict = {}

    def vid(x):
        i = ids.get(x)
        if i is None:
            i = ids[x] = len(coords)
            coords.append(x)
            vcls.append(P.exc.get(pack(x), P.default))
        return i

    pad = (0,) * (3 - t.dim)
    for v in window:
        vid(tuple(v) + pad)
    nwin = len(coords)
    C = list(range(nwin))
    pos = list(range(nwin))
    uniform = P.uniform
    masses = [] if uniform else [P.mass[vcls[i]] for i in C]
    total = 0.0
    for m in masses:
        total += m
    ev_v, ev_k = [], []
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
        c = vcls[w]
        k = _bisect_left(P.F[c], rng.random())
        if k == 0:
            last = C.pop()
            pos[w] = -1
            if not uniform:
                m_last = masses.pop()
                total -= m_last if idx == size - 1 else masses[idx]
            if idx < size - 1:
                C[idx] = last
                pos[last] = idx
                if not uniform:
                    masses[idx] = m_last
        else:
            x0 = coords[w]
            for step in range(1, k + 1):
                for off in P.incs[c][step]:
                    j = vid((x0[0] + off[0], x0[1] + off[1], x0[2] + off[2]))
                    if j == len(pos):
                        pos.append(-1)
                    if pos[j] < 0:
                        pos[j] = len(C)
                        C.append(j)
                        if not uniform:
                            mj = P.mass[vcls[j]]
                            masses.append(mj)
                            total += mj
            if len(C) > max_size:
                max_size = len(C)
        ev_v.append(w)
        ev_k.append(k)
        n += 1

    spin = [0] * len(coords)
    for e in range(n - 1, -1, -1):
        u = rng.random()
        w, k = ev_v[e], ev_k[e]
        if k == 0:
            spin[w] = -1 if u < 0.5 else 1
            continue
        sv = spin[w]
        if sv == 0:
            raise InternalInvariantViolation(f"event at {coords[w]} has an unassigned centre")
        c = vcls[w]
        x0 = coords[w]
        steps = P.edges[c]

        def chi_sum(j):
            s = 0.0
            for Jv, offs in steps[j]:
                cc = sv
                for off in offs:
                    i = ids.get((x0[0] + off[0], x0[1] + off[1], x0[2] + off[2]))
                    if i is None or spin[i] == 0:
                        raise InternalInvariantViolation(
                            f"event at {x0} reads an unassigned spin")
                    cc *= spin[i]
                s += Jv * cc
            return s

        p = flip_probability(k, None, P.dA[c], P.T1[c], P.mass[c], chi_sum)
        if u < p:
            spin[w] = -sv
    return [spin[i] for i in range(nwin)], n, max_size, len(coords)


def spin_matrix(t: Tables, window, seed: int, replicas: int, max_steps: int) -> np.ndarray:
    out = np.empty((replicas, len(window)), dtype=np.int8)
    for i in range(replicas):
        spins, *_ = sample(t, window, replica_rng(seed, i), max_steps)
        out[i] = spins
    return out
