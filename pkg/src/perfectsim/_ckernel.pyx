# distutils: language = c++
# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled table-driven sampler; same protocol as ``_kernel_py``."""

from cpython.pycapsule cimport PyCapsule_GetPointer
from cython.operator cimport dereference as deref
from libc.math cimport exp, expm1
from libc.stdint cimport int64_t
from libcpp.unordered_map cimport unordered_map
from libcpp.vector cimport vector
from numpy.random cimport bitgen_t

import numpy as np

from .errors import InternalInvariantViolation, NumericalInconsistency, StepLimitExceeded

cdef enum:
    BITS = 21
    BIAS = 1048576
    RECOMPUTE_EVERY = 65536

cdef double CLAMP_TOL = 1e-12


cdef inline int64_t pack3(int x, int y, int z) nogil:
    return (<int64_t>(x + BIAS)) | ((<int64_t>(y + BIAS)) << BITS) | ((<int64_t>(z + BIAS)) << (2 * BITS))


cdef class CompiledTables:
    cdef public bint uniform
    cdef int default_class
    cdef double[::1] cls_mass, cls_T1, step_F, step_dA, edge_J
    cdef int64_t[::1] cls_base, cls_K, step_inc, step_edge, edge_v
    cdef int[:, ::1] inc_off, edge_off
    cdef unordered_map[int64_t, int] exc

    def __init__(self, t):
        self.uniform = bool(t.uniform)
        self.default_class = int(t.default_class)
        self.cls_mass = np.ascontiguousarray(t.cls_mass, dtype=np.float64)
        self.cls_T1 = np.ascontiguousarray(t.cls_T1, dtype=np.float64)
        self.step_F = np.ascontiguousarray(t.step_F, dtype=np.float64)
        self.step_dA = np.ascontiguousarray(t.step_dA, dtype=np.float64)
        self.edge_J = np.ascontiguousarray(t.edge_J, dtype=np.float64)
        self.cls_base = np.ascontiguousarray(t.cls_base, dtype=np.int64)
        self.cls_K = np.ascontiguousarray(t.cls_K, dtype=np.int64)
        self.step_inc = np.ascontiguousarray(t.step_inc, dtype=np.int64)
        self.step_edge = np.ascontiguousarray(t.step_edge, dtype=np.int64)
        self.edge_v = np.ascontiguousarray(t.edge_v, dtype=np.int64)
        self.inc_off = np.ascontiguousarray(t.inc_off, dtype=np.intc).reshape(-1, 3)
        self.edge_off = np.ascontiguousarray(t.edge_off, dtype=np.intc).reshape(-1, 3)
        for k, c in zip(t.exc_keys, t.exc_class):
            self.exc[<int64_t>int(k)] = <int>int(c)


cdef struct State:
    vector[int] coords
    vector[int] vcls
    vector[signed char] spin
    vector[int] pos
    unordered_map[int64_t, int] ids


cdef inline int vid(CompiledTables T, State* s, int x, int y, int z) except -1:
    cdef int64_t key
    cdef int i
    cdef unordered_map[int64_t, int].iterator it
    cdef unordered_map[int64_t, int].iterator e
    if x <= -BIAS or x >= BIAS or y <= -BIAS or y >= BIAS or z <= -BIAS or z >= BIAS:
        raise OverflowError("vertex coordinate outside the packed key range")
    key = pack3(x, y, z)
    it = s.ids.find(key)
    if it != s.ids.end():
        return deref(it).second
    i = <int>s.vcls.size()
    s.ids[key] = i
    s.coords.push_back(x)
    s.coords.push_back(y)
    s.coords.push_back(z)
    e = T.exc.find(key)
    if e != T.exc.end():
        s.vcls.push_back(deref(e).second)
    else:
        s.vcls.push_back(T.default_class)
    s.spin.push_back(0)
    s.pos.push_back(-1)
    return i


cdef inline double chi_sum(CompiledTables T, State* s, int64_t g, int w, int sv) except? -1e308:
    cdef double acc = 0.0
    cdef int64_t e, r, key
    cdef int cc, x, y, z
    cdef unordered_map[int64_t, int].iterator it
    x = s.coords[3 * w]
    y = s.coords[3 * w + 1]
    z = s.coords[3 * w + 2]
    for e in range(T.step_edge[g], T.step_edge[g + 1]):
        cc = sv
        for r in range(T.edge_v[e], T.edge_v[e + 1]):
            key = pack3(x + T.edge_off[r, 0], y + T.edge_off[r, 1], z + T.edge_off[r, 2])
            it = s.ids.find(key)
            if it == s.ids.end() or s.spin[deref(it).second] == 0:
                raise InternalInvariantViolation(
                    f"event at {(x, y, z)} reads an unassigned spin")
            cc *= s.spin[deref(it).second]
        acc += T.edge_J[e] * <double>cc
    return acc


cdef double flip_prob(CompiledTables T, State* s, int w, int c, int64_t k, int sv) except? -1e308:
    cdef int64_t b = T.cls_base[c]
    cdef double A, den, s_in, p, a, inner, d
    cdef double M = T.cls_mass[c]
    cdef int64_t j
    if k == 1:
        A = T.step_dA[b + 1]
        den = -expm1(-(2.0 * A + T.cls_T1[c]))
        if den == 0.0:
            return 0.0
        s_in = chi_sum(T, s, b + 1, w, sv)
        p = exp(-A) * expm1(A - s_in) / den / M
    else:
        a = T.step_dA[b + k]
        den = -expm1(-a)
        if den == 0.0:
            return 0.0
        inner = 0.0
        for j in range(1, k):
            inner += chi_sum(T, s, b + j, w, sv)
        d = chi_sum(T, s, b + k, w, sv)
        p = exp(-inner) / M * (exp(-a) * expm1(a - d) / den)
    if p < 0.0:
        if p < -CLAMP_TOL:
            raise NumericalInconsistency(f"update probability {p} below 0")
        return 0.0
    if p > 1.0:
        if p > 1.0 + CLAMP_TOL:
            raise NumericalInconsistency(f"update probability {p} above 1")
        return 1.0
    return p


def run(CompiledTables T, int[:, ::1] window, object bit_generator, int64_t max_steps):
    """Backward and forward passes for one replica.

    Returns ``(window_spins, n_stop, max_set_size, visited)``.
    """
    cdef State s
    cdef bitgen_t* rng
    cdef vector[int] C
    cdef vector[double] masses
    cdef vector[int] ev_v
    cdef vector[int64_t] ev_k
    cdef double total = 0.0, u, target, acc, mj, m_last = 0.0
    cdef Py_ssize_t nwin = window.shape[0], i, size, idx
    cdef int64_t n = 0, k, lo, hi, mid, b, K, step, r, e
    cdef int w, c, j, last, x0, y0, z0, sv
    cdef size_t max_size
    cdef bint uniform = T.uniform
    cdef double p

    capsule = bit_generator.capsule
    rng = <bitgen_t*> PyCapsule_GetPointer(capsule, "BitGenerator")

    for i in range(nwin):
        vid(T, &s, window[i, 0], window[i, 1], window[i, 2])
    for i in range(nwin):
        C.push_back(<int>i)
        s.pos[i] = <int>i
        if not uniform:
            masses.push_back(T.cls_mass[s.vcls[i]])
    for i in range(<Py_ssize_t>masses.size()):
        total += masses[i]
    max_size = C.size()

    with bit_generator.lock:
        while C.size() > 0:
            if n >= max_steps:
                raise StepLimitExceeded(max_steps, C.size())
            if not uniform and n and n % RECOMPUTE_EVERY == 0:
                total = 0.0
                for i in range(<Py_ssize_t>masses.size()):
                    total += masses[i]
            u = rng.next_double(rng.state)
            size = <Py_ssize_t>C.size()
            if uniform:
                idx = <Py_ssize_t>(u * <double>size)
                if idx >= size:
                    idx = size - 1
            else:
                target = u * total
                acc = 0.0
                idx = size - 1
                for i in range(size):
                    acc += masses[i]
                    if target < acc:
                        idx = i
                        break
            w = C[idx]
            c = s.vcls[w]
            b = T.cls_base[c]
            K = T.cls_K[c]
            u = rng.next_double(rng.state)
            lo = 0
            hi = K
            while lo < hi:
                mid = (lo + hi) // 2
                if T.step_F[b + mid] < u:
                    lo = mid + 1
                else:
                    hi = mid
            k = lo
            if k == 0:
                last = C.back()
                C.pop_back()
                s.pos[w] = -1
                if not uniform:
                    m_last = masses.back()
                    masses.pop_back()
                    if idx == size - 1:
                        total -= m_last
                    else:
                        total -= masses[idx]
                if idx < size - 1:
                    C[idx] = last
                    s.pos[last] = <int>idx
                    if not uniform:
                        masses[idx] = m_last
            else:
                x0 = s.coords[3 * w]
                y0 = s.coords[3 * w + 1]
                z0 = s.coords[3 * w + 2]
                for step in range(1, k + 1):
                    for r in range(T.step_inc[b + step], T.step_inc[b + step + 1]):
                        j = vid(T, &s, x0 + T.inc_off[r, 0], y0 + T.inc_off[r, 1],
                                z0 + T.inc_off[r, 2])
                        if s.pos[j] < 0:
                            s.pos[j] = <int>C.size()
                            C.push_back(j)
                            if not uniform:
                                mj = T.cls_mass[s.vcls[j]]
                                masses.push_back(mj)
                                total += mj
                if C.size() > max_size:
                    max_size = C.size()
            ev_v.push_back(w)
            ev_k.push_back(k)
            n += 1

        for e in range(n - 1, -1, -1):
            u = rng.next_double(rng.state)
            w = ev_v[e]
            k = ev_k[e]
            if k == 0:
                sv = -1 if u < 0.5 else 1
                s.spin[w] = sv
                continue
            sv = s.spin[w]
            if sv == 0:
                raise InternalInvariantViolation("event has an unassigned centre")
            p = flip_prob(T, &s, w, s.vcls[w], k, sv)
            if u < p:
                s.spin[w] = -sv

    spins = [int(s.spin[i]) for i in range(nwin)]
    return spins, int(n), int(max_size), int(s.vcls.size())
