"""Exact reference values for validating the sampler.

If every hyperedge of ``J`` lies inside a finite region ``L``, the
infinite-volume Gibbs measure is the finite Gibbs measure on ``L`` times
independent fair spins elsewhere: the local specification at a vertex outside
``L`` is uniform, and at a vertex inside ``L`` it only involves spins in
``L``, so this product satisfies every local specification and is the unique
such measure. Full enumeration on ``L`` is therefore an exact oracle for the
sampler's output.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from .errors import ModelError, RegionTooLarge
from .lattice import ExplicitFinite, Interaction, Vertex
from .sequences import LambdaDistribution, RegionSequence

MAX_SITES = 20


def all_patterns(n: int) -> np.ndarray:
    """All ``2**n`` spin patterns; bit ``i`` of the row index set means spin -1 at site ``i``."""
    idx = np.arange(1 << n, dtype=np.int64)
    bits = (idx[:, None] >> np.arange(n)) & 1
    return (1 - 2 * bits).astype(np.int8)


@dataclass
class ExactMarginal:
    region: tuple
    probs: np.ndarray

    def __post_init__(self):
        if self.probs.shape != (1 << len(self.region),):
            raise ValueError("table size must be 2**|region|")

    def index(self, spins: Sequence[int]) -> int:
        out = 0
        for i, s in enumerate(spins):
            if s == -1:
                out |= 1 << i
        return out

    def prob(self, spins: Sequence[int]) -> float:
        return float(self.probs[self.index(spins)])

    def patterns(self) -> np.ndarray:
        return all_patterns(len(self.region))

    def marginal(self, sub: Sequence[Vertex]) -> "ExactMarginal":
        sub = tuple(tuple(v) for v in sub)
        pos = [self.region.index(v) for v in sub]
        pats = self.patterns()[:, pos]
        bits = ((1 - pats) // 2).astype(np.int64)
        keys = (bits << np.arange(len(sub))).sum(axis=1)
        out = np.zeros(1 << len(sub))
        np.add.at(out, keys, self.probs)
        return ExactMarginal(sub, out)

    def mean(self, v: Vertex) -> float:
        i = self.region.index(tuple(v))
        return float(self.probs @ self.patterns()[:, i])

    def correlation(self, u: Vertex, v: Vertex) -> float:
        p = self.patterns()
        i, j = self.region.index(tuple(u)), self.region.index(tuple(v))
        return float(self.probs @ (p[:, i].astype(np.int64) * p[:, j]))


def _energy(J: ExplicitFinite, region: tuple, pats: np.ndarray) -> np.ndarray:
    pos = {v: i for i, v in enumerate(region)}
    e = np.zeros(len(pats))
    for B, c in J.edges.items():
        e += c * np.prod(pats[:, [pos[u] for u in B]], axis=1)
    return e


def exact_gibbs_finite_support(J: ExplicitFinite, region: Sequence[Vertex] | None = None,
                               max_sites: int = MAX_SITES, check: bool = True) -> ExactMarginal:
    """Gibbs probabilities ``∝ exp(sum_B J_B chi_B)`` on ``region`` by enumeration.

    ``region`` defaults to the support of ``J`` and must contain every
    hyperedge. With ``check`` the single-site conditionals are compared with
    ``1 / (1 + exp(-2 sum_{B∋v} J_B chi_B))`` at every site and pattern.
    """
    if not isinstance(J, ExplicitFinite):
        raise ModelError("enumeration needs an explicit finite interaction")
    region = tuple(sorted(J.support())) if region is None else tuple(tuple(v) for v in region)
    if len(region) > max_sites:
        raise RegionTooLarge(f"{len(region)} sites exceed the limit of {max_sites}")
    inside = set(region)
    for B in J.edges:
        if not inside.issuperset(B):
            raise ModelError(f"hyperedge {B} is not inside the region")
    pats = all_patterns(len(region))
    e = _energy(J, region, pats)
    w = np.exp(e - e.max())
    probs = w / w.sum()
    out = ExactMarginal(region, probs)
    if check:
        check_local_specification(J, out)
    return out


def check_local_specification(J: ExplicitFinite, m: ExactMarginal, tol: float = 1e-12) -> float:
    """Largest deviation of the enumerated conditionals from the local specification."""
    pats = m.patterns()
    n = len(m.region)
    worst = 0.0
    for i, v in enumerate(m.region):
        flipped = np.arange(1 << n) ^ (1 << i)
        cond = m.probs / (m.probs + m.probs[flipped])
        local = np.zeros(len(pats))
        for B, c in J.hyperedges_at(v):
            local += c * np.prod(pats[:, [m.region.index(u) for u in B]], axis=1)
        target = 1.0 / (1.0 + np.exp(-2.0 * local))
        worst = max(worst, float(np.max(np.abs(cond - target))))
    if worst > tol:
        raise AssertionError(f"local specification violated by {worst:.3g}")
    return worst


def verify_decomposition(J: Interaction, v: Vertex, seq: RegionSequence, trials: int = 100,
                         rng: np.random.Generator | None = None) -> float:
    """Largest ``|c_v(s) - M [lambda(0)/2 + sum_k lambda(k) p_k(s)]|`` over random ``s``.

    The identity splits the flip rate into the growth law and the update
    probabilities; it holds exactly, so the residual is rounding error only.
    """
    v = tuple(v)
    rng = rng if rng is not None else np.random.default_rng(0)
    lam = LambdaDistribution(J, seq)
    K = lam.support_size()
    sites = sorted({u for k in range(1, K + 1) for u in seq.increment(k)} | {v})
    worst = 0.0
    for _ in range(trials):
        spins = rng.choice([-1, 1], size=len(sites))
        sigma = dict(zip(sites, (int(s) for s in spins)))
        rate = J.flip_rate(v, sigma)
        terms = [lam.pmf(0) / 2.0]
        for k in range(1, K + 1):
            lk = lam.pmf(k)
            if lk:
                terms.append(lk * lam.update_prob(k, sigma))
        worst = max(worst, abs(rate - lam.M * math.fsum(terms)))
    return worst


@dataclass
class EmpiricalReport:
    n: int
    chi2: float
    dof: int
    p_value: float
    z_scores: list
    z_critical: float
    alpha: float
    passed: bool
    pooled_cells: int = 0
    notes: list = field(default_factory=list)

    def to_record(self) -> dict:
        return {"n": self.n, "chi2": self.chi2, "dof": self.dof, "p_value": self.p_value,
                "z_scores": self.z_scores, "z_critical": self.z_critical,
                "alpha": self.alpha, "passed": self.passed, "pooled_cells": self.pooled_cells}


def _pool(observed: np.ndarray, expected: np.ndarray, minimum: float = 5.0):
    order = np.argsort(expected, kind="stable")
    obs, exp_ = [], []
    acc_o = acc_e = 0.0
    pooled = 0
    for i in order:
        if expected[i] < minimum or acc_e and acc_e < minimum:
            acc_o += observed[i]
            acc_e += expected[i]
            pooled += 1
            continue
        obs.append(observed[i])
        exp_.append(expected[i])
    if pooled:
        if acc_e < minimum and exp_:
            # fold an undersized pool into the smallest regular cell
            obs[0] += acc_o
            exp_[0] += acc_e
        else:
            obs.append(acc_o)
            exp_.append(acc_e)
    return np.array(obs), np.array(exp_), pooled


def compare_empirical(samples: np.ndarray, oracle: ExactMarginal, alpha: float = 0.01) -> EmpiricalReport:
    """Chi-square goodness of fit over all patterns plus per-site mean z-scores.

    The level is split evenly: the chi-square test runs at ``alpha/2`` and the
    site z-scores at a Bonferroni level of ``alpha/2`` in total.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    samples = np.asarray(samples)
    if samples.ndim != 2 or samples.shape[1] != len(oracle.region):
        raise ValueError("samples must be an (n, |region|) array")
    n, m = samples.shape
    bits = ((1 - samples.astype(np.int64)) // 2)
    keys = (bits << np.arange(m)).sum(axis=1)
    observed = np.bincount(keys, minlength=1 << m).astype(float)
    expected = oracle.probs * n
    obs, exp_, pooled = _pool(observed, expected)
    if len(obs) >= 2:
        chi2 = float(((obs - exp_) ** 2 / exp_).sum())
        dof = len(obs) - 1
        p = float(stats.chi2.sf(chi2, dof))
    else:
        chi2, dof, p = 0.0, 0, 1.0
    pats = oracle.patterns().astype(float)
    means = oracle.probs @ pats
    z = []
    for i in range(m):
        var = 1.0 - means[i] ** 2
        emp = samples[:, i].mean()
        z.append(float((emp - means[i]) / math.sqrt(var / n)) if var > 0 else
                 (0.0 if emp == means[i] else math.inf))
    z_crit = float(stats.norm.isf(alpha / (4 * m)))
    passed = p >= alpha / 2 and all(abs(x) <= z_crit for x in z)
    return EmpiricalReport(n, chi2, dof, p, z, z_crit, alpha, passed, pooled)


def ising_1d_correlation(beta: float, r: int) -> float:
    """Infinite-volume ``E[s_0 s_r]`` of the nearest-neighbour chain from its transfer matrix."""
    T = np.array([[math.exp(beta), math.exp(-beta)], [math.exp(-beta), math.exp(beta)]])
    vals, vecs = np.linalg.eigh(T)
    top = np.argmax(vals)
    other = 1 - top
    sz = np.diag([1.0, -1.0])
    a = vecs[:, top] @ sz @ vecs[:, other]
    return float(a * a * (vals[other] / vals[top]) ** r)


def two_spin_agreement(beta: float) -> float:
    """``P(s_u = s_v)`` for a lone edge with coupling ``beta``."""
    return math.exp(beta) / (math.exp(beta) + math.exp(-beta))
