"""Throughput of the compiled kernel against its pure-Python twin and the reference engine.

Usage::

    python benchmarks/bench_kernel.py [--replicas 2000] [--repeat 3]

All three engines consume the same random streams, so the script also checks
that they return identical spins before reporting timings.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from perfectsim import kernel
from perfectsim.lattice import ExplicitFinite, PairGeometric, nearest_neighbour_ising
from perfectsim.sampler import ModelContext, perfect_sample, replica_rng
from perfectsim.tables import build_tables

CASES = [
    ("1D nearest neighbour, beta 0.05", nearest_neighbour_ising(1, 0.05), "ising_optimal",
     [(0,), (1,), (2,)]),
    ("2D nearest neighbour, beta 0.03", nearest_neighbour_ising(2, 0.03), "ising_optimal",
     [(0, 0), (1, 0), (0, 1), (1, 1)]),
    ("1D geometric, beta 0.02 gamma 0.5", PairGeometric(1, 0.02, 0.5), "ising_optimal",
     [(0,), (1,)]),
    ("single edge, J 0.3", ExplicitFinite(1, [([0, 1], 0.3)]), "ising_optimal", [(0,), (1,)]),
    ("2D nearest neighbour, 10x10 window", nearest_neighbour_ising(2, 0.03), "ising_optimal",
     [(x, y) for x in range(10) for y in range(10)]),
]


def _streams(replicas):
    return [replica_rng(0, i) for i in range(replicas)]


def _kernel_run(t, window, rngs, backend):
    out = np.empty((len(rngs), len(window)), dtype=np.int8)
    for i, rng in enumerate(rngs):
        spins, *_ = kernel.sample(t, window, rng, 10**7, backend=backend)
        out[i] = spins
    return out


def _reference_run(ctx, window, rngs):
    res = [perfect_sample(window, ctx, rng=rng, engine="reference") for rng in rngs]
    return np.array([r.window_spins(window) for r in res], dtype=np.int8)


def _best(fn, replicas, repeat):
    """Best wall time of ``fn(rngs)``; stream construction is not timed."""
    times, result = [], None
    for _ in range(repeat):
        rngs = _streams(replicas)
        t0 = time.perf_counter()
        result = fn(rngs)
        times.append(time.perf_counter() - t0)
    return min(times), result


def main(argv=None) -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--replicas", type=int, default=2000,
                   help="replicas for one-site windows; scaled down by window size")
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args(argv)

    print(f"default backend: {kernel.BACKEND}; about {args.replicas} site draws per model, "
          f"best of {args.repeat}")
    header = f"{'model':36} {'engine':10} {'seconds':>9} {'replicas/s':>11} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for name, J, policy, window in CASES:
        ctx = ModelContext(J, policy)
        t = build_tables(J, policy)
        # large windows get fewer replicas
        replicas = max(args.replicas // len(window), 10)
        engines = [("reference", lambda r: _reference_run(ctx, window, r)),
                   ("python", lambda r: _kernel_run(t, window, r, "python"))]
        if kernel.BACKEND == "compiled":
            engines.append(("compiled", lambda r: _kernel_run(t, window, r, "compiled")))
        rows, outputs = [], []
        for label, fn in engines:
            secs, res = _best(fn, replicas, args.repeat)
            rows.append((label, secs))
            outputs.append(res)
        for res in outputs[1:]:
            if not np.array_equal(res, outputs[0]):
                raise SystemExit(f"{name}: engines disagree")
        base = rows[0][1]
        for label, secs in rows:
            print(f"{name:36} {label:10} {secs:9.3f} {replicas / secs:11.0f} "
                  f"{base / secs:7.1f}x")


if __name__ == "__main__":
    main()
