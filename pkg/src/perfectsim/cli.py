"""Command-line front end.

Every subcommand writes JSON-lines records (each with ``"schema": 1``) to
standard output and a short human summary to standard error. Exit codes:
0 success, 2 configuration error, 3 step limit exceeded, 4 a required
condition failed, 5 a validation test failed.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .errors import (
    InfiniteExceptionalRegion,
    ModelError,
    PerfectSimError,
    StepLimitExceeded,
)
from .extinction import check_hypotheses, galton_watson, simulate
from .modelio import (
    _load,
    extinction_spec_from_dict,
    interaction_from_dict,
    parse_vertex_list,
    policy_from_value,
)
from .optimize import (
    brute_force_min,
    check_H1,
    check_H2,
    mu_ising_closed_form,
    policy_name,
    sequence_for,
    upsilon_refine,
)
from .sampler import DEFAULT_MAX_STEPS, ModelContext, replica_rng, sample_replicas, spin_matrix
from .sequences import LambdaDistribution

SCHEMA = 1
EXIT_OK, EXIT_CONFIG, EXIT_STEPS, EXIT_CONDITION, EXIT_VALIDATION = 0, 2, 3, 4, 5
PARALLEL_MIN_REPLICAS = 2000


class Output:
    def __init__(self, out=None, err=None):
        self.out = out or sys.stdout
        self.err = err or sys.stderr

    def record(self, kind: str, **fields) -> None:
        rec = {"schema": SCHEMA, "type": kind, **fields}
        self.out.write(json.dumps(rec, separators=(",", ":")) + "\n")

    def say(self, msg: str) -> None:
        self.err.write(msg + "\n")


def _model(args):
    doc = _load(args.model)
    J = interaction_from_dict(doc)
    policy = policy_from_value(args.seq if args.seq else doc.get("sequence"), J.dim)
    return doc, J, policy


def _window(args, J) -> list:
    if args.window is None:
        return [(0,) * J.dim]
    return parse_vertex_list(args.window, J.dim)


def _vertex(args, J):
    if getattr(args, "vertex", None) is None:
        return (0,) * J.dim
    (v,) = parse_vertex_list(args.vertex, J.dim)
    return v


def _default_threads() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


# ---------------------------------------------------------------------------
# sample

def _replica_block(doc, policy, window, seed, start, count, max_steps):
    J = interaction_from_dict(doc)
    res = sample_replicas(window, ModelContext(J, policy), seed=seed, replicas=count,
                          max_steps=max_steps, start=start)
    return [(r.window_spins(window), r.n_stop, r.max_set_size, r.visited) for r in res]


def _run_replicas(doc, policy, window, seed, replicas, max_steps, threads):
    """Replica results in index order, computed in blocks across processes."""
    if threads <= 1 or replicas < PARALLEL_MIN_REPLICAS:
        yield from _replica_block(doc, policy, window, seed, 0, replicas, max_steps)
        return
    block = math.ceil(replicas / (threads * 4))
    starts = range(0, replicas, block)
    with ProcessPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(_replica_block, doc, policy, window, seed, s,
                               min(block, replicas - s), max_steps) for s in starts]
        for f in futures:
            yield from f.result()


def cmd_sample(args, out: Output) -> int:
    doc, J, policy = _model(args)
    window = _window(args, J)
    if args.require:
        rc = _require(args, J, policy, out)
        if rc:
            return rc
    threads = args.threads or _default_threads()
    totals = np.zeros(len(window))
    steps = []
    for i, (spins, n, size, visited) in enumerate(
            _run_replicas(doc, policy, window, args.seed, args.replicas, args.max_steps, threads)):
        out.record("replica", replica=i, seed=args.seed, window=[list(v) for v in window],
                   spins=spins, n_stop=n, max_set_size=size, visited=visited)
        totals += spins
        steps.append(n)
    mean = (totals / max(args.replicas, 1)).tolist()
    out.record("summary", command="sample", replicas=args.replicas, seed=args.seed,
               sequence=policy_name(policy), mean_spin=mean,
               mean_n_stop=float(np.mean(steps)) if steps else 0.0,
               max_n_stop=int(max(steps)) if steps else 0)
    out.say(f"sampled {args.replicas} replicas on {len(window)} sites "
            f"(mean backward steps {np.mean(steps) if steps else 0:.2f})")
    return EXIT_OK


# ---------------------------------------------------------------------------
# mu / optimize-seq / check

def cmd_mu(args, out: Output) -> int:
    _, J, policy = _model(args)
    v = _vertex(args, J)
    lam = LambdaDistribution(J, sequence_for(J, v, policy))
    mu = lam.birth_death_mu(args.tolerance)
    fields = {"vertex": list(v), "sequence": policy_name(policy), "mu": mu.to_list(),
              "mass": lam.M}
    if policy == "ising_optimal" and J.pairwise:
        fields["mu_closed_form"] = mu_ising_closed_form(v, J, args.tolerance).to_list()
    out.record("mu", **fields)
    out.say(f"mu at {v} with {policy_name(policy)}: {mu}")
    return EXIT_OK


def cmd_optimize(args, out: Output) -> int:
    _, J, policy = _model(args)
    v = _vertex(args, J)
    if args.method == "ising_optimal":
        seq = sequence_for(J, v, "ising_optimal")
        lam = LambdaDistribution(J, seq)
        mu = lam.birth_death_mu(args.tolerance)
        steps = [s for s in range(1, args.steps + 1) if seq.has_step(s)]
        incs = [[list(np.subtract(u, v)) for u in seq.increment(s)] for s in steps]
        out.record("optimize", center=list(v), method="ising_optimal", best_mu=mu.to_list(),
                   increments=[[[int(c) for c in o] for o in inc] for inc in incs],
                   complete=seq.length() is not None and seq.length() <= args.steps)
        out.say(f"ising-optimal sequence at {v}: mu = {mu}")
        return EXIT_OK
    if args.method == "brute_force":
        res = brute_force_min(v, J, cap=args.cap)
    else:
        base = sequence_for(J, v, policy)
        res = upsilon_refine(base, args.N, J, cap=args.cap, tolerance=args.tolerance)
    out.record("optimize", **res.to_record())
    out.say(f"{res.method}: best mu {res.best_mu} over {res.candidates_evaluated} candidates, "
            f"{len(res.argmin_sequences)} minimiser(s)")
    return EXIT_OK


def _require(args, J, policy, out: Output) -> int:
    rep = check_H1(J, args.tolerance) if args.require == "h1" else check_H2(J, policy, args.tolerance)
    if not rep.holds:
        out.record("check", **rep.to_record())
        out.say(f"{rep.condition} does not hold (witness {rep.witness_value}); refusing to run")
        return EXIT_CONDITION
    return EXIT_OK


def cmd_check(args, out: Output) -> int:
    _, J, policy = _model(args)
    reports = {"h1": check_H1(J, args.tolerance), "h2": check_H2(J, policy, args.tolerance)}
    for rep in reports.values():
        out.record("check", **rep.to_record())
        out.say(f"{rep.condition}: {'holds' if rep.holds else 'fails'} "
                f"(witness {rep.witness_value}, {rep.evaluation_vertex_class})")
    if args.require and not reports[args.require].holds:
        return EXIT_CONDITION
    return EXIT_OK


# ---------------------------------------------------------------------------
# extinct

def cmd_extinct(args, out: Output) -> int:
    doc = _load(args.model)
    spec = extinction_spec_from_dict(doc)
    times = []
    extinct = 0
    if args.generations is not None:
        if "galton_watson" not in doc:
            raise ModelError("--generations needs a galton_watson spec")
        gw = doc["galton_watson"]
        for i in range(args.replicas):
            tr = galton_watson([float(p) for p in gw["offspring"]], args.generations,
                               replica_rng(args.seed, i), int(gw.get("initial", 1)))
            out.record("run", run=i, extinct=tr.extinct, generations=tr.generations,
                       final_size=tr.sizes[-1])
            if tr.extinct:
                extinct += 1
                times.append(tr.generations)
    else:
        for i in range(args.replicas):
            res = simulate(spec, replica_rng(args.seed, i), args.max_steps)
            out.record("run", run=i, **res.to_record())
            if res.extinct:
                extinct += 1
                times.append(res.steps)
    summary = {"runs": args.replicas, "seed": args.seed,
               "extinction_fraction": extinct / args.replicas if args.replicas else 0.0,
               "mean_time_extinct": float(np.mean(times)) if times else None}
    if spec.classes and spec.resolver is None:
        try:
            summary["hypotheses"] = check_hypotheses(spec, args.delta).to_record()
        except InfiniteExceptionalRegion as exc:
            summary["hypotheses"] = {"error": str(exc)}
    out.record("summary", command="extinct", **summary)
    out.say(f"{extinct}/{args.replicas} runs extinct")
    return EXIT_OK


# ---------------------------------------------------------------------------
# validate

def cmd_validate(args, out: Output) -> int:
    from .lattice import ExplicitFinite
    from .oracle import compare_empirical, exact_gibbs_finite_support

    _, J, policy = _model(args)
    if not isinstance(J, ExplicitFinite):
        raise ModelError("validate needs an explicit finite model")
    region = None if args.window is None else parse_vertex_list(args.window, J.dim)
    oracle = exact_gibbs_finite_support(J, region)
    samples = spin_matrix(oracle.region, J, policy, seed=args.seed, replicas=args.replicas,
                          max_steps=args.max_steps)
    rep = compare_empirical(samples, oracle, args.alpha)
    out.record("validate", region=[list(v) for v in oracle.region], seed=args.seed,
               sequence=policy_name(policy), **rep.to_record())
    out.say(f"chi2 = {rep.chi2:.3f} on {rep.dof} dof, p = {rep.p_value:.4f}; "
            f"max |z| = {max(abs(z) for z in rep.z_scores):.2f}: "
            f"{'pass' if rep.passed else 'FAIL'} at alpha {rep.alpha}")
    return EXIT_OK if rep.passed else EXIT_VALIDATION


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="perfectsim", description="Perfect sampling of spin systems.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, model_help="model file (YAML or JSON)"):
        sp.add_argument("--model", required=True, help=model_help)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--tolerance", type=float, default=1e-10)
        sp.add_argument("--seq", default=None,
                        help="sequence policy: l1_balls, ising_optimal or brute_force")
        sp.add_argument("--require", choices=("h1", "h2"), default=None)

    s = sub.add_parser("sample", help="perfect samples on a window")
    common(s)
    s.add_argument("--window", default=None, help='e.g. "0,1" or "0:0,1:0"')
    s.add_argument("--replicas", type=int, default=1)
    s.add_argument("--max-steps", type=int, default=DEFAULT_MAX_STEPS)
    s.add_argument("--threads", type=int, default=None)
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("mu", help="birth-death expectation at a vertex")
    common(s)
    s.add_argument("--vertex", default=None)
    s.set_defaults(func=cmd_mu)

    s = sub.add_parser("optimize-seq", help="search for a region sequence minimising mu")
    common(s)
    s.add_argument("--vertex", default=None)
    s.add_argument("--method", choices=("ising_optimal", "brute_force", "upsilon"),
                   default="ising_optimal")
    s.add_argument("--cap", type=int, default=8)
    s.add_argument("--N", type=int, default=1)
    s.add_argument("--steps", type=int, default=10)
    s.set_defaults(func=cmd_optimize)

    s = sub.add_parser("check", help="applicability conditions H1 and H2")
    common(s)
    s.set_defaults(func=cmd_check)

    s = sub.add_parser("extinct", help="extinction experiments")
    s.add_argument("--model", "--spec", dest="model", required=True, help="extinction spec file")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--replicas", "--runs", dest="replicas", type=int, default=100)
    s.add_argument("--max-steps", type=int, default=1_000_000)
    s.add_argument("--generations", type=int, default=None,
                   help="simulate a galton_watson spec generation by generation")
    s.add_argument("--delta", type=float, default=0.05)
    s.set_defaults(func=cmd_extinct)

    s = sub.add_parser("validate", help="compare samples with the exact oracle")
    common(s)
    s.add_argument("--window", default=None, help="region; defaults to the model support")
    s.add_argument("--replicas", type=int, default=100_000)
    s.add_argument("--max-steps", type=int, default=DEFAULT_MAX_STEPS)
    s.add_argument("--alpha", type=float, default=0.01)
    s.set_defaults(func=cmd_validate)
    return p


def main(argv=None, stdout=None, stderr=None) -> int:
    args = build_parser().parse_args(argv)
    out = Output(stdout, stderr)
    try:
        return args.func(args, out)
    except StepLimitExceeded as exc:
        out.record("error", error="StepLimitExceeded", message=str(exc))
        out.say(f"step limit exceeded: {exc}")
        return EXIT_STEPS
    except (PerfectSimError, ValueError, OSError) as exc:
        out.say(f"error: {exc}")
        return EXIT_CONFIG


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
