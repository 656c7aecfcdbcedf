import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from instances import random_explicit, random_refinement_pair
from perfectsim.errors import (
    CenterMismatch,
    Property1Violation,
    Property2Violation,
    Property3Violation,
    TailNotBoundable,
)
from perfectsim.lattice import ExplicitFinite, PairGeometric, nearest_neighbour_ising
from perfectsim.optimize import ising_optimal_sequence
from perfectsim.sequences import (
    ExactSum,
    Interval,
    LambdaDistribution,
    RegionSequence,
    dominance_report,
    from_hyperedge_order,
    from_offsets,
    from_sets,
    is_less_refined,
    l1_balls,
    stochastically_dominates,
    validate_sequence,
)

V, U, W = (0,), (1,), (2,)
EDGE = ExplicitFinite(1, [([0, 1], 0.5)])
ZERO = ExplicitFinite(1, [])


class TestRegionSequence:
    def test_sets_and_steps(self):
        seq = from_sets(V, [{V}, {V, U}, {V, U, W}])
        assert seq.sets(5) == [frozenset({V}), frozenset({V, U}), frozenset({V, U, W})]
        assert seq.step_of(W) == 2 and seq.step_of((9,)) is None
        assert seq.size(2) == 3 and seq.length() == 2

    def test_empty_increment_rejected(self):
        with pytest.raises(Property2Violation):
            RegionSequence(V, [(U,), ()]).ensure(3)
        with pytest.raises(Property2Violation):
            validate_sequence(from_sets(V, [{V}, {V, U}, {V, U}]), EDGE)

    def test_overlapping_increment_rejected(self):
        with pytest.raises(Property2Violation):
            RegionSequence(V, [(U,), (U, W)]).ensure(2)
        with pytest.raises(Property2Violation):
            RegionSequence(V, [(V,)]).ensure(1)

    def test_l1_balls(self):
        seq = l1_balls((0, 0))
        assert [seq.size(k) for k in range(4)] == [1, 5, 13, 25]
        assert seq.covered_radius(3) == 3

    def test_translate(self):
        seq = from_offsets(V, [[(1,)], [(-1,), (2,)]])
        moved = seq.translate((5,))
        assert moved.increment(2) == ((4,), (7,))

    def test_hyperedge_order_skips_non_growing(self):
        seq = from_hyperedge_order(V, [[V, U], [U, V], [V, U, W]])
        assert seq.descriptor(5) == (((1,),), ((2,),))


class TestValidation:
    def test_ok(self):
        rep = validate_sequence(from_sets(V, [{V}, {V, U}, {V, U, W}]), EDGE)
        assert rep.ok and rep.property3 == "exact"

    def test_property1(self):
        with pytest.raises(Property1Violation):
            validate_sequence(from_sets(V, [{V, U}, {V, U, W}]), EDGE)

    def test_property3(self):
        with pytest.raises(Property3Violation):
            validate_sequence(from_sets(V, [{V}, {V, W}]), EDGE)

    def test_infinite_builtin_certified(self):
        J = PairGeometric(2, 0.1, 0.3)
        assert validate_sequence(l1_balls((0, 0)), J, 5).property3 == "certified by construction"
        assert validate_sequence(ising_optimal_sequence((0, 0), J), J, 5).ok

    def test_horizon(self):
        with pytest.raises(ValueError):
            validate_sequence(l1_balls(V), EDGE, 0)


class TestRefinement:
    def test_examples(self):
        b = from_sets(V, [{V}, {V, U}, {V, U, W}])
        assert is_less_refined(b, b)
        assert is_less_refined(from_sets(V, [{V}, {V, U, W}]), b)
        assert not is_less_refined(from_sets(V, [{V}, {V, U}]),
                                   from_sets(V, [{V}, {V, W}, {V, U, W}]))

    def test_center_mismatch(self):
        with pytest.raises(CenterMismatch):
            is_less_refined(l1_balls(V), l1_balls(U))


class TestLambda:
    def test_zero_interaction(self):
        lam = LambdaDistribution(ZERO, l1_balls(V))
        assert lam.pmf(0) == 1.0 and lam.pmf(3) == 0.0
        assert lam.sample_k(0.999) == 0
        assert lam.birth_death_mu() == Interval.point(-1.0)

    def test_single_edge(self):
        lam = LambdaDistribution(EDGE, from_sets(V, [{V}, {V, U}]))
        assert lam.pmf(0) == pytest.approx(math.exp(-1), abs=1e-15)
        assert lam.pmf(1) == pytest.approx(1 - math.exp(-1), abs=1e-15)
        assert lam.pmf(2) == 0.0
        assert lam.sample_k(0.2) == 0 and lam.sample_k(0.5) == 1
        assert lam.lambda_hat(1) == pytest.approx(1 - math.exp(-1))
        assert lam.mu_point() == pytest.approx(2 * (1 - math.exp(-1)) - 1, abs=1e-15)

    def test_lambda_hat_reindexing(self):
        J = ExplicitFinite(1, [([0, 1], 0.3), ([0, 2], 0.2)])
        lam = LambdaDistribution(J, from_sets(V, [{V}, {V, U, W}]))
        assert lam.lambda_hat(0) == lam.pmf(0)
        assert lam.lambda_hat(2) == lam.pmf(1)
        assert lam.lambda_hat(1) == 0.0

    def test_nn_ising_mu_closed_form(self):
        beta = 0.05
        J = nearest_neighbour_ising(1, beta)
        mu = LambdaDistribution(J, ising_optimal_sequence(V, J)).birth_death_mu()
        closed = 2 - math.exp(-beta) - 2 * math.exp(-4 * beta)
        assert mu.width == 0.0
        assert mu.lo == pytest.approx(closed, abs=1e-14)
        assert mu.lo == pytest.approx(-0.588691, abs=1e-6)

    def test_pair_geometric_mu_enclosure(self):
        J = PairGeometric(1, 0.05, 0.5)
        lam = LambdaDistribution(J, ising_optimal_sequence(V, J))
        mu = lam.birth_death_mu(1e-10)
        assert mu.width <= 1e-10
        # brute-force partial sum far into the tail lies inside the enclosure
        partial = math.fsum((k + 1) * lam.pmf(k) for k in range(1, 400)) - 1.0
        assert mu.contains(partial, 1e-12)

    def test_unboundable_tail(self):
        J = PairGeometric(1, 0.05, 0.5)
        seq = RegionSequence(V, ((u,) for u in ((k,) for k in range(1, 10**6))))
        with pytest.raises(TailNotBoundable):
            LambdaDistribution(J, seq).birth_death_mu()

    def test_update_probability_in_unit_interval(self):
        rng = np.random.default_rng(4)
        for _ in range(30):
            J = random_explicit(rng)
            v = min(J.support())
            lam = LambdaDistribution(J, l1_balls(v))
            K = lam.support_size()
            sites = sorted({u for k in range(1, K + 1) for u in lam.seq.increment(k)} | {v})
            for _ in range(5):
                sigma = {u: int(s) for u, s in zip(sites, rng.choice([-1, 1], len(sites)))}
                for k in range(K + 1):
                    assert 0.0 <= lam.update_prob(k, sigma) <= 1.0


class TestExactSum:
    def test_matches_fsum(self):
        rng = np.random.default_rng(0)
        xs = rng.standard_normal(1000) * 10.0 ** rng.integers(-10, 10, 1000)
        acc = ExactSum()
        for x in xs:
            acc.add(float(x))
        assert acc.value == math.fsum(xs)


class TestDominance:
    def test_equal_both_ways(self):
        a = LambdaDistribution(EDGE, l1_balls(V))
        b = LambdaDistribution(EDGE, l1_balls(V))
        rep = dominance_report(a, b, 10)
        assert rep.a_cdf_dominates and rep.b_cdf_dominates

    def test_direction(self):
        coarse = LambdaDistribution(nearest_neighbour_ising(1, 0.2), from_sets(V, [{V}, {V, U, (-1,)}]))
        fine = LambdaDistribution(nearest_neighbour_ising(1, 0.2), ising_optimal_sequence(V, nearest_neighbour_ising(1, 0.2)))
        assert stochastically_dominates(coarse, fine, 5)
        assert not stochastically_dominates(fine, coarse, 5)


@given(st.integers(0, 2**32 - 1))
def test_refinement_dominance_property(seed):
    rng = np.random.default_rng(seed)
    J = random_explicit(rng)
    v = sorted(J.support())[0]
    coarse, fine = random_refinement_pair(rng, J, v)
    assert is_less_refined(coarse, fine)
    la, lb = LambdaDistribution(J, coarse), LambdaDistribution(J, fine)
    assert stochastically_dominates(la, lb, fine.size(fine.exhaust(100)) + 1, slack=0.0)
    assert lb.birth_death_mu().hi <= la.birth_death_mu().lo + 1e-12


@given(st.integers(0, 2**32 - 1))
def test_cdf_telescoping_property(seed):
    rng = np.random.default_rng(seed)
    J = random_explicit(rng)
    v = sorted(J.support())[-1]
    lam = LambdaDistribution(J, l1_balls(v))
    K = lam.support_size()
    assert lam.cdf(0) == math.exp(-2 * J.total_strength(v))
    for n in range(1, K + 1):
        assert lam.cdf(n) == math.exp(-J.tail_strength(v, lam.seq.set_at(n)))
        assert lam.cdf(n) - lam.cdf(n - 1) == pytest.approx(lam.pmf(n), abs=1e-12)
    assert abs(math.fsum(lam.pmf(k) for k in range(K + 1)) - 1.0) <= 1e-12
