import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rationality.contracts import (
    Belief,
    BeliefDecisionMaker,
    Contract,
    Decision,
    always_accept,
    decide,
    sign_flipped_decision_maker,
)
from rationality.elicitation import (
    CountingOracle,
    cross_validate,
    default_query_budget,
    elicit_beliefs,
    separate_labeled,
)
from rationality.errors import DimensionError, IrrationalityError, PreconditionError, QueryBudgetError


class TestElicit:
    def test_third_two_thirds(self):
        b = elicit_beliefs(BeliefDecisionMaker(Belief([1 / 3, 2 / 3])), 2, tol=1e-6)
        assert np.max(np.abs(b.probs - [1 / 3, 2 / 3])) <= 1e-6

    def test_degenerate(self):
        assert elicit_beliefs(BeliefDecisionMaker(Belief([1.0, 0.0])), 2).probs.tolist() == [1.0, 0.0]

    def test_single_outcome(self):
        assert elicit_beliefs(always_accept, 1).probs.tolist() == [1.0]

    @settings(max_examples=60, deadline=None)
    @given(st.integers(2, 8), st.integers(0, 2**32 - 1))
    def test_round_trip(self, m, seed):
        p = np.random.default_rng(seed).dirichlet(np.ones(m))
        oracle = CountingOracle(BeliefDecisionMaker(Belief(p)))
        got = elicit_beliefs(oracle, m, tol=1e-6)
        assert np.max(np.abs(got.probs - p)) <= 1e-5
        assert oracle.queries <= 64 * m * math.log2(1e6)

    def test_always_accept_is_irrational(self):
        with pytest.raises(IrrationalityError) as info:
            elicit_beliefs(always_accept, 3)
        assert info.value.witness

    def test_sign_flipped_is_irrational(self):
        with pytest.raises(IrrationalityError) as info:
            elicit_beliefs(sign_flipped_decision_maker(Belief([0.5, 0.5])), 2)
        assert info.value.witness

    def test_negation_inconsistency_detected(self):
        rational = BeliefDecisionMaker(Belief([0.1, 0.9]))

        def dm(x):
            # accepts -e_i + t*e_r for small t, although it accepts e_i - t*e_r
            return Decision.ACCEPT if x.payoffs.sum() < -0.5 else rational(x)

        with pytest.raises(IrrationalityError) as info:
            elicit_beliefs(dm, 2)
        x, nx = info.value.witness
        assert nx == -x

    def test_budget(self):
        with pytest.raises(QueryBudgetError):
            elicit_beliefs(BeliefDecisionMaker(Belief([0.2, 0.3, 0.5])), 3, max_queries=3)
        assert default_query_budget(4, 1e-6) == math.ceil(64 * 4 * math.log2(1e6))

    def test_preconditions(self):
        with pytest.raises(PreconditionError):
            elicit_beliefs(always_accept, 0)
        with pytest.raises(PreconditionError):
            elicit_beliefs(always_accept, 2, tol=0.0)


class TestSeparate:
    def test_feasible_example(self):
        res = separate_labeled([Contract([2, -1])], [Contract([1, -2])])
        assert res.feasible
        p = res.belief.probs
        assert p @ [2, -1] >= -1e-9 and p @ [1, -2] <= 1e-9

    def test_boundary_contract_on_both_sides(self):
        res = separate_labeled([Contract([1, -1])], [Contract([1, -1])])
        assert res.feasible
        assert res.belief.probs == pytest.approx([0.5, 0.5], abs=1e-9)

    def test_all_negative_accepted_is_infeasible(self):
        res = separate_labeled([Contract([-1, -1])])
        assert not res.feasible and res.belief is None
        u = res.certificate
        assert np.all(u >= 0) and u.sum() == pytest.approx(1.0)
        assert np.all(np.array([[-1.0, -1.0]]).T @ u < 0)

    def test_certificate_rechecks(self):
        acc = [Contract([1.0, -2.0]), Contract([-2.0, 1.0])]
        res = separate_labeled(acc, [Contract([1.0, 1.0])])
        assert not res.feasible
        combined = res.certificate[0] * acc[0].payoffs + res.certificate[1] * acc[1].payoffs
        combined = combined - res.certificate[2] * np.array([1.0, 1.0])
        assert np.allclose(combined, res.combined) and np.all(combined < 0)

    def test_empty(self):
        res = separate_labeled([], [], alphabet_size=3)
        assert res.feasible and res.belief.probs.tolist() == pytest.approx([1 / 3] * 3)
        with pytest.raises(PreconditionError):
            separate_labeled([], [])

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            separate_labeled([Contract([1.0])], [Contract([1.0, 2.0])])
        with pytest.raises(DimensionError):
            separate_labeled([Contract([1.0, 0.0])], alphabet_size=3)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 12), st.integers(0, 2**32 - 1))
    def test_labels_from_a_belief_are_feasible(self, m, seed):
        rng = np.random.default_rng(seed)
        b = Belief(rng.dirichlet(np.ones(m)))
        acc, rej = [], []
        for row in rng.uniform(-1, 1, size=(30, m)):
            x = Contract(row)
            d = decide(b, x)
            (acc if d.acceptable else rej).append(x)
        res = separate_labeled(acc, rej, alphabet_size=m)
        assert res.feasible
        p = res.belief.probs
        assert all(p @ x.payoffs >= -1e-9 for x in acc)
        assert all(p @ y.payoffs <= 1e-9 for y in rej)


def disagreement_probability(p1: float, q1: float) -> float:
    """Mass of the square [-1,1]^2 where the signs of p.x and q.x differ, by quadrature.

    For fixed x_1 the two decisions disagree for x_2 between the two zero
    lines; that interval is clipped to [-1, 1] and integrated with the
    midpoint rule.
    """
    n = 200_000
    x1 = -1 + (np.arange(n) + 0.5) * (2 / n)
    a = -p1 * x1 / (1 - p1)
    b = -q1 * x1 / (1 - q1)
    lo = np.clip(np.minimum(a, b), -1, 1)
    hi = np.clip(np.maximum(a, b), -1, 1)
    return float(np.sum(hi - lo) * (2 / n) / 4)


class TestCrossValidate:
    def test_self_agreement(self):
        p = Belief([0.2, 0.5, 0.3])
        assert cross_validate(BeliefDecisionMaker(p), p, 500) == 1.0

    def test_disagreement_matches_geometry(self):
        expected = 1 - disagreement_probability(0.3, 0.7)
        assert expected == pytest.approx(5 / 7, abs=1e-6)
        rate = cross_validate(BeliefDecisionMaker(Belief([0.3, 0.7])), Belief([0.7, 0.3]), 10_000, seed=4)
        assert rate < 1.0
        assert abs(rate - expected) <= 4 * math.sqrt(expected * (1 - expected) / 10_000)

    def test_either_counts_as_agreement(self):
        assert cross_validate(lambda x: Decision.EITHER, Belief([0.5, 0.5]), 100) == 1.0

    def test_n_must_be_positive(self):
        with pytest.raises(PreconditionError):
            cross_validate(always_accept, Belief([1.0]), 0)

    def test_seeded(self):
        dm = BeliefDecisionMaker(Belief([0.3, 0.7]))
        assert cross_validate(dm, Belief([0.6, 0.4]), 300, seed=9) == cross_validate(dm, Belief([0.6, 0.4]), 300, seed=9)
