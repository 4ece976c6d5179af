import math

import numpy as np
import pytest

from oracles import action_trees, brute_force_optimal, policy_table, random_environment, tree_value, trajectories
from rationality import envsim
from rationality.contracts import Belief, Contract
from rationality.envsim import (
    Environment,
    HistoryRecord,
    Policy,
    Preference,
    best_action,
    choose_active,
    consistent,
    filter_states,
    horizon_for_tolerance,
    optimal_value,
    prefix_probability,
    value_of_policy,
)
from rationality.errors import DimensionError, InconsistentHistoryError, ParseError, PreconditionError


def constant_env(reward=1.0, discount=0.5, percept=0, actions=2, percepts=2):
    table = {(0, a): [(1.0, percept, reward, 0)] for a in range(actions)}
    return Environment.from_table("const", table, num_states=1, num_actions=actions,
                                  num_percepts=percepts, discount=discount)


def two_step_env():
    # realized rewards: "always 0" earns (1, 0), "always 1" earns (0, 0.5)
    table = {
        (0, 0): [(1.0, 0, 1.0, 1)], (0, 1): [(1.0, 0, 0.0, 2)],
        (1, 0): [(1.0, 0, 0.0, 3)], (1, 1): [(1.0, 0, 0.0, 3)],
        (2, 0): [(1.0, 0, 0.0, 3)], (2, 1): [(1.0, 0, 1.0, 3)],
        (3, 0): [(1.0, 0, 0.0, 3)], (3, 1): [(1.0, 0, 0.0, 3)],
    }
    return Environment.from_table("two", table, num_states=4, num_actions=2, num_percepts=1, discount=0.5)


def noisy_env():
    table = {(0, a): [(0.3, 0, 0.2, 0), (0.7, 1, 0.9, 0)] for a in range(2)}
    return Environment.from_table("noisy", table, num_states=1, num_actions=2, num_percepts=2)


class TestEnvironment:
    def test_validation(self):
        ok = {(0, 0): [(1.0, 0, 0.5, 0)]}
        with pytest.raises(PreconditionError):
            Environment.from_table("e", ok, num_states=1, num_actions=1, num_percepts=1, discount=1.0)
        with pytest.raises(PreconditionError):
            Environment.from_table("e", {(0, 0): [(0.6, 0, 0.5, 0)]}, num_states=1, num_actions=1, num_percepts=1)
        with pytest.raises(PreconditionError):
            Environment.from_table("e", {(0, 0): [(1.0, 0, 2.0, 0)]}, num_states=1, num_actions=1, num_percepts=1)
        with pytest.raises(PreconditionError):
            Environment.from_table("e", {}, num_states=1, num_actions=1, num_percepts=1)
        with pytest.raises(PreconditionError):
            Environment.from_table("has space", ok, num_states=1, num_actions=1, num_percepts=1)

    def test_envelope(self):
        env = constant_env(discount=0.5)
        assert env.total_bound() == 2.0
        assert env.tail_bound(3) == 0.25
        assert env.reward_at(1.0, 2) == 0.25


class TestHistory:
    def test_alternation(self):
        h = HistoryRecord().extend(1, 0).extend(0, 1)
        assert h.interleaved() == (1, 0, 0, 1) and len(h) == 2
        with pytest.raises(PreconditionError):
            HistoryRecord((0, 1), (0,))
        with pytest.raises(PreconditionError):
            h.extend(0, 0, 1.0)


class TestConsistency:
    def test_examples(self):
        env = constant_env()
        assert consistent(env, ((0, 1), (0, 0))) == 1
        assert consistent(env, ((0, 1), (0, 1))) == 0
        rng = np.random.default_rng(0)
        for _ in range(20):
            acts = rng.integers(0, 2, size=4)
            percepts = rng.integers(0, 2, size=4)
            assert consistent(noisy_env(), (acts, percepts)) == 1

    def test_out_of_range(self):
        with pytest.raises(PreconditionError):
            consistent(constant_env(), ((5,), (0,)))

    def test_prefix_probability(self):
        assert prefix_probability(noisy_env(), ((0, 1), (1, 0))) == pytest.approx(0.7 * 0.3)

    def test_filter_rejects_impossible(self):
        with pytest.raises(InconsistentHistoryError):
            filter_states(constant_env(), ((0,), (1,)))


class TestValues:
    def test_geometric(self):
        env = constant_env(discount=0.5)
        v = value_of_policy(env, Policy.constant(0, 20))
        assert v.value == pytest.approx(2.0 - 2.0**-19, abs=1e-15)
        assert v.tail_bound == 2.0**-19
        assert abs(v.value - 2.0) <= v.tail_bound

    def test_null_environment(self):
        env = constant_env(reward=0.0)
        for a in (0, 1):
            assert value_of_policy(env, Policy.constant(a, 5)).value == 0.0
        v, pi = optimal_value(env, H=4)
        assert v == 0.0 and pi(()) == 0

    def test_two_step(self):
        env = two_step_env()
        assert value_of_policy(env, Policy.constant(0, 2)).value == 1.0
        assert value_of_policy(env, Policy.constant(1, 2)).value == 0.5
        v, pi = optimal_value(env, H=2)
        assert v == 1.0 and pi(()) == 0 and pi((0, 0)) == 0

    def test_conditioned_on_history(self):
        env = two_step_env()
        h = HistoryRecord((1,), (0,))
        assert value_of_policy(env, Policy.constant(1, 1), 1, h).value == 0.5
        with pytest.raises(PreconditionError):
            value_of_policy(env, Policy.constant(1, 1), 0, h)
        with pytest.raises(InconsistentHistoryError):
            value_of_policy(constant_env(), Policy.constant(0, 1), 1, ((0,), (1,)))

    def test_single_action(self):
        rng = np.random.default_rng(1)
        env = random_environment(rng, num_actions=1, num_percepts=2, stochastic=True)
        v, _ = optimal_value(env, H=3)
        assert v == pytest.approx(value_of_policy(env, Policy.constant(0, 3)).value, abs=1e-15)

    def test_deterministic_rollout_sum(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            env = random_environment(rng, num_actions=3, num_percepts=3)
            acts = rng.integers(0, 3, size=4)
            pi = Policy.open_loop(acts)
            state, total = env.initial_state, 0.0
            for t, a in enumerate(acts):
                o = env.transitions[state][a][0]
                total += env.reward_at(o.reward, t)
                state = o.next_state
            assert value_of_policy(env, pi).value == pytest.approx(total, abs=1e-15)

    @pytest.mark.parametrize("stochastic", [False, True])
    def test_matches_brute_force(self, stochastic):
        rng = np.random.default_rng(3)
        for _ in range(10):
            env = random_environment(rng, num_actions=2, num_percepts=2, stochastic=stochastic)
            v, pi = optimal_value(env, H=3)
            assert v == pytest.approx(brute_force_optimal(env, 3), abs=1e-9)
            assert tree_value(env, policy_table(pi, [env], 3), 3) == pytest.approx(v, abs=1e-9)
            for tree in action_trees([env], 3, 2):
                assert value_of_policy(env, Policy(3, tree)).value <= v + 1e-12

    @pytest.mark.parametrize("stochastic, percepts", [(False, 2), (True, 1)])
    def test_truncation_soundness(self, stochastic, percepts):
        # H + 10 levels of expectimax: a single percept keeps the stochastic tree at 2**(H + 10)
        rng = np.random.default_rng(4)
        for _ in range(5):
            env = random_environment(rng, num_actions=2, num_percepts=percepts, stochastic=stochastic)
            for H in (1, 2, 3):
                short, _ = optimal_value(env, H=H)
                long, _ = optimal_value(env, H=H + 10)
                assert abs(long - short) <= env.tail_bound(H) + 1e-12

    def test_horizon_for_tolerance(self):
        H = horizon_for_tolerance(1.0, 0.5, 1e-3)
        assert 1.0 * 0.5**H / 0.5 <= 1e-3 < 1.0 * 0.5 ** (H - 1) / 0.5
        assert horizon_for_tolerance(0.0, 0.5, 1e-3) == 0
        with pytest.raises(PreconditionError):
            horizon_for_tolerance(1.0, 0.5, 0.0)

    def test_ties_go_to_lowest_action(self):
        env = constant_env()
        _, pi = optimal_value(env, H=3)
        assert all(a == 0 for a in pi.table.values())

    def test_sampling_matches_distribution(self):
        env = noisy_env()
        rng = np.random.default_rng(5)
        hits = sum(envsim.sample_step(env, 0, 0, rng).percept for _ in range(4000))
        assert abs(hits / 4000 - 0.7) < 0.03


class TestActiveChoice:
    def test_choose_active(self):
        p = Belief([0.5, 0.5])
        x = Contract([1.0, -1.0])
        assert choose_active(p, x, p, x) is Preference.EITHER
        assert choose_active(Belief([1, 0]), Contract([5, 0]), p, Contract([4, 4])) is Preference.FIRST
        z = Contract([0.0, 0.0])
        assert choose_active(p, z, Belief([0.2, 0.8]), z) is Preference.EITHER
        assert choose_active(p, Contract([0, 0]), p, Contract([1, 1])) is Preference.SECOND
        with pytest.raises(DimensionError):
            choose_active(p, Contract([1.0]), p, x)

    def test_best_action(self):
        b = Belief([0.5, 0.5])
        assert best_action([b, b], [Contract([1, 1]), Contract([2, 2])]) == 1
        assert best_action([b, b], [Contract([0.4, 0.4]), Contract([0.4, 0.4])]) == 0
        assert best_action([b] * 3, [Contract([0.1, 0.1]), Contract([0.7, 0.7]), Contract([0.3, 0.3])]) == 1
        with pytest.raises(PreconditionError):
            best_action([], [])

    def test_best_action_invariances(self):
        rng = np.random.default_rng(6)
        for _ in range(100):
            m, k = int(rng.integers(2, 5)), int(rng.integers(2, 5))
            b = Belief(rng.dirichlet(np.ones(m)))
            xs = [Contract(rng.uniform(-1, 1, m)) for _ in range(k)]
            base = best_action([b] * k, xs)
            shift = Contract.constant(float(rng.uniform(-5, 5)), m)
            assert best_action([b] * k, [x + shift for x in xs]) == base
            lam = float(rng.uniform(0.1, 10))
            assert best_action([b] * k, [lam * x for x in xs]) == base


class TestFileFormat:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(7)
        for stochastic in (False, True):
            env = random_environment(rng, num_actions=3, num_percepts=2, stochastic=stochastic, env_id="r")
            envsim.save(env, tmp_path / "r.env")
            assert envsim.load(tmp_path / "r.env") == env
            assert envsim.loads(envsim.dumps(env)) == env

    @pytest.mark.parametrize(
        "text, line",
        [
            ("id a\nstates 1\nactions 1\npercepts 1\nenvelope 1 0.5\nbogus 3\n", 6),
            ("id a\nstates 1\nactions 1\npercepts 1\nenvelope 1 0.5\nt 0 0 1.0 0 x 0\n", 6),
            ("id a\nstates 1\nactions 1\npercepts 1\nenvelope 1 0.5\nt 0 0 1.0 0\n", 6),
            ("id a\nstates 1\nactions 1\npercepts 1\nenvelope 1 0.5\nt 0 0 1.0 3 0.5 0\n", 6),
        ],
    )
    def test_errors_have_line_numbers(self, text, line):
        with pytest.raises(ParseError) as info:
            envsim.loads(text, path="x.env")
        assert info.value.line == line

    def test_missing_header(self):
        with pytest.raises(ParseError):
            envsim.loads("t 0 0 1.0 0 0.5 0\n")
        with pytest.raises(ParseError):
            envsim.loads("id a\nstates 1\nactions 1\npercepts 1\nt 0 0 1.0 0 0.5 0\n")

    def test_trajectory_oracle_sums_to_one(self):
        rng = np.random.default_rng(8)
        env = random_environment(rng, num_actions=2, num_percepts=2, stochastic=True)
        tree = next(iter(action_trees([env], 3, 2)))
        assert math.fsum(p for p, _, _ in trajectories(env, tree, 3)) == pytest.approx(1.0)
