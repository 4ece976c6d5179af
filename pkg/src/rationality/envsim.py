"""Reactive environments, action trees and expectimax planning.

Environments are finite-state machines. In state ``s`` the agent picks an
action ``a``; the machine then draws an outcome ``(percept, base_reward,
next_state)`` from a finite table. The reward actually paid at step ``t``
(counting from 0) is ``base_reward * gamma**t`` with ``0 <= base_reward <= c``.
Any policy therefore collects at most ``c / (1 - gamma)`` in total, and the
rewards after step ``t`` add up to at most ``c * gamma**t / (1 - gamma)``.

The agent only sees actions and percepts. When the machine is stochastic the
hidden state is tracked as a distribution ("state belief") filtered on the
observed history.

A policy (action tree) maps the interaction history since planning started,
flattened as ``(a_1, j_1, ..., a_t, j_t)``, to the next action.

Environment file format (``.env``), one directive per line, ``#`` comments::

    id two_step
    states 3
    actions 2
    percepts 1
    initial 0
    envelope 1.0 0.5          # c gamma
    kind deterministic        # optional, checked against the table
    # t <state> <action> <prob> <percept> <base_reward> <next_state>
    t 0 0 1.0 0 1.0 2
    ...

Every ``(state, action)`` pair needs at least one ``t`` line and its
probabilities must sum to one.
"""

from __future__ import annotations

import enum
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .contracts import DEFAULT_TOL, as_belief, as_contract, expectation
from .errors import (
    DimensionError,
    InconsistentHistoryError,
    InterfaceMismatchError,
    ParseError,
    PreconditionError,
)

__all__ = [
    "Outcome",
    "Environment",
    "HistoryRecord",
    "Policy",
    "PolicyValue",
    "Preference",
    "consistent",
    "prefix_probability",
    "filter_states",
    "value_of_policy",
    "optimal_value",
    "expectimax",
    "evaluate_policy",
    "choose_active",
    "best_action",
    "horizon_for_tolerance",
    "sample_step",
    "dumps",
    "loads",
    "save",
    "load",
]

PROB_TOL = 1e-12
# Relative margin an action must win by to displace a lower-indexed one.
TIE_TOL = 1e-12


class Outcome(NamedTuple):
    prob: float
    percept: int
    reward: float
    next_state: int


@dataclass(frozen=True)
class Environment:
    """Finite-state reactive environment with a ``(c, gamma)`` reward envelope.

    ``transitions[s][a]`` is the tuple of outcomes for action ``a`` in state
    ``s``. ``reward_scale`` is ``c`` and ``discount`` is ``gamma``.
    """

    id: str
    num_states: int
    num_actions: int
    num_percepts: int
    transitions: tuple
    reward_scale: float = 1.0
    discount: float = 0.5
    initial_state: int = 0

    def __post_init__(self):
        if not self.id or any(ch.isspace() for ch in self.id):
            raise PreconditionError(f"environment id must be a non-empty token, got {self.id!r}")
        for name in ("num_states", "num_actions", "num_percepts"):
            if getattr(self, name) < 1:
                raise PreconditionError(f"{name} must be positive")
        if not 0.0 < self.discount < 1.0:
            raise PreconditionError("discount must lie in (0, 1) so total reward stays finite")
        if not (math.isfinite(self.reward_scale) and self.reward_scale >= 0):
            raise PreconditionError("reward scale c must be finite and non-negative")
        if not 0 <= self.initial_state < self.num_states:
            raise PreconditionError("initial state out of range")
        table = tuple(tuple(tuple(Outcome(*o) for o in cell) for cell in row) for row in self.transitions)
        if len(table) != self.num_states or any(len(row) != self.num_actions for row in table):
            raise DimensionError("transition table must be indexed [state][action]")
        for s, row in enumerate(table):
            for a, cell in enumerate(row):
                if not cell:
                    raise PreconditionError(f"no outcomes for state {s}, action {a}")
                for o in cell:
                    if not 0 < o.prob <= 1:
                        raise PreconditionError(f"outcome probability {o.prob} for ({s}, {a}) not in (0, 1]")
                    if not 0 <= o.percept < self.num_percepts:
                        raise PreconditionError(f"percept {o.percept} for ({s}, {a}) out of range")
                    if not 0 <= o.next_state < self.num_states:
                        raise PreconditionError(f"next state {o.next_state} for ({s}, {a}) out of range")
                    if not 0 <= o.reward <= self.reward_scale:
                        raise PreconditionError(
                            f"base reward {o.reward} for ({s}, {a}) outside [0, {self.reward_scale}]"
                        )
                total = math.fsum(o.prob for o in cell)
                if abs(total - 1.0) > PROB_TOL:
                    raise PreconditionError(f"outcome probabilities for ({s}, {a}) sum to {total!r}")
        object.__setattr__(self, "transitions", table)

    @classmethod
    def from_table(
        cls,
        id: str,
        table: Mapping[tuple[int, int], Iterable],
        *,
        num_states: int,
        num_actions: int,
        num_percepts: int,
        reward_scale: float = 1.0,
        discount: float = 0.5,
        initial_state: int = 0,
    ) -> Environment:
        """Build from ``{(state, action): [(prob, percept, reward, next_state), ...]}``."""
        rows = [[tuple(table.get((s, a), ())) for a in range(num_actions)] for s in range(num_states)]
        return cls(id, num_states, num_actions, num_percepts, rows, reward_scale, discount, initial_state)

    @property
    def deterministic(self) -> bool:
        return all(len(cell) == 1 for row in self.transitions for cell in row)

    @property
    def kind(self) -> str:
        return "deterministic" if self.deterministic else "stochastic"

    def reward_at(self, base: float, step: int) -> float:
        return base * self.discount**step

    def tail_bound(self, step: int) -> float:
        """Largest total reward any policy can still collect from ``step`` on."""
        return self.reward_scale * self.discount**step / (1.0 - self.discount)

    def total_bound(self) -> float:
        return self.tail_bound(0)


@dataclass(frozen=True)
class HistoryRecord:
    """Alternating actions and percepts, with the rewards received."""

    actions: tuple = ()
    percepts: tuple = ()
    rewards: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "actions", tuple(int(a) for a in self.actions))
        object.__setattr__(self, "percepts", tuple(int(j) for j in self.percepts))
        object.__setattr__(self, "rewards", tuple(float(r) for r in self.rewards))
        if len(self.actions) != len(self.percepts):
            raise PreconditionError("history needs one percept per action")
        if self.rewards and len(self.rewards) != len(self.actions):
            raise PreconditionError("history rewards must be empty or one per step")

    def __len__(self) -> int:
        return len(self.actions)

    def extend(self, action: int, percept: int, reward: float | None = None) -> HistoryRecord:
        rewards = self.rewards
        if reward is not None:
            if len(rewards) != len(self.actions):
                raise PreconditionError("cannot mix rewarded and unrewarded steps")
            rewards = rewards + (reward,)
        elif rewards:
            raise PreconditionError("cannot mix rewarded and unrewarded steps")
        return HistoryRecord(self.actions + (action,), self.percepts + (percept,), rewards)

    def interleaved(self) -> tuple[int, ...]:
        return tuple(x for pair in zip(self.actions, self.percepts) for x in pair)

    def steps(self) -> Iterable[tuple[int, int]]:
        return zip(self.actions, self.percepts)


def _as_history(h) -> HistoryRecord:
    if h is None:
        return HistoryRecord()
    return h if isinstance(h, HistoryRecord) else HistoryRecord(*h)


@dataclass(frozen=True)
class Policy:
    """Action tree over histories relative to where planning started.

    Lookup order: explicit ``table`` entry, then ``rule(history)`` if given,
    then ``default``. This keeps the tree total on every history.
    """

    horizon: int
    table: Mapping[tuple, int] = field(default_factory=dict)
    default: int = 0
    rule: Callable[[tuple], int] | None = None

    def action(self, history: Sequence[int] = ()) -> int:
        key = tuple(history)
        if key in self.table:
            return self.table[key]
        if self.rule is not None:
            return self.rule(key)
        return self.default

    __call__ = action

    @classmethod
    def constant(cls, action: int, horizon: int) -> Policy:
        return cls(horizon, {}, action)

    @classmethod
    def open_loop(cls, actions: Sequence[int]) -> Policy:
        """Play ``actions`` in order whatever is observed."""
        seq = tuple(actions)
        return cls(len(seq), {}, 0, lambda key: seq[len(key) // 2])


class PolicyValue(NamedTuple):
    """Expected reward over the horizon and a bound on everything after it."""

    value: float
    tail_bound: float


# -- filtering ---------------------------------------------------------------


def _check_step(env: Environment, action: int, percept: int) -> None:
    if not 0 <= action < env.num_actions:
        raise PreconditionError(f"action {action} out of range for {env.id}")
    if not 0 <= percept < env.num_percepts:
        raise PreconditionError(f"percept {percept} out of range for {env.id}")


def advance_states(env: Environment, states: Mapping[int, float], action: int, percept: int) -> dict[int, float]:
    """One filtering step; weights are unnormalized joint probabilities."""
    _check_step(env, action, percept)
    nxt: dict[int, float] = defaultdict(float)
    for s, w in states.items():
        for o in env.transitions[s][action]:
            if o.percept == percept:
                nxt[o.next_state] += w * o.prob
    return dict(nxt)


def _forward(env: Environment, h: HistoryRecord) -> dict[int, float]:
    states = {env.initial_state: 1.0}
    for a, j in h.steps():
        states = advance_states(env, states, a, j)
    return states


def prefix_probability(env: Environment, h) -> float:
    """Probability that ``env`` emits the history's percepts given its actions."""
    return math.fsum(_forward(env, _as_history(h)).values())


def consistent(env: Environment, h) -> int:
    """1 if ``env`` could have produced the percepts in ``h``, else 0."""
    return int(prefix_probability(env, h) > 0.0)


def filter_states(env: Environment, h) -> dict[int, float]:
    """Normalized distribution over hidden states after history ``h``."""
    h = _as_history(h)
    states = _forward(env, h)
    total = math.fsum(states.values())
    if total <= 0:
        raise InconsistentHistoryError(f"history is impossible in environment {env.id}")
    return {s: w / total for s, w in sorted(states.items())}


# -- expectimax core -----------------------------------------------------------
#
# A "component" is (environment, weight, state belief). Values are weighted
# sums over components, so one routine serves single environments and
# mixtures alike. Belief entries are keyed by (component index, state).


def _components_belief(components) -> tuple[list[Environment], dict[tuple[int, int], float]]:
    envs: list[Environment] = []
    belief: dict[tuple[int, int], float] = {}
    for idx, (env, weight, states) in enumerate(components):
        envs.append(env)
        for s, p in states.items():
            if weight * p > 0:
                belief[(idx, s)] = weight * p
    if envs:
        a0, j0 = envs[0].num_actions, envs[0].num_percepts
        if any(e.num_actions != a0 or e.num_percepts != j0 for e in envs):
            raise InterfaceMismatchError("components disagree on action/percept alphabets")
    return envs, belief


def _branch(envs, belief, step: int, action: int):
    """Immediate weighted reward and per-percept child beliefs for one action."""
    reward = 0.0
    children: dict[int, dict[tuple[int, int], float]] = {}
    for (idx, s), w in belief.items():
        env = envs[idx]
        scale = env.discount**step
        for o in env.transitions[s][action]:
            ww = w * o.prob
            reward += ww * o.reward * scale
            child = children.setdefault(o.percept, {})
            key = (idx, o.next_state)
            child[key] = child.get(key, 0.0) + ww
    return reward, children


def _plan(envs, belief, step, depth, key, table) -> float:
    if depth == 0 or not belief:
        return 0.0
    num_actions = envs[0].num_actions
    best_value, best_action = 0.0, None
    for a in range(num_actions):
        value, children = _branch(envs, belief, step, a)
        for j in sorted(children):
            value += _plan(envs, children[j], step + 1, depth - 1, key + (a, j), table)
        if best_action is None or value > best_value + TIE_TOL * abs(best_value):
            best_value, best_action = value, a
    table[key] = best_action
    return best_value


def _follow(envs, belief, step, depth, key, policy: Policy) -> float:
    if depth == 0 or not belief:
        return 0.0
    a = policy(key)
    if not 0 <= a < envs[0].num_actions:
        raise PreconditionError(f"policy chose action {a} outside the action alphabet")
    value, children = _branch(envs, belief, step, a)
    for j in sorted(children):
        value += _follow(envs, children[j], step + 1, depth - 1, key + (a, j), policy)
    return value


def expectimax(components, step: int, depth: int) -> tuple[float, Policy]:
    """Maximize ``sum_c weight_c * V_c`` over action trees of the given depth.

    ``components`` is a sequence of ``(environment, weight, state_belief)``.
    Ties go to the lowest action index.
    """
    envs, belief = _components_belief(components)
    table: dict[tuple, int] = {}
    if not envs:
        return 0.0, Policy(depth)
    value = _plan(envs, belief, step, depth, (), table)
    return value, Policy(depth, table)


def evaluate_policy(components, policy: Policy, step: int, depth: int | None = None) -> float:
    """``sum_c weight_c * V_c^policy`` over ``depth`` steps (default: the policy horizon)."""
    envs, belief = _components_belief(components)
    if not envs:
        return 0.0
    depth = policy.horizon if depth is None else depth
    return _follow(envs, belief, step, depth, (), policy)


# -- single-environment API ------------------------------------------------


def _start(env: Environment, from_step: int, h) -> tuple[HistoryRecord, dict[int, float]]:
    h = _as_history(h)
    if from_step != len(h):
        raise PreconditionError(f"from_step {from_step} does not match history length {len(h)}")
    return h, filter_states(env, h)


def value_of_policy(env: Environment, pi: Policy, from_step: int = 0, h=None) -> PolicyValue:
    """Expected reward of ``pi`` from ``from_step`` for ``pi.horizon`` steps, given ``h``.

    The exact expectation over the depth-``H`` tree; ``tail_bound`` caps
    whatever the environment could still pay after the horizon.
    """
    _, states = _start(env, from_step, h)
    value = evaluate_policy([(env, 1.0, states)], pi, from_step)
    return PolicyValue(value, env.tail_bound(from_step + pi.horizon))


def optimal_value(env: Environment, from_step: int = 0, h=None, H: int = 1) -> tuple[float, Policy]:
    """Best expected reward over depth-``H`` action trees and a maximizing tree."""
    if H < 0:
        raise PreconditionError("horizon must be non-negative")
    _, states = _start(env, from_step, h)
    return expectimax([(env, 1.0, states)], from_step, H)


def horizon_for_tolerance(c: float, gamma: float, eps: float) -> int:
    """Smallest ``H`` with ``c * gamma**H / (1 - gamma) <= eps``."""
    if eps <= 0:
        raise PreconditionError("eps must be positive")
    if c <= 0:
        return 0
    h = math.ceil(math.log(eps * (1.0 - gamma) / c) / math.log(gamma))
    return max(0, h)


def sample_step(env: Environment, state: int, action: int, rng: np.random.Generator) -> Outcome:
    """Draw one outcome; deterministic cells consume no randomness."""
    cell = env.transitions[state][action]
    if len(cell) == 1:
        return cell[0]
    u = rng.random()
    acc = 0.0
    for o in cell:
        acc += o.prob
        if u < acc:
            return o
    return cell[-1]


# -- choosing between actions ------------------------------------------------


class Preference(enum.Enum):
    FIRST = "first"
    SECOND = "second"
    EITHER = "either"


def choose_active(p, x, q, y, tol: float = DEFAULT_TOL) -> Preference:
    """Compare action 1 with contract ``x`` under belief ``p`` against action 2 with ``y`` under ``q``."""
    diff = expectation(p, x) - expectation(q, y)
    if diff > tol:
        return Preference.FIRST
    if diff < -tol:
        return Preference.SECOND
    return Preference.EITHER


def best_action(beliefs: Sequence, contracts: Sequence, tol: float = DEFAULT_TOL) -> int:
    """``argmax_k E_{p^k}[x^k]``; ties within ``tol`` go to the lowest index."""
    if len(beliefs) != len(contracts):
        raise DimensionError("need one belief per contract")
    if not contracts:
        raise PreconditionError("no actions to choose from")
    values = [expectation(as_belief(b), as_contract(x)) for b, x in zip(beliefs, contracts)]
    best = 0
    for k in range(1, len(values)):
        if values[k] > values[best] + tol:
            best = k
    return best


# -- file format --------------------------------------------------------------

_HEADER_KEYS = ("id", "states", "actions", "percepts", "initial", "envelope", "kind")


def dumps(env: Environment) -> str:
    lines = [
        f"id {env.id}",
        f"states {env.num_states}",
        f"actions {env.num_actions}",
        f"percepts {env.num_percepts}",
        f"initial {env.initial_state}",
        f"envelope {env.reward_scale!r} {env.discount!r}",
        f"kind {env.kind}",
        "# t <state> <action> <prob> <percept> <base_reward> <next_state>",
    ]
    for s, row in enumerate(env.transitions):
        for a, cell in enumerate(row):
            for o in cell:
                lines.append(f"t {s} {a} {o.prob!r} {o.percept} {o.reward!r} {o.next_state}")
    return "\n".join(lines) + "\n"


def loads(text: str, path: str | None = None) -> Environment:
    header: dict[str, tuple[list[str], int]] = {}
    cells: dict[tuple[int, int], list[Outcome]] = defaultdict(list)
    t_lines: list[tuple[tuple[int, int], Outcome, int]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, *args = line.split()
        if key == "t":
            if len(args) != 6:
                raise ParseError("transition needs: t state action prob percept reward next", lineno, path)
            try:
                s, a, j, nxt = int(args[0]), int(args[1]), int(args[3]), int(args[5])
                prob, reward = float(args[2]), float(args[4])
            except ValueError:
                raise ParseError(f"bad number in transition: {line!r}", lineno, path) from None
            if not (math.isfinite(prob) and math.isfinite(reward)):
                raise ParseError("probabilities and rewards must be finite", lineno, path)
            o = Outcome(prob, j, reward, nxt)
            cells[(s, a)].append(o)
            t_lines.append(((s, a), o, lineno))
        elif key in _HEADER_KEYS:
            if key in header:
                raise ParseError(f"duplicate '{key}' directive", lineno, path)
            header[key] = (args, lineno)
        else:
            raise ParseError(f"unknown directive {key!r}", lineno, path)

    def need(key: str, count: int) -> tuple[list[str], int]:
        if key not in header:
            raise ParseError(f"missing '{key}' directive", None, path)
        args, lineno = header[key]
        if len(args) != count:
            raise ParseError(f"'{key}' takes {count} value(s)", lineno, path)
        return args, lineno

    def as_int(key: str) -> int:
        (value,), lineno = need(key, 1)
        try:
            return int(value)
        except ValueError:
            raise ParseError(f"'{key}' must be an integer", lineno, path) from None

    (env_id,), _ = need("id", 1)
    num_states, num_actions, num_percepts = as_int("states"), as_int("actions"), as_int("percepts")
    initial = as_int("initial") if "initial" in header else 0
    (c_txt, g_txt), env_line = need("envelope", 2)
    try:
        c, gamma = float(c_txt), float(g_txt)
    except ValueError:
        raise ParseError("envelope takes two numbers: c gamma", env_line, path) from None

    for (s, a), o, lineno in t_lines:
        if not (0 <= s < num_states and 0 <= a < num_actions):
            raise ParseError(f"state/action ({s}, {a}) out of range", lineno, path)
        if not 0 <= o.next_state < num_states:
            raise ParseError(f"next state {o.next_state} out of range", lineno, path)
        if not 0 <= o.percept < num_percepts:
            raise ParseError(f"percept {o.percept} out of range", lineno, path)
        if not 0 < o.prob <= 1:
            raise ParseError(f"probability {o.prob} not in (0, 1]", lineno, path)
        if not 0 <= o.reward <= c:
            raise ParseError(f"base reward {o.reward} outside envelope [0, {c}]", lineno, path)
    for s in range(num_states):
        for a in range(num_actions):
            if (s, a) not in cells:
                raise ParseError(f"no transition for state {s}, action {a}", None, path)
            total = math.fsum(o.prob for o in cells[(s, a)])
            if abs(total - 1.0) > PROB_TOL:
                first = next(ln for key, _, ln in t_lines if key == (s, a))
                raise ParseError(f"probabilities for ({s}, {a}) sum to {total!r}", first, path)

    try:
        env = Environment.from_table(
            env_id, cells, num_states=num_states, num_actions=num_actions,
            num_percepts=num_percepts, reward_scale=c, discount=gamma, initial_state=initial,
        )
    except PreconditionError as exc:
        raise ParseError(str(exc), None, path) from None
    if "kind" in header:
        (kind,), lineno = need("kind", 1)
        if kind not in ("deterministic", "stochastic"):
            raise ParseError(f"kind must be deterministic or stochastic, got {kind!r}", lineno, path)
        if kind != env.kind:
            raise ParseError(f"declared kind {kind} but transitions are {env.kind}", lineno, path)
    return env


def save(env: Environment, path) -> None:
    Path(path).write_text(dumps(env))


def load(path) -> Environment:
    return loads(Path(path).read_text(), path=str(path))
