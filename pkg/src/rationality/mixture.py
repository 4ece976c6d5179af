"""Mixture agents over a finite class of environments.

The agent holds a weight ``p_nu`` for every environment in the class. After
each step it zeroes the environments that could not have produced the
observed percepts and renormalizes the survivors in proportion to their
initial weights. It then plans with expectimax on the objective

    sum_nu p_nu * V_nu(pi) / V*_nu

over depth-``H`` action trees, where ``V_nu(pi)`` is the reward ``pi`` earns
in ``nu`` from the current step on and ``V*_nu`` the best achievable. The
ratio ``V_nu(pi) / V*_nu`` is the skill ``W`` of ``pi`` in ``nu``.

Class file format (``.cls``), ``#`` comments allowed::

    env a.env 0.5            # path (relative to the class file) and weight
    env b.env 0.5
    truncation 0.0           # optional bound on weight mass left out of the class

Experiment CSV columns are ``step, action, percept, reward, W, Delta,
surviving_envs``; ``surviving_envs`` lists the ids still consistent at that
step, separated by ``;``.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import envsim
from .envsim import (
    Environment,
    HistoryRecord,
    Policy,
    advance_states,
    evaluate_policy,
    expectimax,
    sample_step,
)
from .errors import (
    ClassExhaustedError,
    DegenerateEnvironmentError,
    InterfaceMismatchError,
    ParseError,
    PreconditionError,
)

__all__ = [
    "EnvironmentClass",
    "PosteriorState",
    "SkillRecord",
    "SkillCurve",
    "relative_prior",
    "posterior_update",
    "mixture_value",
    "mixture_prefix_probability",
    "relative_mixture_value",
    "mixture_policy",
    "run_optimality_experiment",
    "distinguishing_depth",
    "load_class",
    "CSV_COLUMNS",
    "BOUND_SLACK",
]

CSV_COLUMNS = ("step", "action", "percept", "reward", "W", "Delta", "surviving_envs")
# Float slack allowed when checking p_mu * (1 - W) <= Delta.
BOUND_SLACK = 1e-9


@dataclass(frozen=True)
class EnvironmentClass:
    """Finite environment class with strictly positive weights summing to one."""

    environments: tuple
    weights: tuple
    truncation_mass: float = 0.0

    def __post_init__(self):
        envs = tuple(self.environments)
        if not envs:
            raise PreconditionError("environment class is empty")
        ids = [e.id for e in envs]
        if len(set(ids)) != len(ids):
            raise PreconditionError(f"duplicate environment ids in {ids}")
        a0, j0 = envs[0].num_actions, envs[0].num_percepts
        if any(e.num_actions != a0 or e.num_percepts != j0 for e in envs):
            raise InterfaceMismatchError("environments disagree on action/percept alphabets")
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (len(envs),):
            raise PreconditionError("need one weight per environment")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise PreconditionError("class weights must be finite and strictly positive")
        if not 0 <= self.truncation_mass < 1:
            raise PreconditionError("truncation mass must lie in [0, 1)")
        object.__setattr__(self, "environments", envs)
        object.__setattr__(self, "weights", tuple(float(x) for x in w / w.sum()))

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(e.id for e in self.environments)

    @property
    def num_actions(self) -> int:
        return self.environments[0].num_actions

    @property
    def num_percepts(self) -> int:
        return self.environments[0].num_percepts

    def __len__(self) -> int:
        return len(self.environments)

    def index(self, env_id: str) -> int:
        try:
            return self.ids.index(env_id)
        except ValueError:
            raise PreconditionError(f"environment {env_id!r} is not in the class") from None


@dataclass(frozen=True)
class PosteriorState:
    """Weights ``p_{nu,k}`` after ``k`` steps, plus per-environment hidden-state filters.

    ``states[i]`` is a normalized distribution over the hidden states of
    environment ``i``, or empty once that environment is inconsistent.
    """

    ec: EnvironmentClass
    prior: tuple
    current: tuple
    step: int = 0
    history: HistoryRecord = field(default_factory=HistoryRecord)
    states: tuple = ()

    @classmethod
    def initial(cls, ec: EnvironmentClass, prior: Sequence[float] | None = None) -> PosteriorState:
        p = np.asarray(ec.weights if prior is None else prior, dtype=float)
        if p.shape != (len(ec),) or np.any(p <= 0) or not np.all(np.isfinite(p)):
            raise PreconditionError("prior must give every environment a positive finite weight")
        p = tuple(float(x) for x in p / p.sum())
        states = tuple({e.initial_state: 1.0} for e in ec.environments)
        return cls(ec, p, p, 0, HistoryRecord(), states)

    @property
    def surviving(self) -> tuple[int, ...]:
        return tuple(i for i, s in enumerate(self.states) if s)

    def weight(self, env_id: str) -> float:
        return self.current[self.ec.index(env_id)]


def posterior_update(ps: PosteriorState, step) -> PosteriorState:
    """Condition on one ``(action, percept)`` or ``(action, percept, reward)`` step."""
    action, percept = int(step[0]), int(step[1])
    reward = float(step[2]) if len(step) > 2 else None
    new_states = []
    for env, states in zip(ps.ec.environments, ps.states):
        nxt = advance_states(env, states, action, percept) if states else {}
        total = math.fsum(nxt.values())
        new_states.append({s: w / total for s, w in sorted(nxt.items())} if total > 0 else {})
    alive = [bool(s) for s in new_states]
    mass = math.fsum(p for p, ok in zip(ps.prior, alive) if ok)
    if mass <= 0:
        raise ClassExhaustedError(
            f"no environment in the class is consistent with step {ps.step}: action {action}, percept {percept}"
        )
    current = tuple(p / mass if ok else 0.0 for p, ok in zip(ps.prior, alive))
    if reward is not None and (ps.history.rewards or not len(ps.history)):
        history = ps.history.extend(action, percept, reward)
    else:
        history = ps.history.extend(action, percept)
    return PosteriorState(ps.ec, ps.prior, current, ps.step + 1, history, tuple(new_states))


def posterior_from_history(ec: EnvironmentClass, h, prior: Sequence[float] | None = None) -> PosteriorState:
    ps = PosteriorState.initial(ec, prior)
    h = h if isinstance(h, HistoryRecord) else HistoryRecord(*(h or ((), ())))
    for a, j in h.steps():
        ps = posterior_update(ps, (a, j))
    return ps


def _optimal(env: Environment, states: dict, step: int, H: int) -> tuple[float, Policy]:
    return expectimax([(env, 1.0, states)], step, H)


def relative_prior(ec: EnvironmentClass, H: int) -> tuple[float, ...]:
    """Normalized ``w_nu * V*_nu`` at step 0: the relative-value weights matching the class weights."""
    vals = []
    for env, w in zip(ec.environments, ec.weights):
        v, _ = _optimal(env, {env.initial_state: 1.0}, 0, H)
        if v <= 0:
            raise DegenerateEnvironmentError(f"environment {env.id} has optimal value 0")
        vals.append(w * v)
    total = math.fsum(vals)
    return tuple(v / total for v in vals)


def mixture_value(ec: EnvironmentClass, pi: Policy) -> float:
    """``sum_nu w_nu V_nu(pi)`` from the start over ``pi.horizon`` steps."""
    comps = [(env, w, {env.initial_state: 1.0}) for env, w in zip(ec.environments, ec.weights)]
    return evaluate_policy(comps, pi, 0)


def mixture_prefix_probability(ec: EnvironmentClass, h) -> float:
    """Probability the weighted mixture assigns to the percepts of ``h`` given its actions."""
    return math.fsum(w * envsim.prefix_probability(env, h) for env, w in zip(ec.environments, ec.weights))


def _skills(ps: PosteriorState, policies: dict[str, Policy], H: int, vstars: dict[int, float] | None = None):
    """Per surviving environment: (V*, {name: W}) for each named policy."""
    out = {}
    for i in ps.surviving:
        env, states = ps.ec.environments[i], ps.states[i]
        vstar = vstars[i] if vstars is not None else _optimal(env, states, ps.step, H)[0]
        if vstar <= 0:
            raise DegenerateEnvironmentError(
                f"environment {env.id} is consistent but has optimal value 0 at step {ps.step}"
            )
        ws = {}
        for name, pol in policies.items():
            v = evaluate_policy([(env, 1.0, states)], pol, ps.step, H)
            ws[name] = min(1.0, max(0.0, v / vstar))
        out[i] = (vstar, ws)
    return out


def relative_mixture_value(
    ec: EnvironmentClass,
    pi: Policy,
    k: int = 0,
    h=None,
    prior: Sequence[float] | None = None,
) -> float:
    """``sum_nu p_{nu,k} W_{nu,k}(pi)`` with the posterior built from ``prior`` and ``h``.

    ``prior`` defaults to the class weights. Values use horizon ``pi.horizon``.
    """
    ps = posterior_from_history(ec, h, prior)
    if ps.step != k:
        raise PreconditionError(f"k = {k} does not match history length {ps.step}")
    skills = _skills(ps, {"pi": pi}, pi.horizon)
    return math.fsum(ps.current[i] * ws["pi"] for i, (_, ws) in skills.items())


def _mixture_plan(ps: PosteriorState, H: int, vstars: dict[int, float] | None = None) -> tuple[float, Policy]:
    comps = []
    for i in ps.surviving:
        env, states = ps.ec.environments[i], ps.states[i]
        if vstars is not None:
            vstar = vstars[i]
        else:
            vstar, _ = _optimal(env, states, ps.step, H)
        if vstar <= 0:
            raise DegenerateEnvironmentError(
                f"environment {env.id} is consistent but has optimal value 0 at step {ps.step}"
            )
        comps.append((env, ps.current[i] / vstar, states))
    return expectimax(comps, ps.step, H)


def mixture_policy(ec: EnvironmentClass, ps: PosteriorState, H: int) -> Policy:
    """Depth-``H`` action tree maximizing the posterior-weighted skill. Ties: lowest action."""
    if ps.ec is not ec and ps.ec != ec:
        raise PreconditionError("posterior state belongs to a different class")
    if H < 1:
        raise PreconditionError("horizon must be at least 1")
    _, policy = _mixture_plan(ps, H)
    return policy


@dataclass(frozen=True)
class SkillRecord:
    step: int
    action: int
    percept: int
    reward: float
    W: float
    Delta: float
    mixture_gap: float
    true_weight: float
    surviving: tuple
    skills: dict
    bound_holds: bool


@dataclass
class SkillCurve:
    """Per-step skill of the mixture agent in the true environment.

    ``Delta`` uses the true environment's optimal policy as the reference
    policy; ``mixture_gap`` is ``sum_nu p_nu (1 - W_nu)`` for the agent's own
    policy. ``bound_holds`` records ``p_mu (1 - W) <= mixture_gap <= Delta``.
    """

    class_ids: tuple
    true_env: str
    horizon: int
    records: list = field(default_factory=list)

    @property
    def W(self) -> list[float]:
        return [r.W for r in self.records]

    @property
    def Delta(self) -> list[float]:
        return [r.Delta for r in self.records]

    def identified_from(self, tol: float = 1e-9) -> int | None:
        """First step from which ``W >= 1 - tol`` holds for the rest of the run."""
        first = None
        for r in self.records:
            if r.W >= 1.0 - tol:
                if first is None:
                    first = r.step
            else:
                first = None
        return first

    def rows(self) -> list[dict]:
        return [
            {
                "step": r.step,
                "action": r.action,
                "percept": r.percept,
                "reward": r.reward,
                "W": r.W,
                "Delta": r.Delta,
                "surviving_envs": ";".join(r.surviving),
            }
            for r in self.records
        ]

    def to_csv(self, metadata: dict | None = None) -> str:
        buf = io.StringIO()
        for key, value in (metadata or {}).items():
            buf.write(f"# {key}: {value}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in self.rows():
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row.values()])
        return buf.getvalue()

    def to_json(self, metadata: dict | None = None) -> str:
        return json.dumps({"metadata": metadata or {}, "columns": list(CSV_COLUMNS), "rows": self.rows()}, indent=2) + "\n"


def run_optimality_experiment(
    ec: EnvironmentClass,
    true_env: str,
    steps: int,
    H: int,
    seed: int = 0,
    prior: Sequence[float] | str | None = "relative",
) -> SkillCurve:
    """Roll out the mixture agent in ``true_env`` and record its skill each step.

    At every step the agent replans from its current posterior. ``W`` is the
    skill of that depth-``H`` plan in the true environment relative to the
    true optimum over the same horizon. ``prior="relative"`` starts from
    weights proportional to ``w_nu * V*_nu``; ``None`` uses the class weights;
    a sequence is used as given. Stochastic outcomes are drawn with ``seed``.
    """
    if steps < 0 or H < 1:
        raise PreconditionError("need steps >= 0 and H >= 1")
    mu = ec.index(true_env)
    if isinstance(prior, str):
        if prior != "relative":
            raise PreconditionError(f"unknown prior {prior!r}")
        prior = relative_prior(ec, H)
    ps = PosteriorState.initial(ec, prior)
    rng = np.random.default_rng(seed)
    env = ec.environments[mu]
    true_state = env.initial_state
    curve = SkillCurve(ec.ids, true_env, H)

    for k in range(steps):
        if not ps.states[mu]:
            raise ClassExhaustedError(f"true environment {true_env} was eliminated at step {k}")
        plans = {i: _optimal(ec.environments[i], ps.states[i], k, H) for i in ps.surviving}
        vstars = {i: v for i, (v, _) in plans.items()}
        _, agent = _mixture_plan(ps, H, vstars)
        reference = plans[mu][1]
        skills = _skills(ps, {"agent": agent, "reference": reference}, H, vstars)
        W = skills[mu][1]["agent"]
        gap = math.fsum(ps.current[i] * (1.0 - ws["agent"]) for i, (_, ws) in skills.items())
        delta = math.fsum(ps.current[i] * (1.0 - ws["reference"]) for i, (_, ws) in skills.items())
        p_mu = ps.current[mu]
        holds = p_mu * (1.0 - W) <= gap + BOUND_SLACK and gap <= delta + BOUND_SLACK

        action = agent(())
        o = sample_step(env, true_state, action, rng)
        true_state = o.next_state
        reward = env.reward_at(o.reward, k)
        curve.records.append(
            SkillRecord(
                step=k, action=action, percept=o.percept, reward=reward, W=W,
                Delta=min(1.0, max(0.0, delta)), mixture_gap=gap, true_weight=p_mu,
                surviving=tuple(ec.ids[i] for i in ps.surviving),
                skills={ec.ids[i]: ws["agent"] for i, (_, ws) in skills.items()},
                bound_holds=holds,
            )
        )
        ps = posterior_update(ps, (action, o.percept, reward))
    return curve


def distinguishing_depth(ec: EnvironmentClass, max_depth: int = 8) -> int | None:
    """Smallest ``d`` such that every action sequence of length ``d`` separates every pair.

    Only defined for deterministic classes: after ``d`` steps, whatever the
    agent did, exactly one environment remains consistent. Returns ``None`` if
    no ``d <= max_depth`` works.
    """
    if any(not e.deterministic for e in ec.environments):
        raise PreconditionError("distinguishing depth needs deterministic environments")
    if len(ec) == 1:
        return 0
    for d in range(max_depth + 1):
        if all(_separates(ec, seq) for seq in itertools.product(range(ec.num_actions), repeat=d)):
            return d
    return None


def _separates(ec: EnvironmentClass, actions: Sequence[int]) -> bool:
    traces = set()
    for env in ec.environments:
        s, trace = env.initial_state, []
        for a in actions:
            o = env.transitions[s][a][0]
            trace.append(o.percept)
            s = o.next_state
        traces.add(tuple(trace))
    return len(traces) == len(ec)


def load_class(path) -> EnvironmentClass:
    path = Path(path)
    envs, weights = [], []
    truncation = 0.0
    seen_truncation = False
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, *args = line.split()
        if key == "env":
            if len(args) != 2:
                raise ParseError("expected: env <path> <weight>", lineno, str(path))
            try:
                w = float(args[1])
            except ValueError:
                raise ParseError(f"weight must be a number, got {args[1]!r}", lineno, str(path)) from None
            if not (math.isfinite(w) and w > 0):
                raise ParseError("weights must be finite and strictly positive", lineno, str(path))
            env_path = path.parent / args[0]
            if not env_path.exists():
                raise ParseError(f"environment file not found: {args[0]}", lineno, str(path))
            envs.append(envsim.load(env_path))
            weights.append(w)
        elif key == "truncation":
            if seen_truncation or len(args) != 1:
                raise ParseError("expected a single: truncation <mass>", lineno, str(path))
            try:
                truncation = float(args[0])
            except ValueError:
                raise ParseError("truncation mass must be a number", lineno, str(path)) from None
            seen_truncation = True
        else:
            raise ParseError(f"unknown directive {key!r}", lineno, str(path))
    if not envs:
        raise ParseError("class file lists no environments", None, str(path))
    try:
        return EnvironmentClass(tuple(envs), tuple(weights), truncation)
    except PreconditionError as exc:
        raise ParseError(str(exc), None, str(path)) from None
