"""Contracts, beliefs and accept/reject decision makers.

A contract assigns a reward to every outcome symbol of a finite alphabet. A
decision maker says whether it would take the contract. A belief is a
non-negative weight vector; the decision maker it induces accepts a contract
when the weighted payoff is positive and rejects it when negative.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionError, PreconditionError

__all__ = [
    "Contract",
    "Decision",
    "Belief",
    "DecisionMaker",
    "BeliefDecisionMaker",
    "affine_decision_maker",
    "always_accept",
    "sign_flipped_decision_maker",
    "Violation",
    "as_contract",
    "as_belief",
    "expectation",
    "decide",
    "check_axioms",
    "decision_makers_agree",
    "AXIOM_SCALE_GRID",
    "DEFAULT_TOL",
]

DEFAULT_TOL = 1e-12

# Non-negative multipliers tried for conic closure.
AXIOM_SCALE_GRID = (0.0, 0.5, 1.0, 2.0, 10.0)


def _frozen_vector(values, what: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise DimensionError(f"{what} must be a non-empty 1-D vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise PreconditionError(f"{what} entries must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Contract:
    """Payoff vector, one reward per outcome symbol."""

    payoffs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "payoffs", _frozen_vector(self.payoffs, "contract"))

    @property
    def alphabet_size(self) -> int:
        return int(self.payoffs.size)

    def __neg__(self) -> Contract:
        return Contract(-self.payoffs)

    def __add__(self, other: Contract) -> Contract:
        if other.alphabet_size != self.alphabet_size:
            raise DimensionError("contracts over different alphabets")
        return Contract(self.payoffs + other.payoffs)

    def __sub__(self, other: Contract) -> Contract:
        return self + (-other)

    def __mul__(self, scale: float) -> Contract:
        return Contract(float(scale) * self.payoffs)

    __rmul__ = __mul__

    def __eq__(self, other) -> bool:
        if not isinstance(other, Contract):
            return NotImplemented
        return bool(np.array_equal(self.payoffs, other.payoffs))

    def __hash__(self) -> int:
        # + 0.0 folds -0.0 into 0.0 so equal contracts hash equally
        return hash((self.payoffs + 0.0).tobytes())

    def __repr__(self) -> str:
        return f"Contract({self.payoffs.tolist()})"

    @classmethod
    def unit(cls, i: int, m: int) -> Contract:
        e = np.zeros(m)
        e[i] = 1.0
        return cls(e)

    @classmethod
    def constant(cls, value: float, m: int) -> Contract:
        return cls(np.full(m, float(value)))


class Decision(enum.Enum):
    """Ternary outcome: ``EITHER`` means the contract is both acceptable and rejectable."""

    ACCEPT = "accept"
    REJECT = "reject"
    EITHER = "either"

    @property
    def acceptable(self) -> bool:
        return self is not Decision.REJECT

    @property
    def rejectable(self) -> bool:
        return self is not Decision.ACCEPT


@dataclass(frozen=True, eq=False)
class Belief:
    """Non-negative outcome weights.

    With ``normalized=True`` (the default) the entries must already sum to one;
    use :meth:`from_weights` to normalize arbitrary non-negative weights.
    """

    probs: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        arr = _frozen_vector(self.probs, "belief")
        if np.any(arr < 0):
            raise PreconditionError("belief entries must be non-negative")
        total = float(arr.sum())
        if total <= 0:
            raise PreconditionError("belief must have some positive entry")
        if self.normalized and abs(total - 1.0) > 1e-12:
            raise PreconditionError(f"normalized belief sums to {total!r}, not 1")
        object.__setattr__(self, "probs", arr)

    @classmethod
    def from_weights(cls, weights) -> Belief:
        arr = np.array(weights, dtype=float)
        if arr.ndim != 1 or arr.size == 0:
            raise DimensionError("weights must be a non-empty 1-D vector")
        if np.any(arr < 0) or not np.all(np.isfinite(arr)):
            raise PreconditionError("weights must be finite and non-negative")
        total = arr.sum()
        if total <= 0:
            raise PreconditionError("weights must have some positive entry")
        return cls(arr / total)

    @classmethod
    def uniform(cls, m: int) -> Belief:
        return cls(np.full(m, 1.0 / m))

    @property
    def alphabet_size(self) -> int:
        return int(self.probs.size)

    def normalize(self) -> Belief:
        return self if self.normalized else Belief.from_weights(self.probs)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Belief):
            return NotImplemented
        return self.normalized == other.normalized and bool(np.array_equal(self.probs, other.probs))

    def __hash__(self) -> int:
        return hash((self.probs.tobytes(), self.normalized))

    def __repr__(self) -> str:
        return f"Belief({self.probs.tolist()})"


def as_contract(x) -> Contract:
    return x if isinstance(x, Contract) else Contract(x)


def as_belief(b) -> Belief:
    return b if isinstance(b, Belief) else Belief(b)


def expectation(b, x) -> float:
    """Weighted payoff ``sum_i p_i x_i``."""
    b, x = as_belief(b), as_contract(x)
    if b.alphabet_size != x.alphabet_size:
        raise DimensionError(
            f"belief has {b.alphabet_size} outcomes, contract has {x.alphabet_size}"
        )
    return float(np.dot(b.probs, x.payoffs))


def decide(b, x, tol: float = DEFAULT_TOL) -> Decision:
    if tol < 0:
        raise PreconditionError("tol must be non-negative")
    e = expectation(b, x)
    if e > tol:
        return Decision.ACCEPT
    if e < -tol:
        return Decision.REJECT
    return Decision.EITHER


DecisionMaker = Callable[[Contract], Decision]


@dataclass(frozen=True)
class BeliefDecisionMaker:
    """The decision maker induced by a belief, as a callable."""

    belief: Belief
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        object.__setattr__(self, "belief", as_belief(self.belief))

    @property
    def alphabet_size(self) -> int:
        return self.belief.alphabet_size

    def __call__(self, x: Contract) -> Decision:
        return decide(self.belief, x, self.tol)


def affine_decision_maker(belief, offset: float = 0.25, tol: float = DEFAULT_TOL) -> DecisionMaker:
    """Decides on ``p.x + offset``. Any non-zero offset breaks negation duality at ``x = 0``."""
    b = as_belief(belief)

    def dm(x: Contract) -> Decision:
        e = expectation(b, x) + offset
        return Decision.ACCEPT if e > tol else Decision.REJECT if e < -tol else Decision.EITHER

    return dm


def always_accept(x: Contract) -> Decision:
    return Decision.ACCEPT


def sign_flipped_decision_maker(belief, tol: float = DEFAULT_TOL) -> DecisionMaker:
    """Answers as a rational agent would for ``-x``."""
    b = as_belief(belief)
    return lambda x: decide(b, -as_contract(x), tol)


@dataclass(frozen=True)
class Violation:
    """One failed axiom instance. ``witness`` lists the contracts involved."""

    axiom: int
    reason: str
    witness: tuple = field(default=())


def _probe_contracts(m: int) -> list[Contract]:
    probes = [Contract.constant(1.0, m), Contract.constant(-1.0, m), Contract(np.zeros(m))]
    probes += [Contract.unit(i, m) for i in range(m)]
    return probes


def check_axioms(
    dm: DecisionMaker,
    samples: Sequence,
    seed: int = 0,
    *,
    max_pairs: int = 256,
    max_witnesses: int = 8,
) -> list[Violation]:
    """Test the four accept/reject axioms on a sample of contracts.

    The axioms checked are:

    1. completeness, the decision maker answers with a :class:`Decision`;
    2. negation, ``x`` is acceptable exactly when ``-x`` is rejectable;
    3. conic closure, ``l*x + g*y`` stays acceptable for accepted ``x, y`` and
       multipliers from :data:`AXIOM_SCALE_GRID`;
    4. sign, non-negative contracts are acceptable and strictly negative ones
       are not.

    The sample is extended with the constant contracts ``+-1``, zero and the
    unit vectors so that axiom 4 is always exercised. Conic closure is tested
    on every accepted contract against itself plus up to ``max_pairs`` random
    pairs drawn with ``seed``. At most ``max_witnesses`` violations are
    reported per axiom.
    """
    samples = [as_contract(x) for x in samples]
    if not samples:
        raise PreconditionError("check_axioms needs at least one sample contract")
    m = samples[0].alphabet_size
    if any(x.alphabet_size != m for x in samples):
        raise DimensionError("sample contracts span different alphabets")

    cache: dict[Contract, object] = {}

    def ask(x: Contract):
        if x not in cache:
            cache[x] = dm(x)
        return cache[x]

    found: dict[int, list[Violation]] = {1: [], 2: [], 3: [], 4: []}

    def flag(axiom: int, reason: str, *witness: Contract) -> None:
        if len(found[axiom]) < max_witnesses:
            found[axiom].append(Violation(axiom, reason, tuple(witness)))

    contracts = list(dict.fromkeys(samples + _probe_contracts(m)))
    valid: list[Contract] = []
    for x in contracts:
        d = ask(x)
        if isinstance(d, Decision):
            valid.append(x)
        else:
            flag(1, f"no decision returned (got {d!r})", x)

    for x in valid:
        nd = ask(-x)
        if not isinstance(nd, Decision):
            flag(1, f"no decision returned (got {nd!r})", -x)
            continue
        d = cache[x]
        if d.acceptable != nd.rejectable or d.rejectable != nd.acceptable:
            flag(2, f"x is {d.value} but -x is {nd.value}", x, -x)

    for x in valid:
        d = cache[x]
        if np.all(x.payoffs >= 0) and not d.acceptable:
            flag(4, "non-negative contract rejected", x)
        if np.all(x.payoffs < 0) and d.acceptable:
            flag(4, f"strictly negative contract is {d.value}", x)

    accepted = [x for x in valid if cache[x].acceptable]
    pairs = [(x, x) for x in accepted]
    if len(accepted) > 1:
        rng = np.random.default_rng(seed)
        idx = rng.integers(0, len(accepted), size=(max_pairs, 2))
        pairs += [(accepted[i], accepted[j]) for i, j in idx if i != j]
    for x, y in pairs:
        grid = itertools.product(AXIOM_SCALE_GRID, repeat=2)
        if x is y:
            # l*x + g*x only depends on l + g
            grid = ((s, 0.0) for s in sorted({a + b for a, b in itertools.product(AXIOM_SCALE_GRID, repeat=2)}))
        for lam, gam in grid:
            z = Contract(lam * x.payoffs + gam * y.payoffs)
            d = ask(z)
            if isinstance(d, Decision) and not d.acceptable:
                flag(3, f"{lam}*x + {gam}*y rejected although x, y accepted", x, y, z)
                break

    return [v for axiom in sorted(found) for v in found[axiom]]


def decision_makers_agree(d1: Decision, d2: Decision) -> bool:
    """``EITHER`` is compatible with anything; otherwise decisions must match."""
    return d1 is Decision.EITHER or d2 is Decision.EITHER or d1 is d2

