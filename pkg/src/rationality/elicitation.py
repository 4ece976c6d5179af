"""Recovering beliefs from decision makers.

:func:`elicit_beliefs` only talks to a black-box accept/reject oracle. It
first finds an outcome ``r`` with the largest weight by comparing unit
contracts, then for every other outcome ``i`` bisects on ``t`` in the contract
``e_i - t*e_r``. The oracle flips from accept to reject exactly at
``t = p_i / p_r``. The search runs on ``s`` in ``[0, 1/2]`` with
``t = s / (1 - s)``.

:func:`separate_labeled` answers the offline question: given contracts already
labeled accepted or rejected, is there any belief that explains the labels?
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

from .contracts import (
    DEFAULT_TOL,
    Belief,
    Contract,
    Decision,
    DecisionMaker,
    as_belief,
    as_contract,
    decide,
    decision_makers_agree,
)
from .errors import DimensionError, IrrationalityError, PreconditionError, QueryBudgetError

__all__ = [
    "CountingOracle",
    "Separation",
    "default_query_budget",
    "elicit_beliefs",
    "separate_labeled",
    "cross_validate",
    "FEASIBILITY_SLACK",
]

# Constraint slack accepted as "satisfied" by the feasibility solver.
FEASIBILITY_SLACK = 1e-9


class CountingOracle:
    """Wraps a decision maker and counts queries; optionally enforces a budget."""

    def __init__(self, dm: DecisionMaker, budget: int | None = None):
        self.dm = dm
        self.budget = budget
        self.queries = 0

    def __call__(self, x: Contract) -> Decision:
        if self.budget is not None and self.queries >= self.budget:
            raise QueryBudgetError(f"query budget of {self.budget} exhausted")
        self.queries += 1
        return self.dm(x)


def default_query_budget(m: int, tol: float) -> int:
    return max(4 * m, math.ceil(64 * m * math.log2(1.0 / tol)))


def _t(s: float) -> float:
    return s / (1.0 - s)


def _ratio_contract(i: int, ref: int, t: float, m: int) -> Contract:
    x = np.zeros(m)
    x[i] = 1.0
    x[ref] -= t
    return Contract(x)


def _expect(oracle, x: Contract, allowed: tuple[Decision, ...], why: str) -> Decision:
    d = oracle(x)
    if d not in allowed:
        raise IrrationalityError(f"{why}: got {d.value} for {x!r}", witness=(x,))
    return d


def _check_negation(oracle, x: Contract, d: Decision) -> None:
    nd = oracle(-x)
    if d.acceptable != nd.rejectable or d.rejectable != nd.acceptable:
        raise IrrationalityError(
            f"negation inconsistent: x is {d.value}, -x is {nd.value}", witness=(x, -x)
        )


def _ratio_search(oracle, i: int, ref: int, m: int, tol: float) -> float:
    lo, hi = 0.0, 0.5
    d_lo = _expect(
        oracle, _ratio_contract(i, ref, 0.0, m), (Decision.ACCEPT, Decision.EITHER),
        "non-negative unit contract rejected",
    )
    if d_lo is Decision.EITHER:
        return 0.0
    d_hi = _expect(
        oracle, _ratio_contract(i, ref, 1.0, m), (Decision.REJECT, Decision.EITHER),
        f"outcome {i} outweighs the reference outcome {ref}",
    )
    if d_hi is Decision.EITHER:
        return 1.0
    while _t(hi) - _t(lo) > tol:
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        d = oracle(_ratio_contract(i, ref, _t(mid), m))
        if d is Decision.EITHER:
            return _t(mid)
        if d is Decision.ACCEPT:
            lo = mid
        else:
            hi = mid
    # bracket ends must still answer consistently under negation
    _check_negation(oracle, _ratio_contract(i, ref, _t(lo), m), Decision.ACCEPT)
    _check_negation(oracle, _ratio_contract(i, ref, _t(hi), m), Decision.REJECT)
    return 0.5 * (_t(lo) + _t(hi))


def elicit_beliefs(
    dm: DecisionMaker,
    alphabet_size: int,
    tol: float = 1e-6,
    max_queries: int | None = None,
) -> Belief:
    """Recover the normalized belief behind a rational decision maker.

    Each ratio ``p_i / p_r`` is located to within ``tol``. Raises
    :class:`IrrationalityError` when answers contradict each other and
    :class:`QueryBudgetError` when more than ``max_queries`` (default
    ``64 * m * log2(1/tol)``) queries would be needed.

    If the oracle has a wide indifference band, many beliefs explain it and
    only one of them is returned.
    """
    m = int(alphabet_size)
    if m < 1:
        raise PreconditionError("alphabet_size must be positive")
    if tol <= 0:
        raise PreconditionError("tol must be positive")
    if max_queries is None:
        max_queries = default_query_budget(m, tol)
    oracle = CountingOracle(dm, max_queries)
    if m == 1:
        return Belief([1.0])

    # the reference ends up with the largest weight, so p_ref >= 1/m
    ref = 0
    for i in range(1, m):
        if oracle(Contract.unit(i, m) - Contract.unit(ref, m)) is Decision.ACCEPT:
            ref = i

    ratios = np.zeros(m)
    ratios[ref] = 1.0
    for i in range(m):
        if i != ref:
            ratios[i] = _ratio_search(oracle, i, ref, m, tol)
    return Belief.from_weights(ratios)


@dataclass(frozen=True)
class Separation:
    """Outcome of :func:`separate_labeled`.

    When ``feasible``, ``belief`` explains every label and ``margin`` is the
    smallest signed slack ``p.x`` (accepted) or ``-p.y`` (rejected). Otherwise
    ``certificate`` holds convex weights ``u`` over the accepted then rejected
    contracts such that ``sum u_a x_a - sum u_r y_r`` is negative in every
    coordinate, which no belief can reconcile with the labels.
    """

    feasible: bool
    belief: Belief | None
    margin: float
    certificate: np.ndarray | None = None
    combined: np.ndarray | None = None


def _label_matrix(accepted, rejected) -> tuple[np.ndarray, int]:
    acc = [as_contract(x) for x in accepted]
    rej = [as_contract(y) for y in rejected]
    sizes = {c.alphabet_size for c in acc + rej}
    if len(sizes) > 1:
        raise DimensionError("labeled contracts span different alphabets")
    m = sizes.pop()
    rows = [c.payoffs for c in acc] + [-c.payoffs for c in rej]
    return np.array(rows, dtype=float), m


def separate_labeled(
    accepted: Sequence, rejected: Sequence = (), alphabet_size: int | None = None
) -> Separation:
    """Find a belief ``p`` with ``p.x >= 0`` on accepted and ``p.y <= 0`` on rejected contracts.

    Solves the max-margin problem ``max s`` subject to ``M p >= s``,
    ``sum p = 1``, ``p >= 0`` where the rows of ``M`` are the accepted
    contracts and the negated rejected ones. Labels are explainable iff the
    optimum is ``>= -FEASIBILITY_SLACK``. Empty input is vacuously feasible and
    yields the uniform belief over ``alphabet_size`` outcomes.
    """
    if not accepted and not rejected:
        if alphabet_size is None:
            raise PreconditionError("alphabet_size is required when no contracts are given")
        return Separation(True, Belief.uniform(alphabet_size), math.inf)
    M, m = _label_matrix(accepted, rejected)
    if alphabet_size is not None and alphabet_size != m:
        raise DimensionError(f"contracts have {m} outcomes, expected {alphabet_size}")
    n = M.shape[0]

    # variables (p_1..p_m, s): minimise -s
    c = np.zeros(m + 1)
    c[-1] = -1.0
    A_ub = np.hstack([-M, np.ones((n, 1))])
    A_eq = np.hstack([np.ones((1, m)), np.zeros((1, 1))])
    bounds = [(0, None)] * m + [(None, None)]
    res = linprog(c, A_ub=A_ub, b_ub=np.zeros(n), A_eq=A_eq, b_eq=[1.0], bounds=bounds, method="highs")
    if res.status != 0:
        raise RuntimeError(f"LP solver failed: {res.message}")

    p = np.clip(res.x[:m], 0.0, None)
    p /= p.sum()
    margin = float(np.min(M @ p))
    if margin >= -FEASIBILITY_SLACK:
        return Separation(True, Belief(p), margin)

    # dual: min t s.t. M^T u <= t, sum u = 1, u >= 0
    c = np.zeros(n + 1)
    c[-1] = 1.0
    A_ub = np.hstack([M.T, -np.ones((m, 1))])
    A_eq = np.hstack([np.ones((1, n)), np.zeros((1, 1))])
    bounds = [(0, None)] * n + [(None, None)]
    dual = linprog(c, A_ub=A_ub, b_ub=np.zeros(m), A_eq=A_eq, b_eq=[1.0], bounds=bounds, method="highs")
    if dual.status != 0:
        raise RuntimeError(f"LP solver failed: {dual.message}")
    u = np.clip(dual.x[:n], 0.0, None)
    u /= u.sum()
    combined = M.T @ u
    if not np.all(combined < 0):
        raise RuntimeError("solver returned an infeasibility certificate that does not verify")
    return Separation(False, None, margin, certificate=u, combined=combined)


def cross_validate(
    dm: DecisionMaker, b, n: int, tol: float = DEFAULT_TOL, seed: int = 0
) -> float:
    """Fraction of ``n`` random contracts in ``[-1, 1]^m`` where ``dm`` and ``b`` agree.

    ``EITHER`` on either side counts as agreement.
    """
    if n <= 0:
        raise PreconditionError("cross_validate needs n > 0 samples")
    b = as_belief(b)
    rng = np.random.default_rng(seed)
    xs = rng.uniform(-1.0, 1.0, size=(n, b.alphabet_size))
    agree = 0
    for row in xs:
        x = Contract(row)
        agree += decision_makers_agree(decide(b, x, tol), dm(x))
    return agree / n
