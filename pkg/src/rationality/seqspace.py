"""Weighted sequence spaces with certified tail bounds.

Contracts over countably many outcomes are infinite sequences. We store
finitely many explicit entries plus an optional generator for the rest, and
insist on a declared geometric bound for that rest::

    |x_k * w_k| <= tail_bound * tail_ratio ** (k - n)     for k >= n = len(prefix)

so every norm or pairing comes back as a value together with a rigorous error
bound. Sequences with a generator but no declared bound are rejected.

Only countably additive functionals ``f(x) = sum_k p_k x_k`` with summable
``p`` are representable. Banach limits and the other finitely additive
functionals on bounded sequences exist only non-constructively, so they have
no counterpart here. :func:`monotone_check` probes exactly this divide: for a
summable ``p`` the decision on the truncation ``x^j`` (first ``j`` entries,
zeros after) stabilizes to the decision on ``x``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .errors import DivergenceError, PreconditionError

__all__ = [
    "Certified",
    "WeightedSequence",
    "SummableBelief",
    "MonotoneResult",
    "norm",
    "dual_pair",
    "holder_bound",
    "truncate",
    "truncation_error_bound",
    "monotone_check",
]

# Indices beyond the prefix spot-checked against a declared tail bound.
_TAIL_SPOT_CHECKS = 64
DEFAULT_PROBE_LIMIT = 4096


class Certified(NamedTuple):
    """``value`` with the guarantee ``|true - value| <= error``."""

    value: float
    error: float

    @property
    def lo(self) -> float:
        return self.value - self.error

    @property
    def hi(self) -> float:
        return self.value + self.error


def _vector(values) -> np.ndarray:
    arr = np.array(values, dtype=float).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise PreconditionError("sequence entries must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class WeightedSequence:
    """Element of a weighted sequence space.

    ``weights`` covers the prefix (default all ones); ``tail_weight(k)`` gives
    weights beyond it (default 1). ``weight_floor`` is a lower bound on the
    tail weights, needed only to certify pairings.
    """

    prefix: np.ndarray
    weights: np.ndarray | None = None
    tail: Callable[[int], float] | None = None
    tail_bound: float | None = None
    tail_ratio: float = 1.0
    tail_weight: Callable[[int], float] | None = None
    weight_floor: float | None = None

    def __post_init__(self):
        prefix = _vector(self.prefix)
        weights = _vector(np.ones(prefix.size) if self.weights is None else self.weights)
        if weights.size != prefix.size:
            raise PreconditionError("need one weight per explicit entry")
        if np.any(weights <= 0):
            raise PreconditionError("weights must be strictly positive")
        object.__setattr__(self, "prefix", prefix)
        object.__setattr__(self, "weights", weights)
        if self.tail is None:
            object.__setattr__(self, "tail_bound", 0.0)
        elif self.tail_bound is None:
            raise PreconditionError("a tail generator needs a declared tail bound")
        if not (self.tail_bound >= 0 and math.isfinite(self.tail_bound)):
            raise PreconditionError("tail bound must be finite and non-negative")
        if not 0 <= self.tail_ratio <= 1:
            raise PreconditionError("tail ratio must lie in [0, 1]")
        if self.weight_floor is None:
            object.__setattr__(self, "weight_floor", 1.0 if self.tail_weight is None else 0.0)
        n = prefix.size
        for k in range(n, n + _TAIL_SPOT_CHECKS if self.tail is not None else n):
            w = self.weight(k)
            if w <= 0:
                raise PreconditionError(f"weight at index {k} is not positive")
            if w < self.weight_floor:
                raise PreconditionError(f"weight {w} at index {k} is below the declared floor")
            mag = abs(self.entry(k) * w)
            if mag > self.tail_bound * self.tail_ratio ** (k - n) * (1 + 1e-12) + 1e-300:
                raise PreconditionError(f"entry at index {k} violates the declared tail bound")

    @classmethod
    def finite(cls, entries, weights=None) -> WeightedSequence:
        """Finitely supported sequence: zeros after ``entries``."""
        return cls(entries, weights)

    @classmethod
    def from_function(
        cls, f: Callable[[int], float], bound: float, ratio: float = 1.0,
        weight: Callable[[int], float] | None = None, weight_floor: float | None = None,
    ) -> WeightedSequence:
        return cls(np.zeros(0), None, f, bound, ratio, weight, weight_floor)

    @property
    def length(self) -> int:
        return int(self.prefix.size)

    @property
    def finitely_supported(self) -> bool:
        return self.tail is None or self.tail_bound == 0.0

    def entry(self, k: int) -> float:
        if k < self.length:
            return float(self.prefix[k])
        return 0.0 if self.tail is None else float(self.tail(k))

    def weight(self, k: int) -> float:
        if k < self.length:
            return float(self.weights[k])
        return 1.0 if self.tail_weight is None else float(self.tail_weight(k))

    def bound_from(self, k: int) -> float:
        """Declared bound on ``|x_i w_i|`` for ``i >= k >= length``."""
        return self.tail_bound * self.tail_ratio ** (k - self.length)

    def expand(self, n: int) -> WeightedSequence:
        """Materialize entries up to index ``n`` (exclusive); the tail bound shifts along."""
        if n <= self.length:
            return self
        idx = range(self.length, n)
        prefix = np.concatenate([self.prefix, [self.entry(k) for k in idx]])
        weights = np.concatenate([self.weights, [self.weight(k) for k in idx]])
        return WeightedSequence(
            prefix, weights, self.tail, self.bound_from(n), self.tail_ratio,
            self.tail_weight, self.weight_floor,
        )

    def scale(self, alpha: float) -> WeightedSequence:
        tail = None if self.tail is None else (lambda k, f=self.tail: alpha * f(k))
        return WeightedSequence(
            alpha * self.prefix, self.weights, tail, abs(alpha) * self.tail_bound,
            self.tail_ratio, self.tail_weight, self.weight_floor,
        )

    def __add__(self, other: WeightedSequence) -> WeightedSequence:
        if self.tail_weight is not other.tail_weight:
            raise PreconditionError("can only add sequences in the same weighted space")
        n = max(self.length, other.length)
        a, b = self.expand(n), other.expand(n)
        if not np.array_equal(a.weights, b.weights):
            raise PreconditionError("can only add sequences with identical weights")
        tails = [s.tail for s in (a, b) if s.tail is not None]
        tail = None
        if tails:
            tail = lambda k: a.entry(k) + b.entry(k)  # noqa: E731
        return WeightedSequence(
            a.prefix + b.prefix, a.weights, tail, a.tail_bound + b.tail_bound,
            max(a.tail_ratio, b.tail_ratio), a.tail_weight, min(a.weight_floor, b.weight_floor),
        )


@dataclass(frozen=True, eq=False)
class SummableBelief:
    """Non-negative ``p_k`` with ``p_k <= tail_bound * tail_ratio**(k - n)`` beyond the prefix."""

    prefix: np.ndarray
    tail: Callable[[int], float] | None = None
    tail_bound: float = 0.0
    tail_ratio: float = 0.5

    def __post_init__(self):
        prefix = _vector(self.prefix)
        if np.any(prefix < 0):
            raise PreconditionError("belief weights must be non-negative")
        object.__setattr__(self, "prefix", prefix)
        if self.tail is None:
            object.__setattr__(self, "tail_bound", 0.0)
        if not (self.tail_bound >= 0 and math.isfinite(self.tail_bound)):
            raise PreconditionError("tail bound must be finite and non-negative")
        if not 0 <= self.tail_ratio < 1:
            raise PreconditionError("summability needs a tail ratio in [0, 1)")
        n = prefix.size
        for k in range(n, n + _TAIL_SPOT_CHECKS if self.tail is not None else n):
            v = self.tail(k)
            if v < 0 or v > self.tail_bound * self.tail_ratio ** (k - n) * (1 + 1e-12) + 1e-300:
                raise PreconditionError(f"weight at index {k} violates the declared tail bound")

    @classmethod
    def geometric(cls, first: float = 0.5, ratio: float = 0.5) -> SummableBelief:
        """``p_k = first * ratio**k``; the default sums to one."""
        return cls(np.zeros(0), lambda k: first * ratio**k, first, ratio)

    @classmethod
    def finite(cls, weights) -> SummableBelief:
        return cls(weights)

    @property
    def length(self) -> int:
        return int(self.prefix.size)

    def entry(self, k: int) -> float:
        if k < self.length:
            return float(self.prefix[k])
        return 0.0 if self.tail is None else float(self.tail(k))

    def bound_from(self, k: int) -> float:
        return self.tail_bound * self.tail_ratio ** (k - self.length)

    def tail_mass(self, k: int) -> float:
        """Upper bound on ``sum_{i >= k} p_i`` for ``k >= length``."""
        return self.bound_from(k) / (1.0 - self.tail_ratio)

    def expand(self, n: int) -> SummableBelief:
        if n <= self.length:
            return self
        extra = [self.entry(k) for k in range(self.length, n)]
        return SummableBelief(np.concatenate([self.prefix, extra]), self.tail, self.bound_from(n), self.tail_ratio)


class MonotoneResult(NamedTuple):
    converged: bool
    J: int


def norm(x: WeightedSequence, p=math.inf, terms: int | None = None) -> Certified:
    """Weighted ``l^p`` norm ``||(x_k w_k)||_p`` for ``p`` in ``{1, 2, inf}``.

    A generated tail is materialized to ``terms`` entries (default 64) first.
    """
    if terms is None:
        terms = 0 if x.tail is None else 64
    x = x.expand(terms)
    v = np.abs(x.prefix * x.weights)
    n = x.length
    B, r = x.bound_from(n), x.tail_ratio
    if p in (math.inf, "inf", np.inf):
        head = float(v.max()) if v.size else 0.0
        return Certified(head, max(0.0, B - head))
    if p == 1:
        if B > 0 and r >= 1:
            raise DivergenceError("tail bound does not certify a finite l1 norm")
        tail = B / (1.0 - r) if B > 0 else 0.0
        return Certified(math.fsum(v), tail)
    if p == 2:
        if B > 0 and r >= 1:
            raise DivergenceError("tail bound does not certify a finite l2 norm")
        head_sq = math.fsum(v * v)
        tail_sq = B * B / (1.0 - r * r) if B > 0 else 0.0
        head = math.sqrt(head_sq)
        return Certified(head, math.sqrt(head_sq + tail_sq) - head)
    raise PreconditionError(f"unsupported norm order {p!r}; use 1, 2 or inf")


def _aligned(p: SummableBelief, x: WeightedSequence, n: int):
    return p.expand(n), x.expand(n)


def _tail_product_bound(p: SummableBelief, x: WeightedSequence, n: int) -> float:
    """Bound on ``sum_{k >= n} |p_k x_k|`` once both are expanded to ``n``."""
    bp, bx = p.bound_from(n), x.bound_from(n)
    if bp == 0.0 or bx == 0.0:
        return 0.0
    if x.weight_floor <= 0:
        raise DivergenceError("tail weights have no positive floor; pairing tail is uncertifiable")
    return bp * bx / x.weight_floor / (1.0 - p.tail_ratio * x.tail_ratio)


def dual_pair(p: SummableBelief, x: WeightedSequence, terms: int | None = None, target: float = 1e-15) -> Certified:
    """``sum_k p_k x_k`` with a certified truncation error.

    Entries are materialized until the tail bound drops below ``target`` (or
    ``terms`` entries if given, or :data:`DEFAULT_PROBE_LIMIT` at most).
    """
    n = max(p.length, x.length)
    if terms is not None:
        n = max(n, terms)
        err = _tail_product_bound(p.expand(n), x.expand(n), n)
    else:
        n = max(n, 16)
        while True:
            pe, xe = _aligned(p, x, n)
            err = _tail_product_bound(pe, xe, n)
            if err <= target or n >= DEFAULT_PROBE_LIMIT:
                break
            n *= 2
    pe, xe = _aligned(p, x, n)
    value = math.fsum(pe.prefix[:n] * xe.prefix[:n]) if n else 0.0
    return Certified(value, err)


def holder_bound(p: SummableBelief, x: WeightedSequence, terms: int = 64) -> float:
    """Upper bound on ``||p||_{l1(1/w)} * ||x||_{l_inf(w)}``, which dominates ``|f(x)|``."""
    n = max(p.length, x.length, terms)
    pe, xe = _aligned(p, x, n)
    p_norm = math.fsum(pe.prefix / xe.weights)
    if pe.bound_from(n) > 0:
        if xe.weight_floor <= 0:
            raise DivergenceError("tail weights have no positive floor")
        p_norm += pe.tail_mass(n) / xe.weight_floor
    x_norm = norm(xe, math.inf)
    return p_norm * x_norm.hi


def truncate(x: WeightedSequence, j: int) -> WeightedSequence:
    """Keep the first ``j`` entries and zero the rest."""
    if j < 0:
        raise PreconditionError("truncation index must be non-negative")
    xe = x.expand(j)
    return WeightedSequence(xe.prefix[:j], xe.weights[:j], None, 0.0, 1.0, x.tail_weight, x.weight_floor)


def truncation_error_bound(p: SummableBelief, x: WeightedSequence, j: int, terms: int | None = None) -> float:
    """Certified bound on ``|f(x) - f(x^j)| <= sum_{k >= j} |p_k x_k|``; non-increasing in ``j``."""
    if j < 0:
        raise PreconditionError("truncation index must be non-negative")
    n = max(p.length, x.length, j, terms or 0, 64)
    pe, xe = _aligned(p, x, n)
    explicit = math.fsum(np.abs(pe.prefix[j:n] * xe.prefix[j:n]))
    return explicit + _tail_product_bound(pe, xe, n)


def _sign(v: float, tol: float) -> int:
    if v > tol:
        return 1
    if v < -tol:
        return -1
    return 0


def monotone_check(
    p: SummableBelief, x: WeightedSequence, tol: float = 1e-9, probe_limit: int = DEFAULT_PROBE_LIMIT
) -> MonotoneResult:
    """Smallest ``J`` after which the decision on ``x^j`` matches the decision on ``x``.

    Decisions are signs with an indifference band ``[-tol, tol]``. The
    decision on ``x`` is certified only once ``|f(x)| - error > tol``; if that
    never happens within ``probe_limit`` entries the result is
    ``(False, probe_limit)``. Otherwise entries ``j >= N`` are covered by the
    tail bound at ``N`` and the exact partial sums below ``N`` are scanned.
    """
    if tol < 0:
        raise PreconditionError("tol must be non-negative")
    n = max(p.length, x.length, 16)
    while True:
        pe, xe = _aligned(p, x, n)
        err = _tail_product_bound(pe, xe, n)
        products = pe.prefix[:n] * xe.prefix[:n]
        value = math.fsum(products)
        if abs(value) - err > tol:
            break
        if n >= probe_limit:
            return MonotoneResult(False, probe_limit)
        n = min(2 * n, probe_limit)

    target = _sign(value, tol)
    partial = np.concatenate([[0.0], np.cumsum(products)])
    J = n
    while J > 0 and _sign(float(partial[J - 1]), tol) == target:
        J -= 1
    return MonotoneResult(True, J)
