"""Joint distributions over product alphabets and symbol sequences.

Storage is a dense numpy array with one axis per variable. A sequence
distribution over ``T`` positions is simply a joint with ``T`` axes.

Text format (``dumps``/``loads``)::

    shape: 2 3
    0.1
    0.2
    ...

one probability per line in row-major (C) order of the symbol tuples.
Blank lines and ``#`` comments are ignored.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .contracts import DEFAULT_TOL, Belief, Contract, Decision, decide
from .errors import ConditioningError, DimensionError, ParseError, PreconditionError

__all__ = [
    "JointDistribution",
    "MAX_ENTRIES",
    "marginalize",
    "condition",
    "condition_chain",
    "verify_bayes",
    "informed_posterior",
    "lift_contract",
    "slice_contract",
    "decide_joint",
    "dumps",
    "loads",
    "save",
    "load",
]

MAX_ENTRIES = 2**24
NORMALIZATION_TOL = 1e-12


class JointDistribution:
    """Probabilities indexed by symbol tuples, one axis per variable.

    Non-negative weights are rescaled to sum to one on construction unless
    ``normalize=False``, in which case they must already sum to one within
    ``1e-12`` and are stored bit-for-bit.
    """

    __slots__ = ("_probs",)

    def __init__(self, probs, normalize: bool = True):
        arr = np.array(probs, dtype=float)
        if arr.ndim == 0:
            raise DimensionError("a joint distribution needs at least one variable")
        if arr.size == 0 or min(arr.shape) < 1:
            raise DimensionError(f"every alphabet must be non-empty, got shape {arr.shape}")
        if arr.size > MAX_ENTRIES:
            raise PreconditionError(f"{arr.size} entries exceeds the cap of {MAX_ENTRIES}")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise PreconditionError("probabilities must be finite and non-negative")
        total = float(arr.sum())
        if total <= 0:
            raise PreconditionError("probabilities sum to zero")
        if normalize:
            if total != 1.0:
                arr = arr / total
        elif abs(total - 1.0) > NORMALIZATION_TOL:
            raise PreconditionError(f"probabilities sum to {total!r}, not 1")
        arr.setflags(write=False)
        self._probs = arr

    @classmethod
    def independent(cls, *marginals) -> JointDistribution:
        """Product distribution of the given one-variable beliefs."""
        out = np.ones(())
        for m in marginals:
            p = m.probs if isinstance(m, Belief) else np.asarray(m, dtype=float)
            out = np.multiply.outer(out, p)
        return cls(out)

    @classmethod
    def iid(cls, marginal, length: int) -> JointDistribution:
        return cls.independent(*([marginal] * length))

    @property
    def probs(self) -> np.ndarray:
        return self._probs

    @property
    def shape(self) -> tuple[int, ...]:
        return self._probs.shape

    @property
    def num_vars(self) -> int:
        return self._probs.ndim

    def prob(self, *symbols: int) -> float:
        return float(self._probs[symbols])

    def as_belief(self) -> Belief:
        """Flatten to a belief over symbol tuples in row-major order."""
        flat = self._probs.ravel()
        return Belief(flat) if abs(flat.sum() - 1.0) <= 1e-12 else Belief.from_weights(flat)

    def __eq__(self, other) -> bool:
        if not isinstance(other, JointDistribution):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self._probs, other._probs))

    def __hash__(self) -> int:
        return hash((self.shape, self._probs.tobytes()))

    def __repr__(self) -> str:
        return f"JointDistribution(shape={self.shape})"


def _check_var(d: JointDistribution, var: int) -> int:
    if not 0 <= var < d.num_vars:
        raise PreconditionError(f"variable index {var} out of range for {d.num_vars} variables")
    return var


def marginalize(d: JointDistribution, keep: Iterable[int]) -> JointDistribution:
    """Sum out every variable not in ``keep``. Kept axes stay in their original order."""
    keep = sorted(set(keep))
    if not keep:
        raise PreconditionError("keep must name at least one variable")
    for v in keep:
        _check_var(d, v)
    drop = tuple(v for v in range(d.num_vars) if v not in keep)
    if not drop:
        return d
    return JointDistribution(d.probs.sum(axis=drop))


def condition(d: JointDistribution, var: int, value: int) -> JointDistribution:
    """``Pr(rest | var = value) = Pr(rest, value) / Pr(value)``."""
    _check_var(d, var)
    if d.num_vars < 2:
        raise PreconditionError("conditioning needs at least one remaining variable")
    if not 0 <= value < d.shape[var]:
        raise PreconditionError(f"symbol {value} outside alphabet of size {d.shape[var]}")
    joint_slice = np.take(d.probs, value, axis=var)
    mass = float(joint_slice.sum())
    if mass <= 0:
        raise ConditioningError(f"Pr(variable {var} = {value}) is zero")
    return JointDistribution(joint_slice / mass)


def condition_chain(d: JointDistribution, history: Sequence[int]) -> JointDistribution:
    """Condition on the leading positions one at a time."""
    for symbol in history:
        d = condition(d, 0, symbol)
    return d


def informed_posterior(d: JointDistribution, history: Sequence[int]) -> JointDistribution:
    """Belief about the next symbol given the observed prefix ``history``.

    Conditions on the past and sums out the future in one step: the
    numerator sums ``p[h, i, future]`` over futures and the normaliser sums
    over the current symbol as well.
    """
    history = tuple(int(s) for s in history)
    if len(history) >= d.num_vars:
        raise PreconditionError(
            f"history of length {len(history)} leaves no next position among {d.num_vars}"
        )
    for t, s in enumerate(history):
        if not 0 <= s < d.shape[t]:
            raise PreconditionError(f"symbol {s} at position {t} outside alphabet of size {d.shape[t]}")
    rest = d.probs[history]
    numer = rest.reshape(rest.shape[0], -1).sum(axis=1)
    denom = float(numer.sum())
    if denom <= 0:
        raise ConditioningError(f"history {history} has probability zero")
    return JointDistribution(numer / denom)


def verify_bayes(d: JointDistribution, i0: int, j0: int, variables: tuple[int, int] = (0, 1)) -> float:
    """Residual ``|Pr(i0) Pr(j0|i0) - Pr(j0) Pr(i0|j0)|`` for a pair of variables."""
    a, b = variables
    if a == b:
        raise PreconditionError("need two distinct variables")
    pair = marginalize(d, (a, b)).probs
    if a > b:
        pair = pair.T
    if not (0 <= i0 < pair.shape[0] and 0 <= j0 < pair.shape[1]):
        raise PreconditionError("symbol outside alphabet")
    p_i = float(pair[i0, :].sum())
    p_j = float(pair[:, j0].sum())
    if p_i <= 0 or p_j <= 0:
        raise ConditioningError("Bayes identity needs positive marginals")
    r = float(pair[i0, j0])
    return abs(p_i * (r / p_i) - p_j * (r / p_j))


def lift_contract(y, shape: Sequence[int], keep: Sequence[int]) -> Contract:
    """Extend a contract on the ``keep`` variables to the full product alphabet.

    The payoff of a full tuple is the payoff of its kept coordinates, which is
    how a marginal decision maker answers.
    """
    keep = sorted(set(keep))
    y = np.asarray(y.payoffs if isinstance(y, Contract) else y, dtype=float)
    sub = tuple(shape[v] for v in keep)
    if y.size != math.prod(sub):
        raise DimensionError(f"contract of size {y.size} does not match kept alphabets {sub}")
    view = y.reshape(sub)
    expand = [1] * len(shape)
    for v, m in zip(keep, sub):
        expand[v] = m
    return Contract(np.broadcast_to(view.reshape(expand), tuple(shape)).ravel())


def slice_contract(y, shape: Sequence[int], var: int, value: int) -> Contract:
    """Extend a contract on the other variables by paying zero unless ``var == value``."""
    y = np.asarray(y.payoffs if isinstance(y, Contract) else y, dtype=float)
    rest = tuple(m for v, m in enumerate(shape) if v != var)
    if y.size != math.prod(rest):
        raise DimensionError(f"contract of size {y.size} does not match alphabets {rest}")
    full = np.zeros(tuple(shape))
    index = [slice(None)] * len(shape)
    index[var] = value
    full[tuple(index)] = y.reshape(rest)
    return Contract(full.ravel())


def decide_joint(d: JointDistribution, x, tol: float = DEFAULT_TOL) -> Decision:
    return decide(d.as_belief(), x, tol)


def dumps(d: JointDistribution) -> str:
    lines = ["shape: " + " ".join(str(m) for m in d.shape)]
    lines += [repr(float(v)) for v in d.probs.ravel()]
    return "\n".join(lines) + "\n"


def loads(text: str, path: str | None = None) -> JointDistribution:
    shape = None
    values: list[float] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if shape is None:
            key, sep, rest = line.partition(":")
            if key.strip() != "shape" or not sep:
                raise ParseError("expected header 'shape: m1 m2 ...'", lineno, path)
            try:
                shape = tuple(int(tok) for tok in rest.split())
            except ValueError:
                raise ParseError("alphabet sizes must be integers", lineno, path) from None
            if not shape or min(shape) < 1:
                raise ParseError("alphabet sizes must be positive", lineno, path)
            continue
        try:
            v = float(line)
        except ValueError:
            raise ParseError(f"not a number: {line!r}", lineno, path) from None
        if not math.isfinite(v) or v < 0:
            raise ParseError(f"probability must be finite and non-negative: {line!r}", lineno, path)
        values.append(v)
    if shape is None:
        raise ParseError("missing 'shape:' header", None, path)
    expected = math.prod(shape)
    if len(values) != expected:
        raise ParseError(f"expected {expected} probabilities, found {len(values)}", None, path)
    try:
        return JointDistribution(np.array(values).reshape(shape), normalize=False)
    except PreconditionError as exc:
        raise ParseError(str(exc), None, path) from None


def save(d: JointDistribution, path) -> None:
    Path(path).write_text(dumps(d))


def load(path) -> JointDistribution:
    return loads(Path(path).read_text(), path=str(path))
