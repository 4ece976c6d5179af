"""Exception hierarchy.

Precondition violations derive from :class:`ValueError` so callers that only
care about "bad input" can catch that; the CLI maps them to exit code 3.
"""

from __future__ import annotations


class RationalityError(Exception):
    """Base class for all package errors."""


class PreconditionError(RationalityError, ValueError):
    """An operation was called outside its documented domain."""


class DimensionError(PreconditionError):
    """Vectors (beliefs, contracts, histories) have incompatible sizes."""


class IrrationalityError(RationalityError):
    """A decision maker answered in a way no belief can explain.

    ``witness`` holds the contracts that expose the inconsistency.
    """

    def __init__(self, message: str, witness=()):
        super().__init__(message)
        self.witness = tuple(witness)


class QueryBudgetError(RationalityError):
    """The oracle query budget ran out before elicitation finished."""


class ConditioningError(PreconditionError):
    """Conditioning on an event of probability zero."""


class InconsistentHistoryError(PreconditionError):
    """A history that the environment could not have produced."""


class ClassExhaustedError(RationalityError):
    """Every environment in the class was ruled out by the history."""


class DegenerateEnvironmentError(PreconditionError):
    """A consistent environment has optimal value zero, so skill is undefined."""


class InterfaceMismatchError(PreconditionError):
    """Environments or policies disagree on action/percept alphabets."""


class DivergenceError(PreconditionError):
    """A series cannot be certified finite from the declared tail bounds."""


class ParseError(RationalityError):
    """Malformed input file. ``line`` is 1-based, or ``None`` if not line specific."""

    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)
        self.line = line
        self.path = path
