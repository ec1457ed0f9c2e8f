"""Exception hierarchy shared by every module.

The CLI maps these onto exit statuses: counterexamples are returned as data,
never raised, so only input problems and resource caps appear here.
"""


class HomogenError(Exception):
    """Base class for all package errors."""


class InvalidInputError(HomogenError, ValueError):
    """A structure, pattern, map or configuration violates its invariants."""


class ResourceLimitError(HomogenError):
    """A hard size bound (enumeration, canonicalisation, sweep) was exceeded."""


class BudgetExhausted(HomogenError):
    """A search ran out of its vertex or node budget.

    Distinct from a logical failure: in the infinite limit the object exists,
    the finite stage just did not reach it.
    """

    def __init__(self, message, step=None):
        super().__init__(message if step is None else f"[{step}] {message}")
        self.step = step


class LogicalFailure(HomogenError):
    """A constructed object failed re-verification against its claimed facts."""

    def __init__(self, message, step=None, data=None):
        super().__init__(message if step is None else f"[{step}] {message}")
        self.step = step
        self.data = data
