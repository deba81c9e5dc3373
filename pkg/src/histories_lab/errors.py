"""Exception family shared by every analysis module.

Analyses whose failures are *data* (a violated criterion, a marginal value, an
exhausted search) never raise; they return result objects with a status. The
exceptions here are for inputs that cannot be analysed at all and for internal
numeric guarantees that did not hold. The CLI maps them onto its exit codes.
"""

from __future__ import annotations


class HistoriesError(Exception):
    """Base class for every error raised by :mod:`histories_lab`."""


class InvalidInputError(HistoriesError, ValueError):
    """An input violates one of its invariants.

    ``invariant`` names the first invariant that failed (e.g.
    ``"completeness violation"``) and ``magnitude`` carries the measured
    violation when there is one, so callers can report it without parsing the
    message.
    """

    def __init__(self, invariant: str, message: str, magnitude: float | None = None) -> None:
        super().__init__(f"{invariant}: {message}")
        self.invariant = invariant
        self.magnitude = magnitude


class PreconditionError(InvalidInputError):
    """An analysis was asked to run on inputs outside its precondition."""


class NumericFailure(HistoriesError, RuntimeError):
    """An internal numeric guarantee failed (e.g. a phase-law residual above 10·atol)."""
