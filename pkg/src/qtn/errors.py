"""Exception hierarchy shared by every qtn module."""

from __future__ import annotations


class QtnError(Exception):
    """Base class for all library errors."""


class InvalidArgument(QtnError, ValueError):
    """Malformed arguments: bad shapes, permutations, out-of-range coordinates."""


class ResourceError(QtnError):
    """The world does not have enough ranks (or memory budget) for the request."""

    def __init__(self, message: str, required: int | None = None):
        super().__init__(message)
        self.required = required


class ProtocolError(QtnError):
    """Ranks disagreed on a collective call (kind, root, or message sizes)."""


class WorldAborted(QtnError):
    """Raised inside a rank context when another rank of the same world failed."""


class NumericalError(QtnError):
    """A numerical kernel did not converge or produced non-finite values."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class DegenerateStateError(QtnError):
    """Operation undefined for a zero-norm state."""


class PreconditionError(QtnError):
    """Input violates a documented precondition (e.g. sampling a non-normalised MPS)."""
