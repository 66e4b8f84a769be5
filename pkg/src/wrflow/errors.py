"""Exception hierarchy shared by every wrflow module."""


class WRFlowError(Exception):
    """Base class for all errors raised by wrflow."""


class DimensionMismatch(WRFlowError, ValueError):
    """Operands live in spaces of different dimension."""


class NotPsd(WRFlowError, ValueError):
    """A matrix has an eigenvalue below the clipping threshold."""

    def __init__(self, message, min_eigenvalue=None):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue


class NotProjection(WRFlowError, ValueError):
    """A matrix is not a symmetric idempotent."""


class NotInK(WRFlowError, ValueError):
    """A vector has a component outside the requested subspace."""


class LedgerMissing(WRFlowError):
    """An energy report was requested from a trace recorded without the ledger."""


class MethodDisagreement(WRFlowError):
    """The two shorted-operator constructions disagree beyond tolerance."""

    def __init__(self, message, discrepancy):
        super().__init__(message)
        self.discrepancy = discrepancy


class OrderViolation(WRFlowError, ValueError):
    """A required Loewner inequality does not hold."""

    def __init__(self, message, margin=None):
        super().__init__(message)
        self.margin = margin


class ParseError(WRFlowError, ValueError):
    """An input file is malformed."""


class ValidationError(WRFlowError, ValueError):
    """An input file parsed but violates the invariant of its declared kind."""


class IoError(WRFlowError, OSError):
    """A file could not be read or written; the message names the path."""
