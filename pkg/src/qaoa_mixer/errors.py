"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes (usage 2, capacity 3, numeric 4).
"""


class QaoaMixerError(Exception):
    """Base class for all package errors."""


class InputError(QaoaMixerError, ValueError):
    """Malformed or out-of-contract input."""


class DimensionError(InputError):
    """Operands over different qubit counts or mismatched shapes."""


class CapacityError(QaoaMixerError):
    """Requested work exceeds a configured size cap.

    ``partial`` carries whatever was computed before the cap was hit.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class NumericError(QaoaMixerError, ArithmeticError):
    """Non-finite values or an iterative method that failed to converge.

    ``trace`` optionally carries the history leading up to the failure.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class UnsupportedError(QaoaMixerError):
    """Operation is not defined for this gate/generator class."""


class ConsistencyError(QaoaMixerError):
    """Two results that must agree do not (e.g. ratio above 1)."""


class InvariantViolation(QaoaMixerError):
    """A contract the caller relied on was broken (e.g. a frozen model changed)."""
