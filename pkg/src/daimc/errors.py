"""Exception types shared across the package."""


class DaimcError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(DaimcError, ValueError):
    pass


class NumericError(DaimcError, ArithmeticError):
    """A linear-algebra kernel failed (singular system, no convergence)."""

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


class FormatError(DaimcError, ValueError):
    """An on-disk file does not match the expected layout."""


class ConstraintViolationError(DaimcError, RuntimeError):
    pass
