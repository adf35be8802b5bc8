"""Exception types shared across the package."""


class ParameterError(ValueError):
    """Invalid argument value or shape."""


class ParseError(ValueError):
    """Malformed input file."""


class ProtocolError(RuntimeError):
    """An operation was asked to run outside the setting it is defined for."""


class TrainingError(RuntimeError):
    """Optimisation produced a non-finite objective."""

    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"non-finite loss at step {step}")


class NumericError(ArithmeticError):
    """A numerical evaluation returned a non-finite value."""


class InternalError(RuntimeError):
    """Broken internal invariant; indicates a bug."""
