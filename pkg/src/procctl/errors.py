"""Exception hierarchy shared by all procctl modules."""


class ProcctlError(Exception):
    """Base class for every error raised by procctl."""


class InvalidDimensionError(ProcctlError, ValueError):
    pass


class DimensionError(ProcctlError, ValueError):
    pass


class NumericError(ProcctlError, ArithmeticError):
    pass


class InvalidGridError(ProcctlError, ValueError):
    pass


class DomainError(ProcctlError, ValueError):
    pass


class PinnedPointViolation(ProcctlError, ValueError):
    """A field deviates from its reference where the shape function is zero."""


class DegenerateInputError(ProcctlError, ValueError):
    pass


class InvalidTargetError(ProcctlError, ValueError):
    pass


class InvalidScenarioError(ProcctlError, ValueError):
    pass


class StepFailure(ProcctlError, RuntimeError):
    """The implicit per-step field equation did not converge."""


class NonmonotonicAbort(ProcctlError, RuntimeError):
    """Krotov retries were exhausted without restoring monotonic descent."""

    def __init__(self, message, records=None):
        super().__init__(message)
        self.records = records or []


class ConfigError(ProcctlError, ValueError):
    """Invalid run configuration; ``line`` points into the source file when known."""

    def __init__(self, message, line=None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
