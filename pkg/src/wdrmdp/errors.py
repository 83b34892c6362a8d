"""Exception types raised by the solver library."""


class StructuralError(ValueError):
    """Array shapes or probability constraints do not match the problem data."""


class ConfigurationError(ValueError):
    """Unsupported or invalid configuration (e.g. an unknown metric/order pair)."""


class InfeasibleError(ValueError):
    """A constraint set passed to a projection is empty."""


class NumericalError(RuntimeError):
    """An iterative routine failed to bracket or converge."""

    def __init__(self, message, **diagnostics):
        self.diagnostics = diagnostics
        if diagnostics:
            detail = ", ".join(f"{k}={v!r}" for k, v in diagnostics.items())
            message = f"{message} ({detail})"
        super().__init__(message)
