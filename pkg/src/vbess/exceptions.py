"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Raised when inputs or configuration violate a documented precondition."""


class IngestionError(ValidationError):
    """Raised when a profile or tariff file cannot be turned into valid data."""


class SolverError(RuntimeError):
    """Raised when an optimization does not reach an optimal status."""

    def __init__(self, message, step=None, diagnostics=None):
        super().__init__(message)
        self.step = step
        self.diagnostics = diagnostics or {}
