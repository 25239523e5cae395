"""Exception types shared across the package."""


class InputError(ValueError):
    """Caller passed arguments that violate an operation's preconditions."""


class DomainError(ValueError):
    """A quantity is mathematically undefined for the given input."""


class RunError(RuntimeError):
    """A pipeline stage could not complete (missing artifact, broken contract)."""

    def __init__(self, message: str, stage: str | None = None):
        super().__init__(message)
        self.stage = stage
