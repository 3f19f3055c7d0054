"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Bad user-facing configuration: empty domains, unstable grids, unknown names."""


class NumericalError(ArithmeticError):
    """Non-finite losses, gradients or quadratures; carries diagnostics."""

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


class CheckpointError(ValueError):
    """A checkpoint that cannot be loaded: wrong format tag, version or layout."""
