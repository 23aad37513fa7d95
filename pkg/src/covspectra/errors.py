"""Exception types shared across the package."""


class CovspectraError(Exception):
    """Base class for all package-specific errors."""


class DomainError(CovspectraError, ValueError):
    """An input lies outside the mathematical domain of an operation."""


class SolverError(CovspectraError, RuntimeError):
    """An iterative solver failed to reach its tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class StructureError(CovspectraError, RuntimeError):
    """The support structure could not be resolved (bracket or count failure)."""


class ConfigError(CovspectraError, ValueError):
    """An experiment or CLI configuration is invalid."""


class DataError(CovspectraError, ValueError):
    """Input data is degenerate or otherwise unusable."""
