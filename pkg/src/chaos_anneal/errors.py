"""Exception types shared across the simulation tiers."""


class ChaosAnnealError(Exception):
    """Base class for all package errors."""


class ParameterError(ChaosAnnealError, ValueError):
    """A physical or dimensionless parameter violates its constraints."""


class MisuseError(ChaosAnnealError, ValueError):
    """An operation was called outside its documented domain."""


class DivergenceError(ChaosAnnealError, RuntimeError):
    """A trajectory exceeded the blow-up bound.

    Carries the last time at which the state was still valid.
    """

    def __init__(self, message, last_valid_time=None):
        super().__init__(message)
        self.last_valid_time = last_valid_time


class StabilityError(ChaosAnnealError, RuntimeError):
    """The integrator step size violates the stability bound."""


class StepSizeError(ChaosAnnealError, RuntimeError):
    """Jump probabilities grew too large for the chosen time step."""


class BudgetError(ChaosAnnealError, MemoryError):
    """A requested Hilbert-space size exceeds the configured budget."""


class AnalysisError(ChaosAnnealError, ValueError):
    """Spectral analysis input is malformed (non-uniform grid, no peak)."""


class ConfigError(ChaosAnnealError, ValueError):
    """A run configuration is missing or has an invalid key."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key
