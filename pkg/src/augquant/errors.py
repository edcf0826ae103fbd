"""Exception types shared across the package."""


class ContractError(ValueError):
    """A caller violated a documented precondition (dimension mismatch, bad range)."""


class NumericalError(RuntimeError):
    """A numerical operation failed beyond tolerance (non-PSD covariance, singular solve)."""


class ConfigError(ValueError):
    """A run configuration is malformed or inconsistent."""
