"""Exception types shared across the package."""


class DomainError(ValueError):
    """An abscissa or invariant lies outside a spline's interpolation range."""


class DatasetError(ValueError):
    """Malformed experiment data."""


class ConfigError(ValueError):
    """Invalid configuration key or value."""


class NumericalError(RuntimeError):
    """A solve failed (infeasible constraints, divergence, singular system)."""
