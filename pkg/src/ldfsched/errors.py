"""Exception types shared across the package."""


class CapacityError(ValueError):
    """An operation was asked to enumerate beyond its configured cap."""


class EstimationModeError(ValueError):
    """Exact estimation was requested for a model that only supports Monte Carlo."""


class DegenerateError(ValueError):
    """A quantity is undefined for the given inputs (e.g. an all-zero projection)."""


class ConfigError(ValueError):
    """A model/experiment description file failed schema validation."""
