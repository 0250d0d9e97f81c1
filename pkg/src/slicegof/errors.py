"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """A parameter value is outside the domain a sampler or statistic accepts."""


class DomainError(ValueError):
    """An input object violates an operation's precondition."""


class DataIntegrityError(ValueError):
    """Inconsistent data passed between pipeline stages (labels, hashes, ...)."""
