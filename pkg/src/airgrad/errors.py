"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """A parameter combination the simulator refuses to run with."""


class DataError(RuntimeError):
    """Dataset files are missing, malformed, or mutually inconsistent."""
