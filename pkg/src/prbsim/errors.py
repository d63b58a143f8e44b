"""Exception hierarchy shared across the simulator."""


class PrbsimError(Exception):
    """Base class for all simulator errors."""


class ConfigError(PrbsimError):
    """Invalid configuration value or unknown configuration key."""


class DataError(PrbsimError):
    """Problem with an input artifact (trace, checkpoint, report)."""


class NumericError(PrbsimError):
    """A computation produced non-finite values."""
