"""Exception hierarchy shared by every module and mapped to CLI exit codes."""


class RsiForecastError(Exception):
    """Base class; the CLI prints ``<ClassName>: <message>`` and exits nonzero."""


class DataError(RsiForecastError):
    """Malformed or inconsistent market records."""


class GapError(DataError):
    """Missing or duplicated (date, hour) in an hourly series."""


class ShortageError(RsiForecastError):
    """Offered quantity cannot cover demand."""

    def __init__(self, deficit):
        super().__init__(f"offered quantity short of demand by {deficit:g} MWh")
        self.deficit = deficit


class ConfigError(RsiForecastError):
    """Invalid configuration value."""


class InsufficientDataError(RsiForecastError):
    """Not enough rows to build features, fit scaling or train."""


class TrainingError(RsiForecastError):
    """Numerical breakdown during Levenberg-Marquardt training."""


class CorrelationError(RsiForecastError):
    """Pearson coefficient undefined for the given series."""
