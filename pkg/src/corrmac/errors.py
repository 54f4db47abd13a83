"""Exception types shared across the package."""


class CorrMacError(Exception):
    """Base class for all package errors."""


class InvalidParameter(CorrMacError, ValueError):
    """A configuration value is outside its admissible range."""


class InvalidInput(CorrMacError, ValueError):
    """A data value (e.g. NaN observation) cannot be processed."""


class EstimatorUndefined(InvalidParameter):
    """The reconstruction rule divides by rho and rho is zero."""


class InfeasibleConfiguration(CorrMacError):
    """The exact joint detector would exceed the configured compute cap."""


class ConfigError(CorrMacError):
    """A sweep configuration file could not be parsed."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)


class SchemaError(CorrMacError):
    """A results table is missing required columns."""
