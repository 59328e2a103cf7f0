"""Exception types shared across the package."""


class DistilShieldError(Exception):
    """Base class for all package errors."""


class ConfigError(DistilShieldError, ValueError):
    """Invalid configuration: bad keys, bad values, or layer dims that do not chain."""


class ParameterError(DistilShieldError, ValueError):
    """An argument is outside its allowed range."""


class ShapeError(DistilShieldError, ValueError):
    """Array dimensions do not match what an operation expects."""


class DataError(DistilShieldError, ValueError):
    """Dataset-level inconsistency: empty data, count mismatches, pixels out of range."""


class FormatError(DistilShieldError, ValueError):
    """A serialized artifact does not follow its expected format."""


class NumericalError(DistilShieldError):
    """Non-finite values appeared where finite numbers are required."""


class StageError(DistilShieldError):
    """A pipeline stage failed; carries the stage name for diagnostics."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
