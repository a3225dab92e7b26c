"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, NumericError -> 3.
"""


class OrthTDError(Exception):
    """Base class for package errors."""


class SchemaError(OrthTDError):
    """A feature schema violates its invariants."""


class CohortFormatError(OrthTDError):
    """A cohort or record file is malformed or violates the schema."""


class ConfigError(OrthTDError):
    """An experiment configuration is invalid."""


class NumericError(OrthTDError):
    """A numeric procedure failed (non-finite loss, calibration failure, ...)."""


class CheckpointError(OrthTDError):
    """A checkpoint file is unreadable or incompatible with the model."""
