"""Exception taxonomy shared across the package.

The CLI maps ConfigError, ParseError, and DataError to exit code 2
(usage or input problems); everything else is a runtime failure (exit 1).
"""


class ClinliError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(ClinliError):
    """Invalid configuration value or combination."""


class DataError(ClinliError):
    """Malformed or inconsistent input data."""


class DimensionError(ClinliError):
    """Tensor shapes incompatible with the requested operation."""


class NumericError(ClinliError):
    """Non-finite values where finite ones are required."""


class ContractError(ClinliError):
    """An operation was called outside its contract."""


class ParseError(ClinliError):
    """A file could not be parsed."""
