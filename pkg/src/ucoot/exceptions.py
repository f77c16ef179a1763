"""Exception types raised across the package."""

from sklearn.exceptions import ConvergenceWarning

__all__ = [
    "UcootError",
    "DimensionError",
    "ConfigurationError",
    "DegenerateProblemError",
    "DataFormatError",
    "ConvergenceWarning",
]


class UcootError(Exception):
    """Base class for errors raised by this package."""


class DimensionError(UcootError, ValueError):
    """Array shapes or lengths are incompatible."""


class ConfigurationError(UcootError, ValueError):
    """Invalid combination of solver or experiment parameters."""


class DegenerateProblemError(UcootError, ValueError):
    """The problem has no mass to work with (e.g. an all-zero plan)."""


class DataFormatError(UcootError, ValueError):
    """A data file could not be parsed (ragged rows, non-numeric fields)."""
