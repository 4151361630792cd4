"""Exception hierarchy shared by the library, the CLI and the service.

The CLI maps these onto exit codes: ``ConfigError`` -> 1, ``DataError`` -> 2,
``RuntimeDomainError`` -> 3.
"""


class UavlocError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(UavlocError, ValueError):
    """Invalid parameters or flag combinations."""


class DataError(UavlocError, ValueError):
    """Malformed or inconsistent input data."""


class OutOfRangeError(DataError):
    """A coordinate fell outside the valid latitude/longitude range."""


class DimensionMismatchError(DataError):
    pass


class RuntimeDomainError(UavlocError, RuntimeError):
    """A search could not run on the requested domain."""
