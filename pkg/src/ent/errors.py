"""Exception taxonomy shared across the package.

Each class maps to a distinct CLI exit code so scripted callers can tell
bad arguments, bad files, and numerical blow-ups apart.
"""


class EntError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class ArgumentError(EntError):
    """Invalid argument, configuration value, or precondition violation."""

    exit_code = 2


class FormatError(EntError):
    """Malformed file: bad magic, truncated payload, version mismatch."""

    exit_code = 3


class NumericError(EntError):
    """Non-finite value where a finite one is required."""

    exit_code = 4
