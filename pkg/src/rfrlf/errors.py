"""Exception taxonomy shared across the package.

The command line maps these onto exit codes: usage errors exit 2,
configuration errors exit 3, any other failure that escapes exits 1.
"""


class RfrlfError(Exception):
    """Base class for all package-defined errors."""


class ShapeMismatchError(RfrlfError, ValueError):
    """Array arguments disagree in shape, or an op's output size is not integral."""


class NumericOverflowError(RfrlfError, FloatingPointError):
    """A value or gradient became non-finite; the message names the offender."""


class ConfigurationError(RfrlfError, ValueError):
    """A config value, phase ordering, or freeze state is invalid for the request."""


class UsageError(RfrlfError, ValueError):
    """The caller invoked an interface with malformed arguments."""


class InsufficientDataError(RfrlfError, ValueError):
    """Not enough data to honor the request (e.g. no valid sample windows)."""


class DataFormatError(RfrlfError, ValueError):
    """A serialized file does not follow the declared layout."""


class DataCorruptionError(RfrlfError, ValueError):
    """A serialized file follows the layout but fails integrity checks."""
