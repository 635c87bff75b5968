"""Exception types shared across the package.

Every error carries a stable ``code`` string which is also the message
prefix, so CLI consumers can match on it without parsing prose.
"""


class SpaError(Exception):
    """Base class for all failures raised by this package."""

    code = "error"

    def __init__(self, message: str):
        super().__init__(f"{self.code}: {message}")


class UsageError(SpaError):
    """Caller passed an invalid argument, flag, or configuration value."""

    code = "usage"


class DataError(SpaError):
    """Input data violates a contract (bad file, bad shape, bad values)."""

    code = "data"


class InvalidShapeError(DataError):
    code = "bad-shape"


class NonFiniteError(DataError):
    code = "non-finite"


class SptError(DataError):
    """Malformed SPT tensor file."""

    code = "spt"


class BadMagicError(SptError):
    code = "spt-bad-magic"


class UnsupportedVersionError(SptError):
    code = "spt-bad-version"


class UnsupportedDtypeError(SptError):
    code = "spt-bad-dtype"


class TruncatedFileError(SptError):
    code = "spt-truncated"


class TrailingDataError(SptError):
    code = "spt-trailing-data"


class EmptySeedError(DataError):
    """A seed mask selected no pixels."""

    code = "empty-seed"
