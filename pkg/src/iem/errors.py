"""Exception types shared across the package."""


class IEMError(Exception):
    """Base class for package errors."""


class DataError(IEMError):
    """A file, manifest, or serialized state is missing or malformed."""


class NumericError(IEMError):
    """Training produced non-finite values (learning rate too high)."""
