"""Exception types shared across the package."""


class IBFError(Exception):
    """Base class for all errors raised by :mod:`ibf`."""


class ParameterError(IBFError, ValueError):
    """An argument is outside its admissible range."""


class DomainError(IBFError, ValueError):
    """A point lies outside the domain it is being partitioned over."""


class StructureError(IBFError):
    """Factor shapes or block patterns are inconsistent."""


class FormatError(IBFError):
    """A serialized stream is malformed, truncated or of the wrong version."""


class AccuracyError(IBFError):
    """An error metric could not be evaluated (e.g. an all-zero reference)."""
