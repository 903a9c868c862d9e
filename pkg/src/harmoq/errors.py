"""Error taxonomy shared by every module.

Each class maps to one failure family so callers (and the CLI exit-code
mapping) can dispatch on type instead of parsing messages.
"""


class HarmoqError(Exception):
    """Base class for all package errors."""


class DimensionError(HarmoqError):
    """Shape or rank of an input does not match the contract."""


class DataError(HarmoqError):
    """Input values are unusable (non-finite, empty, out of domain)."""


class ConfigError(HarmoqError):
    """A configuration value violates its invariant."""


class StateError(HarmoqError):
    """Operation called in an invalid order (e.g. finalize before warmup)."""


class SingularityError(HarmoqError):
    """A matrix factorization failed even after stabilization."""


class NumericError(HarmoqError):
    """A numeric quantity left its valid domain during computation."""


class IOFormatError(HarmoqError):
    """A file does not conform to the expected on-disk format."""
