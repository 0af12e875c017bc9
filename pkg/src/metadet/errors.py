"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError (and plain
OSError) -> 3, everything raised by a failed property check -> 1.
"""


class MetadetError(Exception):
    """Base class for package errors."""


class ShapeError(MetadetError):
    """Operands have incompatible shapes or dtypes."""


class ConfigError(MetadetError):
    """Invalid or unknown configuration value."""


class VocabularyError(ConfigError):
    """A categorical metadata value is outside the fixed vocabulary."""


class DataError(MetadetError):
    """A data file is malformed or inconsistent with its sidecar."""


class SerializationError(DataError):
    """A tensor container is malformed; message names the byte offset."""


class NumericsError(MetadetError):
    """A forward op produced NaN or Inf from finite inputs."""


class VerificationFailure(MetadetError):
    """A property check in the verification battery failed."""
