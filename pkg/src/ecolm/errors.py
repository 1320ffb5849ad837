"""Exception types shared across the package."""


class EcolmError(Exception):
    """Base class for all errors raised by ecolm."""


class EmptyCorpusError(EcolmError):
    """Raised when the input text contains no tokens."""


class InsufficientTokensError(EcolmError):
    """Raised when a token stream is shorter than one block."""


class DegenerateSplitError(EcolmError):
    """Raised when a train/validation/test partition leaves a split empty."""


class EmptyTrainingDataError(EcolmError):
    """Raised when a model is fitted on an empty shard."""


class OracleTooLargeError(EcolmError):
    """Raised when exhaustive search would enumerate too many continuations."""


class DomainError(EcolmError):
    """Raised when a metric is evaluated outside its domain."""


class ConfigError(EcolmError):
    """Raised for invalid run or sweep configurations."""


class RecordError(EcolmError):
    """Raised when persisted run records are missing or corrupt."""
