"""Exception hierarchy shared by every stage of the pipeline."""


class RpadError(Exception):
    """Base class for all package errors."""


class ConfigurationError(RpadError, ValueError):
    """Inconsistent shapes, counts or hyperparameters."""


class DataError(RpadError, ValueError):
    """Input data that cannot be processed (zero rows, non-finite values, bad CSV)."""


class UndefinedMetricError(RpadError, ValueError):
    """A ranking metric was requested on single-class labels."""


class TrainingDivergedError(RpadError, RuntimeError):
    """The training loss became non-finite."""


class SchemaVersionError(RpadError, ValueError):
    """A stored report or checkpoint has an unsupported schema version."""
