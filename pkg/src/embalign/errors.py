"""Exception types.  CLI exit codes hang off these (see ``embalign.cli``)."""


class EmbalignError(Exception):
    """Base class for all library errors."""


class ConfigError(EmbalignError, ValueError):
    """Bad configuration or argument values."""


class DataError(EmbalignError, ValueError):
    """Input data is malformed, mismatched or degenerate."""


class ConvergenceError(EmbalignError, ArithmeticError):
    """An iterative routine hit its iteration cap."""


class TrainingError(EmbalignError, ArithmeticError):
    """Training diverged (non-finite loss)."""

    def __init__(self, message, epoch=None):
        super().__init__(message if epoch is None else f"{message} (epoch {epoch})")
        self.epoch = epoch


class NetworkError(EmbalignError):
    """Embedding service could not be reached after retries."""

    def __init__(self, message, failed_ids=()):
        super().__init__(message)
        self.failed_ids = list(failed_ids)
