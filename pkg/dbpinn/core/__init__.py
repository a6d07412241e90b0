"""
Core numerics for dbpinn
Error hierarchy shared by every core module
"""


class DBPINNError(Exception):
    """Base class for all dbpinn failures"""


class ConfigurationError(DBPINNError):
    """Invalid configuration value; the message names the offending key"""


class UsageError(DBPINNError):
    """API misuse (wrong lengths, disconnected tape, invalid step counter)"""


class NumericOverflowError(DBPINNError):
    """A non-finite value appeared where a finite one is required"""


class DegenerateStatisticError(DBPINNError):
    """A gradient statistic has no meaningful value (zero variance or zero scale)"""


class WeightOverflowError(DBPINNError):
    """An adaptive loss weight became non-finite"""


class DegenerateReferenceError(DBPINNError):
    """The reference field has zero norm, so relative errors are undefined"""


class TrainingAborted(DBPINNError):
    """
    Raised by ``train`` when a numeric failure stops the run.

    ``record`` is the last-good RunRecord (history up to the failing step,
    parameters from before the failing update).
    """

    def __init__(self, diagnostic: str, record=None):
        super().__init__(diagnostic)
        self.diagnostic = diagnostic
        self.record = record


__all__ = [
    "DBPINNError",
    "ConfigurationError",
    "UsageError",
    "NumericOverflowError",
    "DegenerateStatisticError",
    "WeightOverflowError",
    "DegenerateReferenceError",
    "TrainingAborted",
]
