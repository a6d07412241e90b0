"""dbpinn - physics-informed neural networks with dual-balanced loss weighting"""

from dbpinn.core import (
    ConfigurationError,
    DBPINNError,
    DegenerateReferenceError,
    DegenerateStatisticError,
    NumericOverflowError,
    TrainingAborted,
    UsageError,
    WeightOverflowError,
)

__version__ = "0.1.0"

__all__ = [
    "DBPINNError",
    "ConfigurationError",
    "UsageError",
    "NumericOverflowError",
    "DegenerateStatisticError",
    "WeightOverflowError",
    "DegenerateReferenceError",
    "TrainingAborted",
    "__version__",
]
