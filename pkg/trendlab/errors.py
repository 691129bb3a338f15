"""
Error types raised across trendlab.

Every error derives from ``TrendLabError`` which is itself a ``ValueError``,
so callers that only guard against bad input keep working.
"""

from typing import Any, Dict, Optional


class TrendLabError(ValueError):
    """Base class for all trendlab failures."""


class CsvParseError(TrendLabError):
    """A CSV row could not be parsed."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DataValidationError(CsvParseError):
    """A parsed value violates a data invariant (null field, bad OHLC range)."""


class OrderingError(TrendLabError):
    """Timestamps are not monotone."""


class DuplicateTimestampError(OrderingError):
    """Two bars share a timestamp."""


class SplitError(TrendLabError):
    """A split specification is invalid or yields an empty partition."""


class DegenerateRangeError(TrendLabError):
    """A normaliser was fitted on a constant series."""


class InsufficientDataError(TrendLabError):
    """A series is too short for the requested window."""


class DecompositionError(TrendLabError):
    """Wavelet decomposition is infeasible for the signal."""


class ReconstructionError(TrendLabError):
    """Wavelet coefficients are inconsistent with their bookkeeping."""


class DimensionError(TrendLabError):
    """Tensor shapes are incompatible."""


class BackwardError(TrendLabError):
    """Reverse-mode differentiation was requested in an invalid state."""


class NumericOverflowError(TrendLabError):
    """A recurrent activation became non-finite."""


class NonFiniteGradientError(TrendLabError):
    """An optimiser step received a NaN or infinite gradient."""


class TrainingAbortedError(TrendLabError):
    """Training stopped on a non-finite loss.

    ``last_good_state`` holds the best parameters seen before the failure.
    """

    def __init__(self, message: str, last_good_state: Optional[Dict[str, Any]] = None,
                 epoch: Optional[int] = None):
        super().__init__(message)
        self.last_good_state = last_good_state
        self.epoch = epoch


class UndefinedScaleError(TrendLabError):
    """A scaled metric has a zero denominator (constant training series)."""


class MisalignedSeriesError(TrendLabError):
    """Original and denoised series do not line up index for index."""


class ConfigError(TrendLabError):
    """An experiment configuration is invalid or unreadable."""


class DependencyError(TrendLabError):
    """A pipeline stage is missing a fresh upstream artifact."""
