"""
Regression and directional-movement metrics.

Scaled errors divide by the in-sample one-step naive error of the training
series, so values below 1 beat the previous-value forecast. Directional
counts treat Rise as the positive class. Ratio metrics whose denominator is
zero return ``None`` rather than 0.
"""

from __future__ import annotations

import math
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from sklearn.metrics import confusion_matrix, mean_absolute_error, mean_squared_error

from trendlab.errors import InsufficientDataError, MisalignedSeriesError, UndefinedScaleError

ZeroChangePolicy = Literal["fall", "rise"]


class MetricInput(BaseModel):
    """Training history plus aligned test actuals and predictions, all on price scale."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    train: np.ndarray = Field(description="y_1..y_n, denominators of the scaled metrics")
    actual: np.ndarray = Field(description="y_{n+1}..y_{n+h}")
    predicted: np.ndarray = Field(description="Forecasts aligned with ``actual``")

    @model_validator(mode="before")
    @classmethod
    def _as_arrays(cls, data):
        if isinstance(data, dict):
            data = {key: np.asarray(value, dtype=np.float64).reshape(-1) if key in cls.model_fields else value
                    for key, value in data.items()}
        return data

    @classmethod
    def checked(cls, train, actual, predicted) -> "MetricInput":
        """Build and validate, raising trendlab errors rather than a pydantic ValidationError."""
        data = cls(train=train, actual=actual, predicted=predicted)
        data.check()
        return data

    def check(self) -> "MetricInput":
        if self.actual.size == 0:
            raise InsufficientDataError("metrics need at least one forecast (h = 0)")
        if self.actual.shape != self.predicted.shape:
            raise MisalignedSeriesError(
                f"{self.actual.size} actual values but {self.predicted.size} predictions")
        if self.train.size < 2:
            raise InsufficientDataError(f"scaled metrics need a training series of length >= 2, got {self.train.size}")
        for name in ("train", "actual", "predicted"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise InsufficientDataError(f"{name} contains non-finite values")
        return self

    @property
    def h(self) -> int:
        return int(self.actual.size)

    @property
    def n(self) -> int:
        return int(self.train.size)


def mae(data: MetricInput) -> float:
    return float(mean_absolute_error(data.actual, data.predicted))


def rmse(data: MetricInput) -> float:
    return math.sqrt(mean_squared_error(data.actual, data.predicted))


def _naive_scale(train: np.ndarray, squared: bool) -> float:
    diffs = np.diff(train)
    scale = float(np.mean(diffs * diffs)) if squared else float(np.mean(np.abs(diffs)))
    if scale == 0.0:
        raise UndefinedScaleError("training series is constant; the naive in-sample error is zero")
    return scale


def mase(data: MetricInput) -> float:
    return mae(data) / _naive_scale(data.train, squared=False)


def rmsse(data: MetricInput) -> float:
    return math.sqrt(mean_squared_error(data.actual, data.predicted) / _naive_scale(data.train, squared=True))


class DirectionalOutcome(BaseModel):
    model_config = ConfigDict(frozen=True)

    tp: int = Field(default=0, ge=0)
    fp: int = Field(default=0, ge=0)
    tn: int = Field(default=0, ge=0)
    fn: int = Field(default=0, ge=0)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def direction_labels(reference, values, zero_change: ZeroChangePolicy = "fall") -> np.ndarray:
    """1 for Rise, 0 for Fall; an unchanged value follows ``zero_change``."""
    delta = np.asarray(values, dtype=np.float64) - np.asarray(reference, dtype=np.float64)
    if zero_change == "rise":
        return (delta >= 0).astype(np.int64)
    return (delta > 0).astype(np.int64)


def directional_outcomes(prev_actuals, actuals, predictions,
                         zero_change: ZeroChangePolicy = "fall") -> DirectionalOutcome:
    prev_actuals = np.asarray(prev_actuals, dtype=np.float64).reshape(-1)
    actuals = np.asarray(actuals, dtype=np.float64).reshape(-1)
    predictions = np.asarray(predictions, dtype=np.float64).reshape(-1)
    if not (prev_actuals.size == actuals.size == predictions.size):
        raise MisalignedSeriesError(
            f"length mismatch: {prev_actuals.size} previous, {actuals.size} actual, {predictions.size} predicted")
    return outcome_from_labels(direction_labels(prev_actuals, actuals, zero_change),
                               direction_labels(prev_actuals, predictions, zero_change))


def outcome_from_labels(true_rise, predicted_rise) -> DirectionalOutcome:
    """Confusion counts from 0/1 direction labels, Rise positive."""
    true_rise = np.asarray(true_rise, dtype=np.int64).reshape(-1)
    predicted_rise = np.asarray(predicted_rise, dtype=np.int64).reshape(-1)
    if true_rise.size != predicted_rise.size:
        raise MisalignedSeriesError(f"{true_rise.size} true labels but {predicted_rise.size} predicted labels")
    if true_rise.size == 0:
        return DirectionalOutcome()
    tn, fp, fn, tp = confusion_matrix(true_rise, predicted_rise, labels=[0, 1]).ravel()
    return DirectionalOutcome(tp=int(tp), fp=int(fp), tn=int(tn), fn=int(fn))


def _ratio(numerator: int, denominator: int) -> Optional[float]:
    return numerator / denominator if denominator else None


def accuracy(outcome: DirectionalOutcome) -> Optional[float]:
    return _ratio(outcome.tp + outcome.tn, outcome.total)


def recall(outcome: DirectionalOutcome) -> Optional[float]:
    return _ratio(outcome.tp, outcome.tp + outcome.fn)


def precision_rise(outcome: DirectionalOutcome) -> Optional[float]:
    return _ratio(outcome.tp, outcome.tp + outcome.fp)


def precision_fall(outcome: DirectionalOutcome) -> Optional[float]:
    return _ratio(outcome.tn, outcome.tn + outcome.fn)


def f1(outcome: DirectionalOutcome) -> Optional[float]:
    """Harmonic mean of Rise precision and recall; 0 when both are defined and TP is 0."""
    precision, rec = precision_rise(outcome), recall(outcome)
    if precision is None or rec is None:
        return None
    if precision + rec == 0:
        return 0.0
    return 2 * precision * rec / (precision + rec)


class RegressionScores(BaseModel):
    mae: float
    rmse: float
    rmsse: Optional[float]
    mase: Optional[float]


class DirectionalScores(BaseModel):
    outcome: DirectionalOutcome
    accuracy: Optional[float]
    recall: Optional[float]
    precision_rise: Optional[float]
    precision_fall: Optional[float]
    f1: Optional[float]


def regression_scores(data: MetricInput) -> RegressionScores:
    """All four error metrics; scaled ones are ``None`` for a constant training series."""
    try:
        scaled = (rmsse(data), mase(data))
    except UndefinedScaleError:
        scaled = (None, None)
    return RegressionScores(mae=mae(data), rmse=rmse(data), rmsse=scaled[0], mase=scaled[1])


def directional_scores(outcome: DirectionalOutcome) -> DirectionalScores:
    return DirectionalScores(outcome=outcome, accuracy=accuracy(outcome), recall=recall(outcome),
                             precision_rise=precision_rise(outcome), precision_fall=precision_fall(outcome),
                             f1=f1(outcome))
