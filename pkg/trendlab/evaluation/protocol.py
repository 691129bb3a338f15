"""
Train-on-denoised, score-on-original evaluation.

Model inputs are windows of the normalised denoised series; predictions are
mapped back to price scale and compared with the ORIGINAL closes. Each
partition is windowed on its own: no window spans a partition boundary, so
the first ``window_length`` points of every partition only serve as inputs.
"""

from __future__ import annotations

import io
import json
import logging
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from trendlab.data.series_io import PARTITIONS, Normaliser, SplitResult, WindowedDataset, make_windows
from trendlab.errors import InsufficientDataError, MisalignedSeriesError
from trendlab.evaluation.metrics import (
    DirectionalScores,
    MetricInput,
    RegressionScores,
    ZeroChangePolicy,
    direction_labels,
    directional_scores,
    outcome_from_labels,
    regression_scores,
)
from trendlab.models.base import Forecaster

logger = logging.getLogger(__name__)

DirectionBaseline = Literal["original", "denoised", "prediction"]
Bounds = Tuple[int, int]


class EvaluationSettings(BaseModel):
    model_config = ConfigDict(frozen=True)

    direction_baseline: DirectionBaseline = Field(
        default="original", description="Price the predicted move is measured from")
    zero_change: ZeroChangePolicy = Field(default="fall", description="Label of an unchanged price")


def partition_windows(values, bounds: Bounds, window_length: int) -> WindowedDataset:
    """Windows built inside ``bounds`` only; the first ``window_length`` points of a partition are never targets."""
    lo, hi = bounds
    if hi - lo <= window_length:
        raise InsufficientDataError(
            f"partition {bounds} holds {hi - lo} points, too few for windows of length {window_length}")
    return make_windows(np.asarray(values, dtype=np.float64)[lo:hi], window_length, offset=lo)


class PartitionEvaluation(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    partition: str
    count: int
    regression: RegressionScores
    directional: DirectionalScores
    positions: Optional[np.ndarray] = Field(default=None, exclude=True, repr=False)
    actual: Optional[np.ndarray] = Field(default=None, exclude=True, repr=False)
    predicted: Optional[np.ndarray] = Field(default=None, exclude=True, repr=False)
    reference: Optional[np.ndarray] = Field(default=None, exclude=True, repr=False)
    true_rise: Optional[np.ndarray] = Field(default=None, exclude=True, repr=False)
    predicted_rise: Optional[np.ndarray] = Field(default=None, exclude=True, repr=False)

    def plot_frame(self, timestamps: Optional[np.ndarray] = None) -> pd.DataFrame:
        """Actual against predicted with a per-point flag for a correctly called direction."""
        frame = pd.DataFrame({
            "position": self.positions,
            "actual": self.actual,
            "predicted": self.predicted,
            "reference": self.reference,
            "true_direction": np.where(self.true_rise == 1, "rise", "fall"),
            "predicted_direction": np.where(self.predicted_rise == 1, "rise", "fall"),
            "correct": self.true_rise == self.predicted_rise,
        })
        if timestamps is not None:
            frame.insert(1, "timestamp", pd.to_datetime(np.asarray(timestamps)[self.positions]))
        return frame


class EvaluationReport(BaseModel):
    model_kind: str
    symbol: str = ""
    settings: EvaluationSettings
    partitions: Dict[str, PartitionEvaluation]

    @property
    def test(self) -> PartitionEvaluation:
        return self.partitions["test"]

    def to_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), indent=2, sort_keys=True) + "\n"

    def plot_csv(self, timestamps: Optional[np.ndarray] = None) -> str:
        frames = []
        for name in PARTITIONS:
            frame = self.partitions[name].plot_frame(timestamps)
            frame.insert(0, "partition", name)
            frames.append(frame)
        buffer = io.StringIO()
        pd.concat(frames, ignore_index=True).to_csv(buffer, index=False, float_format="%.17g",
                                                     lineterminator="\n", date_format="%Y-%m-%dT%H:%M:%S")
        return buffer.getvalue()


def _reference_prices(baseline: DirectionBaseline, original: np.ndarray, denoised: np.ndarray,
                      positions: np.ndarray, predicted: np.ndarray) -> np.ndarray:
    if baseline == "original":
        return original[positions - 1]
    if baseline == "denoised":
        return denoised[positions - 1]
    # previous prediction; the first point has none and falls back to the last observed price
    reference = np.empty_like(predicted)
    reference[0] = original[positions[0] - 1]
    reference[1:] = predicted[:-1]
    return reference


def evaluate_partition(model: Forecaster, name: str, original: np.ndarray, denoised: np.ndarray,
                       bounds: Bounds, train_bounds: Bounds, normaliser: Normaliser,
                       settings: EvaluationSettings) -> PartitionEvaluation:
    windows = partition_windows(normaliser.apply(denoised), bounds, model.window_length)
    positions = windows.source_indices
    predicted = normaliser.inverse(model.predict(windows.inputs, batch_size=getattr(model.config, "batch_size", 256)))
    actual = original[positions]
    reference = _reference_prices(settings.direction_baseline, original, denoised, positions, predicted)

    # the true move is always measured from the last original price
    true_rise = direction_labels(original[positions - 1], actual, settings.zero_change)
    predicted_rise = direction_labels(reference, predicted, settings.zero_change)
    outcome = outcome_from_labels(true_rise, predicted_rise)

    train_prices = original[train_bounds[0]:train_bounds[1]]
    regression = regression_scores(MetricInput.checked(train_prices, actual, predicted))
    return PartitionEvaluation(partition=name, count=int(positions.size), regression=regression,
                               directional=directional_scores(outcome), positions=positions, actual=actual,
                               predicted=predicted, reference=reference, true_rise=true_rise,
                               predicted_rise=predicted_rise)


def evaluate_protocol(model: Forecaster, original_series, denoised_series,
                      splits: SplitResult | Sequence[Bounds], normaliser: Normaliser,
                      settings: EvaluationSettings = EvaluationSettings(), symbol: str = "") -> EvaluationReport:
    """Score ``model`` on every partition against the original prices."""
    original = np.asarray(original_series, dtype=np.float64).reshape(-1)
    denoised = np.asarray(denoised_series, dtype=np.float64).reshape(-1)
    if original.shape != denoised.shape:
        raise MisalignedSeriesError(
            f"original series has {original.size} points but the denoised one has {denoised.size}")
    bounds: List[Bounds] = list(splits.bounds if isinstance(splits, SplitResult) else splits)
    if len(bounds) != 3 or bounds[-1][1] > original.size:
        raise MisalignedSeriesError(f"split bounds {bounds} do not fit a series of {original.size} points")

    partitions = {name: evaluate_partition(model, name, original, denoised, b, bounds[0], normaliser, settings)
                  for name, b in zip(PARTITIONS, bounds)}
    test = partitions["test"].directional
    logger.info("%s %s: test accuracy %s, MASE %s", model.kind, symbol or "<unnamed>",
                "n/a" if test.accuracy is None else f"{test.accuracy:.4f}",
                "n/a" if partitions["test"].regression.mase is None else f"{partitions['test'].regression.mase:.4f}")
    return EvaluationReport(model_kind=model.kind, symbol=symbol, settings=settings, partitions=partitions)
