"""Previous-value forecast: the reference the scaled metrics divide by."""

from typing import Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from trendlab.core.tensor import Tensor
from trendlab.errors import InsufficientDataError
from trendlab.models.base import Forecaster


def naive_forecast(series, positions: Sequence[int]) -> np.ndarray:
    """Prediction at each position ``t`` is the observed value at ``t - 1``."""
    values = np.asarray(series, dtype=np.float64)
    idx = np.asarray(positions, dtype=np.int64)
    if idx.size and (idx.min() < 1 or idx.max() >= values.size):
        raise InsufficientDataError(f"positions must lie in 1..{values.size - 1}; position 0 has no predecessor")
    return values[idx - 1]


class NaiveConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    sequence_length: int = Field(default=1, ge=1, description="Window length; only the last value is read")
    batch_size: int = Field(default=256, ge=1)


class NaiveForecaster(Forecaster):
    """Window-shaped wrapper so the naive method runs through the same pipeline as trained models."""

    kind = "naive"

    def __init__(self, config: NaiveConfig = NaiveConfig(), seed: int = 0):
        self.config = config

    @property
    def window_length(self) -> int:
        return self.config.sequence_length

    def forward(self, x: Tensor) -> Tensor:
        return self.check_windows(x)[:, -1, :]
