"""Common surface of every next-value forecaster."""

from __future__ import annotations

from typing import ClassVar, List, Tuple

import numpy as np
from pydantic import BaseModel, Field

from trendlab.core.module import Module
from trendlab.core.tensor import Tensor
from trendlab.errors import DimensionError

PREDICT_BATCH = 256


class ParameterSummary(BaseModel):
    """Total trainable parameters with one row per top-level layer."""

    rows: List[Tuple[str, int]] = Field(description="(layer name, parameter count) in build order")
    total: int

    def to_markdown(self) -> str:
        lines = ["| Layer | Param # |", "|---|---:|"]
        lines += [f"| {name} | {count:,} |" for name, count in self.rows]
        lines.append(f"| **Total** | **{self.total:,}** |")
        return "\n".join(lines)


class Forecaster(Module):
    """A model mapping ``(batch, window_length, 1)`` windows to ``(batch, 1)`` predictions."""

    kind: ClassVar[str] = "base"

    @property
    def window_length(self) -> int:
        raise NotImplementedError

    def check_windows(self, x: Tensor) -> Tensor:
        if x.ndim == 2:
            x = x.reshape(x.shape + (1,))
        if x.ndim != 3 or x.shape[1] != self.window_length or x.shape[2] != 1:
            raise DimensionError(
                f"{self.kind} expects windows of shape (batch, {self.window_length}, 1), got {x.shape}")
        return x

    def layer_rows(self) -> List[Tuple[str, Module]]:
        """Top-level layers reported in the parameter summary."""
        return []

    def parameter_summary(self) -> ParameterSummary:
        rows = [(name, layer.num_parameters()) for name, layer in self.layer_rows()]
        return ParameterSummary(rows=rows, total=self.num_parameters())

    def predict(self, windows, batch_size: int = PREDICT_BATCH) -> np.ndarray:
        """Batched inference without recording a tape; returns ``(N,)`` predictions."""
        windows = np.asarray(windows, dtype=np.float64)
        was_training = self.training
        self.eval()
        try:
            out = [self.forward(Tensor(windows[i:i + batch_size])).data.reshape(-1)
                   for i in range(0, windows.shape[0], batch_size)]
        finally:
            self.train(was_training)
        return np.concatenate(out) if out else np.zeros(0)
