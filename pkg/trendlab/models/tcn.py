"""
Temporal convolutional network baseline.

Each residual block is two causal dilated convolutions with ReLU, plus a
1x1 convolution on the skip path when the channel count changes. Block
``l`` uses dilation ``base ** l``. The last block narrows to one channel and
skips its final ReLU; the prediction is that channel at the last time step.
No weight normalisation.
"""

from __future__ import annotations

from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from trendlab.core import functional as F
from trendlab.core.module import CausalConv1d, Module
from trendlab.core.tensor import Tensor
from trendlab.models.base import Forecaster


def receptive_field(kernel_size: int, dilation_base: int, num_layers: int) -> int:
    """``1 + (k - 1) * sum(base ** l for l < L)``."""
    return 1 + (kernel_size - 1) * sum(dilation_base ** layer for layer in range(num_layers))


class TcnConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    kernel_size: int = Field(default=7, ge=2)
    num_filters: int = Field(default=4, ge=1)
    dilation_base: int = Field(default=2, ge=2)
    dropout: float = Field(default=0.0, ge=0.0, lt=1.0)
    sequence_length: int = Field(default=100, ge=2, description="Input window length")
    batch_size: int = Field(default=256, ge=1)
    num_layers: Optional[int] = Field(default=None, ge=1, description="Override the receptive-field rule")

    def resolved_layers(self) -> int:
        """Smallest layer count whose receptive field covers the window, unless overridden."""
        if self.num_layers is not None:
            return self.num_layers
        layers = 1
        while receptive_field(self.kernel_size, self.dilation_base, layers) < self.sequence_length:
            layers += 1
        return layers


class ResidualBlock(Module):
    def __init__(self, channels_in: int, channels_out: int, filters: int, kernel_size: int,
                 dilation: int, last: bool, dropout: float, rng: np.random.Generator):
        self.last = last
        self.dropout = dropout
        self.rng = rng
        self.conv1 = CausalConv1d(channels_in, filters, kernel_size, rng, dilation=dilation)
        self.conv2 = CausalConv1d(filters, channels_out, kernel_size, rng, dilation=dilation)
        self.skip = CausalConv1d(channels_in, channels_out, 1, rng) if channels_in != channels_out else None

    def forward(self, x: Tensor) -> Tensor:
        h = F.dropout(F.relu(self.conv1(x)), self.dropout, self.rng, self.training)
        h = self.conv2(h)
        if not self.last:
            h = F.relu(h)
        h = F.dropout(h, self.dropout, self.rng, self.training)
        return h + (x if self.skip is None else self.skip(x))


class Tcn(Forecaster):
    kind = "tcn"

    def __init__(self, config: TcnConfig = TcnConfig(), seed: int = 0):
        rng = np.random.default_rng(seed)
        self.config = config
        layers = config.resolved_layers()
        self.blocks: List[ResidualBlock] = []
        channels = 1
        for layer in range(layers):
            last = layer == layers - 1
            out = 1 if last else config.num_filters
            self.blocks.append(ResidualBlock(channels, out, config.num_filters, config.kernel_size,
                                             config.dilation_base ** layer, last, config.dropout, rng))
            channels = out

    @property
    def window_length(self) -> int:
        return self.config.sequence_length

    def forward(self, x: Tensor) -> Tensor:
        h = self.check_windows(x)
        for block in self.blocks:
            h = block(h)
        return h[:, -1, :]

    def layer_rows(self):
        return [(f"blocks.{i} (dilation {self.config.dilation_base ** i})", block)
                for i, block in enumerate(self.blocks)]


def tcn_forward(model: Tcn, windows: Tensor) -> Tensor:
    return model(windows)
