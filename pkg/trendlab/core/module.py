"""
Parameter containers and the layers the forecasting models are assembled from.
"""

from __future__ import annotations

import math
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from trendlab.core import functional as F
from trendlab.core.tensor import Tensor
from trendlab.errors import DimensionError


class Parameter(Tensor):
    """Trainable leaf tensor."""

    def __init__(self, data, name: Optional[str] = None):
        super().__init__(data, requires_grad=True, name=name)


def uniform_init(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Module:
    """Base class: parameters and child modules are discovered from attributes.

    Attribute order is registration order, so parameter names and their
    iteration order are stable across runs.
    """

    training: bool = True

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def _children(self) -> Iterator[Tuple[str, object]]:
        for name, value in vars(self).items():
            if isinstance(value, (Parameter, Module)):
                yield name, value
            elif isinstance(value, (list, tuple)) and value and all(isinstance(v, Module) for v in value):
                for index, child in enumerate(value):
                    yield f"{name}.{index}", child

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        for name, value in self._children():
            full = f"{prefix}{name}"
            if isinstance(value, Parameter):
                yield full, value
            else:
                yield from value.named_parameters(prefix=f"{full}.")

    def named_modules(self, prefix: str = "") -> Iterator[Tuple[str, "Module"]]:
        for name, value in self._children():
            if isinstance(value, Module):
                full = f"{prefix}{name}"
                yield full, value
                yield from value.named_modules(prefix=f"{full}.")

    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def train(self, mode: bool = True) -> "Module":
        self.training = mode
        for _, child in self.named_modules():
            child.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        missing = sorted(set(params) - set(state))
        unexpected = sorted(set(state) - set(params))
        if missing or unexpected:
            raise DimensionError(f"state mismatch: missing {missing}, unexpected {unexpected}")
        for name, p in params.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != p.shape:
                raise DimensionError(f"state for {name}: shape {value.shape} does not match {p.shape}")
            p.data = value.copy()


class Linear(Module):
    """``y = x W + b`` with ``W`` stored as ``(in_features, out_features)``."""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator, bias: bool = True):
        self.in_features = in_features
        self.out_features = out_features
        self.weight = Parameter(uniform_init(rng, (in_features, out_features), in_features))
        self.bias = Parameter(np.zeros(out_features)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.in_features:
            raise DimensionError(f"Linear expects {self.in_features} features, got shape {x.shape}")
        out = F.matmul(x, self.weight)
        return out if self.bias is None else out + self.bias


class LayerNorm(Module):
    """Layer norm with a learnable scale and an optional shift."""

    def __init__(self, features: int, bias: bool = False):
        self.weight = Parameter(np.ones(features))
        self.bias = Parameter(np.zeros(features)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return F.layer_norm(x, self.weight, self.bias)


class MultiHeadLayerNorm(Module):
    """Independent normalisation of each head's slice, one shared scale vector."""

    def __init__(self, num_heads: int, features: int):
        self.num_heads = num_heads
        self.weight = Parameter(np.ones(features))

    def forward(self, x: Tensor) -> Tensor:
        return F.group_norm(x, self.num_heads, self.weight)


class HeadwiseLinear(Module):
    """Block-diagonal linear map: each of ``num_heads`` slices gets its own square matrix."""

    def __init__(self, features: int, num_heads: int, rng: np.random.Generator, bias: bool = False):
        if features % num_heads:
            raise DimensionError(f"{features} features do not split into {num_heads} heads")
        self.features = features
        self.num_heads = num_heads
        self.head_dim = features // num_heads
        self.weight = Parameter(uniform_init(rng, (num_heads, self.head_dim, self.head_dim), self.head_dim))
        self.bias = Parameter(np.zeros(features)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        lead = x.shape[:-1]
        heads = F.reshape(x, lead + (self.num_heads, 1, self.head_dim))
        out = F.reshape(F.matmul(heads, self.weight), lead + (self.features,))
        return out if self.bias is None else out + self.bias


class CausalConv1d(Module):
    """Causal convolution over ``(batch, time, channels)``; ``depthwise`` uses one filter per channel."""

    def __init__(self, channels_in: int, channels_out: int, kernel_size: int, rng: np.random.Generator,
                 dilation: int = 1, depthwise: bool = False, bias: bool = True):
        if depthwise and channels_in != channels_out:
            raise DimensionError("depthwise convolution needs equal input and output channels")
        self.kernel_size = kernel_size
        self.dilation = dilation
        self.groups = channels_in if depthwise else 1
        per_group = 1 if depthwise else channels_in
        fan_in = per_group * kernel_size
        self.weight = Parameter(uniform_init(rng, (channels_out, per_group, kernel_size), fan_in))
        self.bias = Parameter(np.zeros(channels_out)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return F.causal_dilated_conv1d(x, self.weight, self.bias, dilation=self.dilation, groups=self.groups)
