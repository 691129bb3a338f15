"""Adam and global-norm gradient clipping over ``Parameter`` lists."""

from __future__ import annotations

import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from trendlab.core.module import Parameter
from trendlab.errors import DimensionError, NonFiniteGradientError

ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


class AdamState(BaseModel):
    """First and second moment estimates plus the step counter."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    step: int = Field(default=0, ge=0)
    first_moment: List[np.ndarray] = Field(default_factory=list)
    second_moment: List[np.ndarray] = Field(default_factory=list)

    @classmethod
    def for_params(cls, params: Sequence[Parameter]) -> "AdamState":
        return cls(first_moment=[np.zeros_like(p.data) for p in params],
                   second_moment=[np.zeros_like(p.data) for p in params])


def adam_step(params: Sequence[Parameter], grads: Sequence[Optional[np.ndarray]], state: AdamState,
              lr: float, betas: Tuple[float, float] = ADAM_BETAS, eps: float = ADAM_EPS) -> AdamState:
    """Apply one bias-corrected Adam update in place; a missing gradient counts as zero."""
    if len(params) != len(grads) or len(params) != len(state.first_moment):
        raise DimensionError(f"{len(params)} parameters, {len(grads)} gradients, "
                             f"{len(state.first_moment)} moment slots")
    for i, (p, g) in enumerate(zip(params, grads)):
        if g is None:
            continue
        if g.shape != p.shape:
            raise DimensionError(f"gradient {i} has shape {g.shape}, parameter has {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(
                f"non-finite gradient for parameter {p.name or i} (max |g| = {np.nanmax(np.abs(g))})")

    beta1, beta2 = betas
    state.step += 1
    correction1 = 1.0 - beta1 ** state.step
    correction2 = 1.0 - beta2 ** state.step
    for i, (p, g) in enumerate(zip(params, grads)):
        if g is None:
            g = np.zeros_like(p.data)
        state.first_moment[i] = beta1 * state.first_moment[i] + (1.0 - beta1) * g
        state.second_moment[i] = beta2 * state.second_moment[i] + (1.0 - beta2) * g * g
        m_hat = state.first_moment[i] / correction1
        v_hat = state.second_moment[i] / correction2
        p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + eps)
    return state


def global_grad_norm(params: Sequence[Parameter]) -> float:
    return math.sqrt(sum(float(np.sum(p.grad * p.grad)) for p in params if p.grad is not None))


def clip_gradients(params: Sequence[Parameter], max_norm: float = 1.0) -> float:
    """Rescale all gradients together so their global L2 norm is at most ``max_norm``.

    Returns the factor applied (1.0 when untouched).
    """
    norm = global_grad_norm(params)
    if norm <= max_norm:
        return 1.0
    scale = max_norm / norm
    for p in params:
        if p.grad is not None:
            p.grad = p.grad * scale
    return scale


class Adam:
    """Stateful wrapper around ``adam_step``; ``lr`` may be changed between steps."""

    def __init__(self, params: Sequence[Parameter], lr: float = 1e-4,
                 betas: Tuple[float, float] = ADAM_BETAS, eps: float = ADAM_EPS):
        self.params = list(params)
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.state = AdamState.for_params(self.params)

    def step(self) -> None:
        adam_step(self.params, [p.grad for p in self.params], self.state, self.lr, self.betas, self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()
