"""
xLSTM-TS: a residual stack of mLSTM and sLSTM blocks for next-value forecasting.

    windows (B, L, 1) -> Linear -> [mLSTM | sLSTM blocks] -> LayerNorm -> last step -> Linear -> (B, 1)

Block internals follow the reference xLSTM wiring. With the default
configuration the parameter counts are: input Linear 128, mLSTM block
27,844, sLSTM block 41,600, LayerNorm 64, output Linear 65, total 125,389.

mLSTM block (pre-norm residual)::

    u, z   = split(proj_up(norm(x)))                  up-projection by proj_factor
    a      = silu(causal_conv(u))
    q, k   = headwise(a), headwise(a);  v = headwise(u)
    h      = matrix_memory(q, k, v, gates(concat(q, k, v)))
    out    = x + proj_down((group_norm(h) + skip * a) * silu(z))

sLSTM block::

    a      = silu(causal_conv(norm(x)))
    i, f   = headwise(a), headwise(a);  z, o = headwise(norm(x)), headwise(norm(x))
    h_t    = scalar_memory(i, f, z, o, R h_{t-1})     recurrent, per head
    y      = x + group_norm(h)
    out    = y + proj_down(gelu(gate) * up),  gate, up = split(proj_up(norm(y)))
"""

from __future__ import annotations

import logging
import math
from typing import List, Literal, NamedTuple, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from trendlab.core import functional as F
from trendlab.core.module import (
    CausalConv1d,
    HeadwiseLinear,
    LayerNorm,
    Linear,
    Module,
    MultiHeadLayerNorm,
    Parameter,
    uniform_init,
)
from trendlab.core.tensor import Tensor
from trendlab.errors import NumericOverflowError
from trendlab.models.base import Forecaster, ParameterSummary

logger = logging.getLogger(__name__)

MLSTM_EPS = 1e-6

BlockKind = Literal["mlstm", "slstm"]
DEFAULT_LAYOUT: Tuple[BlockKind, ...] = ("mlstm", "slstm", "mlstm", "mlstm")


def round_up(value: float, multiple: int) -> int:
    return int(math.ceil(value / multiple) * multiple)


class MlstmBlockConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    conv_kernel_size: int = Field(default=4, ge=1, description="Causal conv width on the query/key branch")
    projection_block_size: int = Field(default=2, ge=1, description="Block size of the headwise q/k/v maps")
    num_heads: int = Field(default=2, ge=1, description="Matrix-memory heads")
    proj_factor: float = Field(default=2.0, gt=0, description="Up-projection factor around the memory")
    round_proj_up_to_multiple_of: int = Field(default=64, ge=1)

    def inner_dim(self, embedding_dim: int) -> int:
        return round_up(self.proj_factor * embedding_dim, self.round_proj_up_to_multiple_of)


class SlstmBlockConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    conv_kernel_size: int = Field(default=2, ge=1, description="Causal conv width on the input/forget branch")
    num_heads: int = Field(default=2, ge=1, description="Scalar-memory heads")
    feedforward_projection_factor: float = Field(default=1.1, gt=0, description="Gated feed-forward width factor")
    round_proj_up_to_multiple_of: int = Field(default=64, ge=1)

    def feedforward_dim(self, embedding_dim: int) -> int:
        return round_up(self.feedforward_projection_factor * embedding_dim, self.round_proj_up_to_multiple_of)


class XlstmTsConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    input_size: int = Field(default=1, description="Features per time step")
    embedding_dim: int = Field(default=64, ge=1)
    output_size: int = Field(default=1)
    sequence_length: int = Field(default=150, ge=1, description="Input window length")
    context_length: int = Field(default=150, ge=1, description="Must equal sequence_length")
    batch_size: int = Field(default=16, ge=1)
    block_layout: Tuple[BlockKind, ...] = Field(default=DEFAULT_LAYOUT)
    mlstm: MlstmBlockConfig = Field(default_factory=MlstmBlockConfig)
    slstm: SlstmBlockConfig = Field(default_factory=SlstmBlockConfig)
    mlstm_mode: Literal["parallel", "recurrent"] = Field(default="parallel",
                                                         description="Evaluation order of the matrix memory")

    @model_validator(mode="after")
    def _consistent(self) -> "XlstmTsConfig":
        if self.context_length != self.sequence_length:
            raise ValueError("context_length must equal sequence_length")
        if self.input_size != 1 or self.output_size != 1:
            raise ValueError("only univariate input and single-step output are supported")
        if not self.block_layout:
            raise ValueError("block_layout must name at least one block")
        d = self.embedding_dim
        if "mlstm" in self.block_layout:
            inner = self.mlstm.inner_dim(d)
            if inner % self.mlstm.num_heads or inner % self.mlstm.projection_block_size:
                raise ValueError(f"mLSTM inner dim {inner} must divide into heads and projection blocks")
        if "slstm" in self.block_layout and d % self.slstm.num_heads:
            raise ValueError(f"sLSTM num_heads {self.slstm.num_heads} must divide embedding_dim {d}")
        return self


# -- matrix memory ------------------------------------------------------------

class MlstmState(NamedTuple):
    """Stabilised matrix memory: true C = matrix_cell * exp(stabiliser)."""

    matrix_cell: Tensor  # (B, NH, DH, DH), value x key
    normaliser: Tensor   # (B, NH, DH)
    stabiliser: Tensor   # (B, NH, 1)


def mlstm_parallel(q: Tensor, k: Tensor, v: Tensor, igate: Tensor, fgate: Tensor,
                   eps: float = MLSTM_EPS) -> Tensor:
    """All time steps at once. ``q, k, v`` are ``(B, NH, S, DH)``; gates ``(B, NH, S, 1)``."""
    steps, head_dim = q.shape[2], q.shape[3]
    log_f = F.logsigmoid(fgate)
    cum = F.cumsum(log_f, axis=2)
    # [i, j] = sum of log forget gates over (j, i]
    decay = cum - F.swapaxes(cum, -1, -2)
    causal = np.tril(np.ones((steps, steps), dtype=bool))
    log_d = F.where(causal, decay + F.swapaxes(igate, -1, -2), -np.inf)
    stab = F.amax(log_d, axis=-1, keepdims=True)
    d = F.exp(log_d - stab)
    scores = F.matmul(q, F.swapaxes(k, -1, -2)) / math.sqrt(head_dim)
    c = scores * d
    norm = F.maximum(F.abs(c.sum(axis=-1, keepdims=True)), F.exp(-stab))
    return F.matmul(c / (norm + eps), v)


def mlstm_cell_step(state: Optional[MlstmState], q: Tensor, k: Tensor, v: Tensor,
                    igate: Tensor, fgate: Tensor, eps: float = MLSTM_EPS) -> Tuple[Tensor, MlstmState]:
    """One matrix-memory update. ``q, k, v`` are ``(B, NH, DH)``; gates ``(B, NH, 1)``.

    An empty state starts the stabiliser at the first input gate, which
    makes the recurrence agree exactly with ``mlstm_parallel``.
    """
    head_dim = q.shape[-1]
    k_scaled = k / math.sqrt(head_dim)
    outer = F.reshape(v, v.shape + (1,)) * F.reshape(k_scaled, k_scaled.shape[:-1] + (1, head_dim))
    if state is None:
        stab = igate
        i_act = F.exp(igate - stab)
        cell = F.reshape(i_act, i_act.shape + (1,)) * outer
        normaliser = i_act * k_scaled
    else:
        log_f = F.logsigmoid(fgate)
        stab = F.maximum(log_f + state.stabiliser, igate)
        f_act = F.exp(log_f + state.stabiliser - stab)
        i_act = F.exp(igate - stab)
        cell = (F.reshape(f_act, f_act.shape + (1,)) * state.matrix_cell
                + F.reshape(i_act, i_act.shape + (1,)) * outer)
        normaliser = f_act * state.normaliser + i_act * k_scaled
    numerator = F.reshape(F.matmul(cell, F.reshape(q, q.shape + (1,))), q.shape)
    qn = (normaliser * q).sum(axis=-1, keepdims=True)
    h = numerator / (F.maximum(F.abs(qn), F.exp(-stab)) + eps)
    return h, MlstmState(cell, normaliser, stab)


def mlstm_recurrent(q: Tensor, k: Tensor, v: Tensor, igate: Tensor, fgate: Tensor,
                    eps: float = MLSTM_EPS) -> Tensor:
    """Step-by-step evaluation with the same signature as ``mlstm_parallel``."""
    state = None
    outputs = []
    for t in range(q.shape[2]):
        h, state = mlstm_cell_step(state, q[:, :, t, :], k[:, :, t, :], v[:, :, t, :],
                                   igate[:, :, t, :], fgate[:, :, t, :], eps)
        outputs.append(h)
    return F.stack(outputs, axis=2)


class MlstmLayer(Module):
    def __init__(self, embedding_dim: int, config: MlstmBlockConfig, rng: np.random.Generator,
                 mode: str = "parallel"):
        inner = config.inner_dim(embedding_dim)
        self.inner_dim = inner
        self.num_heads = config.num_heads
        self.mode = mode
        qkv_heads = inner // config.projection_block_size
        self.proj_up = Linear(embedding_dim, 2 * inner, rng, bias=False)
        self.q_proj = HeadwiseLinear(inner, qkv_heads, rng)
        self.k_proj = HeadwiseLinear(inner, qkv_heads, rng)
        self.v_proj = HeadwiseLinear(inner, qkv_heads, rng)
        self.conv = CausalConv1d(inner, inner, config.conv_kernel_size, rng, depthwise=True)
        self.igate = Linear(3 * inner, config.num_heads, rng)
        self.fgate = Linear(3 * inner, config.num_heads, rng)
        self.outnorm = MultiHeadLayerNorm(config.num_heads, inner)
        self.learnable_skip = Parameter(np.ones(inner))
        self.proj_down = Linear(inner, embedding_dim, rng, bias=False)

    def _heads(self, x: Tensor) -> Tensor:
        batch, steps, _ = x.shape
        return F.transpose(F.reshape(x, (batch, steps, self.num_heads, -1)), (0, 2, 1, 3))

    def forward(self, x: Tensor) -> Tensor:
        batch, steps, _ = x.shape
        up = self.proj_up(x)
        u, z = up[..., :self.inner_dim], up[..., self.inner_dim:]
        conv_act = F.silu(self.conv(u))
        q, k, v = self.q_proj(conv_act), self.k_proj(conv_act), self.v_proj(u)

        gate_in = F.concat([q, k, v], axis=-1)
        igate = F.reshape(F.transpose(self.igate(gate_in), (0, 2, 1)), (batch, self.num_heads, steps, 1))
        fgate = F.reshape(F.transpose(self.fgate(gate_in), (0, 2, 1)), (batch, self.num_heads, steps, 1))

        memory = mlstm_parallel if self.mode == "parallel" else mlstm_recurrent
        h = memory(self._heads(q), self._heads(k), self._heads(v), igate, fgate)
        finite = np.all(np.isfinite(h.data), axis=(0, 1, 3))
        if not np.all(finite):
            raise NumericOverflowError(
                f"mLSTM hidden state became non-finite at time step {int(np.argmin(finite))}")
        h = F.reshape(F.transpose(h, (0, 2, 1, 3)), (batch, steps, self.inner_dim))
        h = self.outnorm(h) + self.learnable_skip * conv_act
        return self.proj_down(h * F.silu(z))


class MlstmBlock(Module):
    def __init__(self, embedding_dim: int, config: MlstmBlockConfig, rng: np.random.Generator,
                 mode: str = "parallel"):
        self.norm = LayerNorm(embedding_dim)
        self.layer = MlstmLayer(embedding_dim, config, rng, mode)

    def forward(self, x: Tensor) -> Tensor:
        return x + self.layer(self.norm(x))


def mlstm_block_forward(block: MlstmBlock, x: Tensor, mode: Optional[str] = None) -> Tensor:
    """Run ``block`` on ``(B, T, embed)``, optionally forcing the evaluation order."""
    if mode is None:
        return block(x)
    saved = block.layer.mode
    block.layer.mode = mode
    try:
        return block(x)
    finally:
        block.layer.mode = saved


# -- scalar memory ------------------------------------------------------------

class SlstmState(NamedTuple):
    """Per head-channel scalar memory; all fields are ``(B, NH, DH)``."""

    cell: Tensor
    normaliser: Tensor
    hidden: Tensor
    stabiliser: Tensor

    @classmethod
    def zeros(cls, batch: int, num_heads: int, head_dim: int) -> "SlstmState":
        shape = (batch, num_heads, head_dim)
        return cls(*(Tensor(np.zeros(shape)) for _ in range(4)))


def slstm_cell_step(state: SlstmState, raw: Tensor) -> SlstmState:
    """Stabilised exponential-gating update from pre-activations ``raw`` = ``(B, NH, 4*DH)`` laid out i|f|z|o."""
    dh = state.cell.shape[-1]
    i_raw, f_raw, z_raw, o_raw = (raw[..., j * dh:(j + 1) * dh] for j in range(4))
    empty = state.normaliser.data == 0.0
    log_f_plus_m = state.stabiliser + F.logsigmoid(f_raw)
    stab = F.where(empty, i_raw, F.maximum(i_raw, log_f_plus_m))
    i_act = F.exp(i_raw - stab)
    # An empty memory has nothing to forget; keep exp() away from the unused branch.
    f_act = F.exp(F.where(empty, stab, log_f_plus_m) - stab)
    cell = f_act * state.cell + i_act * F.tanh(z_raw)
    normaliser = f_act * state.normaliser + i_act
    hidden = F.sigmoid(o_raw) * cell / normaliser
    return SlstmState(cell, normaliser, hidden, stab)


class SlstmLayer(Module):
    def __init__(self, embedding_dim: int, config: SlstmBlockConfig, rng: np.random.Generator):
        self.num_heads = config.num_heads
        self.head_dim = embedding_dim // config.num_heads
        self.conv = CausalConv1d(embedding_dim, embedding_dim, config.conv_kernel_size, rng, depthwise=True)
        self.igate = HeadwiseLinear(embedding_dim, config.num_heads, rng)
        self.fgate = HeadwiseLinear(embedding_dim, config.num_heads, rng)
        self.zgate = HeadwiseLinear(embedding_dim, config.num_heads, rng)
        self.ogate = HeadwiseLinear(embedding_dim, config.num_heads, rng)
        self.recurrent_kernel = Parameter(
            uniform_init(rng, (config.num_heads, self.head_dim, 4 * self.head_dim), self.head_dim))
        self.bias = Parameter(np.zeros((config.num_heads, 4 * self.head_dim)))
        self.group_norm = MultiHeadLayerNorm(config.num_heads, embedding_dim)

    def forward(self, x: Tensor, state: Optional[SlstmState] = None) -> Tuple[Tensor, SlstmState]:
        batch, steps, features = x.shape
        conv_act = F.silu(self.conv(x))
        per_head = (batch, steps, self.num_heads, self.head_dim)
        wx = F.concat([F.reshape(self.igate(conv_act), per_head), F.reshape(self.fgate(conv_act), per_head),
                       F.reshape(self.zgate(x), per_head), F.reshape(self.ogate(x), per_head)], axis=-1)

        if state is None:
            state = SlstmState.zeros(batch, self.num_heads, self.head_dim)
        hidden = []
        for t in range(steps):
            h_prev = F.reshape(state.hidden, (batch, self.num_heads, 1, self.head_dim))
            recurrent = F.reshape(F.matmul(h_prev, self.recurrent_kernel), (batch, self.num_heads, 4 * self.head_dim))
            state = slstm_cell_step(state, wx[:, t] + recurrent + self.bias)
            if not np.all(np.isfinite(state.hidden.data)):
                raise NumericOverflowError(f"sLSTM hidden state became non-finite at time step {t}")
            hidden.append(state.hidden)
        h = F.reshape(F.stack(hidden, axis=1), (batch, steps, features))
        return self.group_norm(h), state


class GatedFeedForward(Module):
    def __init__(self, embedding_dim: int, hidden_dim: int, rng: np.random.Generator):
        self.hidden_dim = hidden_dim
        self.proj_up = Linear(embedding_dim, 2 * hidden_dim, rng, bias=False)
        self.proj_down = Linear(hidden_dim, embedding_dim, rng, bias=False)

    def forward(self, x: Tensor) -> Tensor:
        up = self.proj_up(x)
        gate, value = up[..., :self.hidden_dim], up[..., self.hidden_dim:]
        return self.proj_down(F.gelu(gate) * value)


class SlstmBlock(Module):
    def __init__(self, embedding_dim: int, config: SlstmBlockConfig, rng: np.random.Generator):
        self.norm = LayerNorm(embedding_dim)
        self.layer = SlstmLayer(embedding_dim, config, rng)
        self.ffn_norm = LayerNorm(embedding_dim)
        self.ffn = GatedFeedForward(embedding_dim, config.feedforward_dim(embedding_dim), rng)

    def forward(self, x: Tensor, state: Optional[SlstmState] = None) -> Tuple[Tensor, SlstmState]:
        mixed, state = self.layer(self.norm(x), state)
        y = x + mixed
        return y + self.ffn(self.ffn_norm(y)), state


def slstm_block_forward(block: SlstmBlock, x: Tensor,
                        state: Optional[SlstmState] = None) -> Tuple[Tensor, SlstmState]:
    return block(x, state)


# -- model --------------------------------------------------------------------

class XlstmTs(Forecaster):
    kind = "xlstm_ts"

    def __init__(self, config: XlstmTsConfig = XlstmTsConfig(), seed: int = 0):
        rng = np.random.default_rng(seed)
        self.config = config
        d = config.embedding_dim
        self.input_linear = Linear(config.input_size, d, rng)
        self.blocks: List[Module] = [
            MlstmBlock(d, config.mlstm, rng, config.mlstm_mode) if kind == "mlstm"
            else SlstmBlock(d, config.slstm, rng)
            for kind in config.block_layout
        ]
        self.post_norm = LayerNorm(d)
        self.output_linear = Linear(d, config.output_size, rng)

    @property
    def window_length(self) -> int:
        return self.config.sequence_length

    def forward(self, x: Tensor) -> Tensor:
        h = self.input_linear(self.check_windows(x))
        for block in self.blocks:
            h = block(h)
            if isinstance(h, tuple):
                h = h[0]
        h = self.post_norm(h)
        return self.output_linear(h[:, -1, :])

    def layer_rows(self):
        rows = [("input_linear", self.input_linear)]
        rows += [(f"blocks.{i} ({kind})", block) for i, (kind, block) in
                 enumerate(zip(self.config.block_layout, self.blocks))]
        rows += [("post_norm", self.post_norm), ("output_linear", self.output_linear)]
        return rows


def parameter_count(model: Forecaster) -> ParameterSummary:
    return model.parameter_summary()
