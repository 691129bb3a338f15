from .tensor import Tape, Tensor
from .module import (
    CausalConv1d,
    HeadwiseLinear,
    LayerNorm,
    Linear,
    Module,
    MultiHeadLayerNorm,
    Parameter,
)
from .gradcheck import gradcheck

__all__ = [
    "Tape",
    "Tensor",
    "CausalConv1d",
    "HeadwiseLinear",
    "LayerNorm",
    "Linear",
    "Module",
    "MultiHeadLayerNorm",
    "Parameter",
    "gradcheck",
]
