"""
Differentiable primitives.

Each primitive computes its forward value with numpy and hands a closure to
the active tape that maps the output gradient to input gradients. Inputs
that are plain numbers or arrays are wrapped as constant tensors.
"""

from __future__ import annotations

import builtins
import math
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy import special

from trendlab.core.tensor import Tensor, record_op
from trendlab.errors import DimensionError

ArrayLike = Union[Tensor, np.ndarray, float, int]

LAYER_NORM_EPS = 1e-5


def as_tensor(value: ArrayLike) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> Tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} are not compatible") from None


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _normalise_axes(axis, ndim: int) -> Optional[Tuple[int, ...]]:
    if axis is None:
        return None
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    return tuple(sorted(a % ndim for a in axes))


def _expand_reduced(grad: np.ndarray, shape: Tuple[int, ...], axes, keepdims: bool) -> np.ndarray:
    if axes is not None and not keepdims:
        grad = np.expand_dims(grad, axes)
    return np.broadcast_to(grad, shape)


# -- elementwise binary -----------------------------------------------------

def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return record_op("add", a.data + b.data, (a, b), backward)


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return record_op("sub", a.data - b.data, (a, b), backward)


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return record_op("mul", a.data * b.data, (a, b), backward)


def div(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("div", a, b)

    def backward(g):
        return (_unbroadcast(g / b.data, a.shape),
                _unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return record_op("div", a.data / b.data, (a, b), backward)


def maximum(a: ArrayLike, b: ArrayLike) -> Tensor:
    """Elementwise maximum; ties route the gradient to ``a``."""
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("maximum", a, b)
    pick_a = a.data >= b.data

    def backward(g):
        return _unbroadcast(g * pick_a, a.shape), _unbroadcast(g * ~pick_a, b.shape)

    return record_op("maximum", np.maximum(a.data, b.data), (a, b), backward)


def where(condition: np.ndarray, a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    condition = np.asarray(condition, dtype=bool)

    def backward(g):
        return (_unbroadcast(np.where(condition, g, 0.0), a.shape),
                _unbroadcast(np.where(condition, 0.0, g), b.shape))

    return record_op("where", np.where(condition, a.data, b.data), (a, b), backward)


def matmul(a: ArrayLike, b: ArrayLike) -> Tensor:
    """Matrix product over the last two axes with broadcast batch axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: shapes {a.shape} and {b.shape} are not compatible")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise DimensionError(f"matmul: batch shapes {a.shape} and {b.shape} are not compatible") from None

    def backward(g):
        grad_a = np.matmul(g, np.swapaxes(b.data, -1, -2))
        grad_b = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(grad_a, a.shape), _unbroadcast(grad_b, b.shape)

    return record_op("matmul", np.matmul(a.data, b.data), (a, b), backward)


# -- elementwise unary ------------------------------------------------------

def neg(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    return record_op("neg", -x.data, (x,), lambda g: (-g,))


def power(x: ArrayLike, exponent: float) -> Tensor:
    x = as_tensor(x)
    exponent = float(exponent)

    def backward(g):
        return (g * exponent * np.power(x.data, exponent - 1.0),)

    return record_op("power", np.power(x.data, exponent), (x,), backward)


def exp(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    out = np.exp(x.data)
    return record_op("exp", out, (x,), lambda g: (g * out,))


def log(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    return record_op("log", np.log(x.data), (x,), lambda g: (g / x.data,))


def abs(x: ArrayLike) -> Tensor:  # noqa: A001
    x = as_tensor(x)
    return record_op("abs", np.abs(x.data), (x,), lambda g: (g * np.sign(x.data),))


def sigmoid(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    out = special.expit(x.data)
    return record_op("sigmoid", out, (x,), lambda g: (g * out * (1.0 - out),))


def logsigmoid(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    return record_op("logsigmoid", special.log_expit(x.data), (x,),
                     lambda g: (g * special.expit(-x.data),))


def tanh(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    out = np.tanh(x.data)
    return record_op("tanh", out, (x,), lambda g: (g * (1.0 - out * out),))


def relu(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    return record_op("relu", np.maximum(x.data, 0.0), (x,), lambda g: (g * (x.data > 0.0),))


def silu(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    s = special.expit(x.data)

    def backward(g):
        return (g * (s + x.data * s * (1.0 - s)),)

    return record_op("silu", x.data * s, (x,), backward)


def gelu(x: ArrayLike) -> Tensor:
    """Exact (erf) GELU."""
    x = as_tensor(x)
    cdf = 0.5 * (1.0 + special.erf(x.data / math.sqrt(2.0)))

    def backward(g):
        pdf = np.exp(-0.5 * x.data * x.data) / math.sqrt(2.0 * math.pi)
        return (g * (cdf + x.data * pdf),)

    return record_op("gelu", x.data * cdf, (x,), backward)


# -- reductions -------------------------------------------------------------

def sum(x: ArrayLike, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    x = as_tensor(x)
    axes = _normalise_axes(axis, x.ndim)

    def backward(g):
        return (_expand_reduced(g, x.shape, axes, keepdims),)

    return record_op("sum", np.sum(x.data, axis=axes, keepdims=keepdims), (x,), backward)


def mean(x: ArrayLike, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    axes = _normalise_axes(axis, x.ndim)
    count = x.size if axes is None else int(np.prod([x.shape[a] for a in axes]))

    def backward(g):
        return (_expand_reduced(g, x.shape, axes, keepdims) / count,)

    return record_op("mean", np.mean(x.data, axis=axes, keepdims=keepdims), (x,), backward)


def amax(x: ArrayLike, axis: int = -1, keepdims: bool = True) -> Tensor:
    """Maximum along one axis; tied maxima share the gradient."""
    x = as_tensor(x)
    axis = axis % x.ndim
    out = np.max(x.data, axis=axis, keepdims=True)
    mask = x.data == out
    share = mask / mask.sum(axis=axis, keepdims=True)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (share * g,)

    return record_op("amax", out if keepdims else np.squeeze(out, axis=axis), (x,), backward)


def cumsum(x: ArrayLike, axis: int = -1) -> Tensor:
    x = as_tensor(x)

    def backward(g):
        return (np.flip(np.cumsum(np.flip(g, axis=axis), axis=axis), axis=axis),)

    return record_op("cumsum", np.cumsum(x.data, axis=axis), (x,), backward)


def softmax(x: ArrayLike, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    shifted = x.data - np.max(x.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / np.sum(e, axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - np.sum(g * out, axis=axis, keepdims=True)),)

    return record_op("softmax", out, (x,), backward)


# -- shape ------------------------------------------------------------------

def reshape(x: ArrayLike, shape: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    try:
        out = x.data.reshape(tuple(shape))
    except ValueError:
        raise DimensionError(f"reshape: cannot view shape {x.shape} as {tuple(shape)}") from None
    return record_op("reshape", out, (x,), lambda g: (g.reshape(x.shape),))


def transpose(x: ArrayLike, axes: Optional[Sequence[int]] = None) -> Tensor:
    x = as_tensor(x)
    axes = tuple(reversed(range(x.ndim))) if axes is None else tuple(a % x.ndim for a in axes)
    inverse = tuple(np.argsort(axes))
    return record_op("transpose", np.transpose(x.data, axes), (x,),
                     lambda g: (np.transpose(g, inverse),))


def swapaxes(x: ArrayLike, first: int, second: int) -> Tensor:
    x = as_tensor(x)
    axes = list(range(x.ndim))
    axes[first], axes[second] = axes[second], axes[first]
    return transpose(x, axes)


def _is_basic_index(index) -> bool:
    parts = index if isinstance(index, tuple) else (index,)
    return all(isinstance(p, (int, np.integer, builtins.slice)) or p is None or p is Ellipsis for p in parts)


def slice(x: ArrayLike, index) -> Tensor:  # noqa: A001
    x = as_tensor(x)
    basic = _is_basic_index(index)

    def backward(g):
        full = np.zeros_like(x.data)
        if basic:
            full[index] += g
        else:
            np.add.at(full, index, g)
        return (full,)

    return record_op("slice", x.data[index], (x,), backward)


def concat(tensors: Sequence[ArrayLike], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        shapes = [t.shape for t in tensors]
        raise DimensionError(f"concat: shapes {shapes} do not agree off axis {axis}") from None
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, sizes, axis=axis))

    return record_op("concat", out, tensors, backward)


def stack(tensors: Sequence[ArrayLike], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.stack([t.data for t in tensors], axis=axis)
    except ValueError:
        shapes = [t.shape for t in tensors]
        raise DimensionError(f"stack: shapes {shapes} differ") from None

    def backward(g):
        return tuple(np.squeeze(part, axis=axis) for part in np.split(g, len(tensors), axis=axis))

    return record_op("stack", out, tensors, backward)


# -- normalisation ----------------------------------------------------------

def layer_norm(x: ArrayLike, weight: Optional[Tensor] = None, bias: Optional[Tensor] = None,
               eps: float = LAYER_NORM_EPS) -> Tensor:
    """Normalise the last axis to zero mean and unit variance, then apply the affine."""
    x = as_tensor(x)
    features = x.shape[-1]
    for label, param in (("weight", weight), ("bias", bias)):
        if param is not None and param.shape != (features,):
            raise DimensionError(f"layer_norm: {label} shape {param.shape} does not match features {features}")

    centred = x.data - x.data.mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(np.mean(centred * centred, axis=-1, keepdims=True) + eps)
    xhat = centred * rstd
    out = xhat
    if weight is not None:
        out = out * weight.data
    if bias is not None:
        out = out + bias.data

    inputs = [x] + [p for p in (weight, bias) if p is not None]

    def backward(g):
        dxhat = g * weight.data if weight is not None else g
        dx = rstd * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                     - xhat * np.mean(dxhat * xhat, axis=-1, keepdims=True))
        grads = [dx]
        if weight is not None:
            grads.append((g * xhat).reshape(-1, features).sum(axis=0))
        if bias is not None:
            grads.append(g.reshape(-1, features).sum(axis=0))
        return grads

    return record_op("layer_norm", out, inputs, backward)


# -- convolution ------------------------------------------------------------

def causal_dilated_conv1d(x: ArrayLike, weight: Tensor, bias: Optional[Tensor] = None,
                          dilation: int = 1, groups: int = 1) -> Tensor:
    """Causal convolution over time.

    ``x`` is ``(batch, time, channels_in)`` and ``weight`` is
    ``(channels_out, channels_in // groups, kernel)``. The input is left-padded
    by ``(kernel - 1) * dilation`` so the output keeps the input length and
    position ``t`` only reads inputs at ``t, t - d, ..., t - (k - 1) d``.
    ``groups`` is 1 (dense) or ``channels_in`` (depthwise).
    """
    x = as_tensor(x)
    if x.ndim != 3 or weight.ndim != 3:
        raise DimensionError(f"conv1d: input {x.shape} and weight {weight.shape} must both be 3-d")
    batch, steps, channels_in = x.shape
    channels_out, per_group, kernel = weight.shape
    depthwise = groups != 1
    if depthwise and (groups != channels_in or channels_out != channels_in or per_group != 1):
        raise DimensionError(f"conv1d: depthwise weight {weight.shape} does not match input {x.shape}")
    if not depthwise and per_group != channels_in:
        raise DimensionError(f"conv1d: weight {weight.shape} does not match input {x.shape}")
    if bias is not None and bias.shape != (channels_out,):
        raise DimensionError(f"conv1d: bias {bias.shape} does not match {channels_out} output channels")

    pad = (kernel - 1) * dilation
    padded = np.pad(x.data, ((0, 0), (pad, 0), (0, 0)))
    taps = [padded[:, j * dilation: j * dilation + steps, :] for j in range(kernel)]
    w = weight.data

    out = np.zeros((batch, steps, channels_out))
    for j, tap in enumerate(taps):
        out += tap * w[:, 0, j] if depthwise else tap @ w[:, :, j].T
    if bias is not None:
        out += bias.data

    inputs = [x, weight] + ([bias] if bias is not None else [])

    def backward(g):
        grad_padded = np.zeros_like(padded)
        grad_w = np.zeros_like(w)
        for j, tap in enumerate(taps):
            window = builtins.slice(j * dilation, j * dilation + steps)
            if depthwise:
                grad_padded[:, window, :] += g * w[:, 0, j]
                grad_w[:, 0, j] = np.sum(g * tap, axis=(0, 1))
            else:
                grad_padded[:, window, :] += g @ w[:, :, j]
                grad_w[:, :, j] = np.tensordot(g, tap, axes=([0, 1], [0, 1]))
        grads = [grad_padded[:, pad:, :], grad_w]
        if bias is not None:
            grads.append(g.sum(axis=(0, 1)))
        return grads

    return record_op("causal_dilated_conv1d", out, inputs, backward)


# -- composites -------------------------------------------------------------

def dropout(x: ArrayLike, rate: float, rng: Optional[np.random.Generator], training: bool = True) -> Tensor:
    x = as_tensor(x)
    if not training or rate <= 0.0 or rng is None:
        return x
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return mul(x, keep)


def mse(prediction: ArrayLike, target: ArrayLike) -> Tensor:
    """Mean of squared elementwise differences."""
    prediction, target = as_tensor(prediction), as_tensor(target)
    if prediction.shape != target.shape:
        raise DimensionError(f"mse: prediction shape {prediction.shape} differs from target shape {target.shape}")
    diff = sub(prediction, target)
    return mean(mul(diff, diff))


def group_norm(x: ArrayLike, num_heads: int, weight: Optional[Tensor] = None,
               eps: float = LAYER_NORM_EPS) -> Tensor:
    """Per-head layer norm over the last axis of ``(..., num_heads * head_dim)``."""
    x = as_tensor(x)
    features = x.shape[-1]
    if features % num_heads:
        raise DimensionError(f"group_norm: {features} features do not split into {num_heads} heads")
    heads = reshape(x, x.shape[:-1] + (num_heads, features // num_heads))
    normed = reshape(layer_norm(heads, eps=eps), x.shape)
    return normed if weight is None else mul(normed, weight)
