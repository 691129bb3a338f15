"""
Tensor and computation tape for reverse-mode differentiation.

Operations executed while a ``Tape`` is active are recorded in creation
order, which is a topological order of the computation graph. Replaying
the tape backwards visits every node exactly once. Outside a tape nothing
is recorded, which is how inference runs.
"""

from __future__ import annotations

import contextvars
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from trendlab.errors import BackwardError, DimensionError

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_ACTIVE_TAPE: contextvars.ContextVar[Optional["Tape"]] = contextvars.ContextVar(
    "trendlab_active_tape", default=None
)


class Tensor:
    """Dense float64 array with optional gradient storage."""

    # Makes ``ndarray <op> Tensor`` defer to the Tensor's reflected operators.
    __array_priority__ = 1000

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        self.data: np.ndarray = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self._tape: Optional[Tape] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Populate gradients of every leaf that requires them."""
        if self._tape is None:
            raise BackwardError("tensor was not produced on a tape; nothing to differentiate")
        self._tape.backward(self)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    # Arithmetic sugar; the primitives live in trendlab.core.functional.
    def __add__(self, other):
        return F.add(self, other)

    def __radd__(self, other):
        return F.add(other, self)

    def __sub__(self, other):
        return F.sub(self, other)

    def __rsub__(self, other):
        return F.sub(other, self)

    def __mul__(self, other):
        return F.mul(self, other)

    def __rmul__(self, other):
        return F.mul(other, self)

    def __truediv__(self, other):
        return F.div(self, other)

    def __rtruediv__(self, other):
        return F.div(other, self)

    def __matmul__(self, other):
        return F.matmul(self, other)

    def __rmatmul__(self, other):
        return F.matmul(other, self)

    def __pow__(self, exponent: float):
        return F.power(self, exponent)

    def __neg__(self):
        return F.neg(self)

    def __getitem__(self, index):
        return F.slice(self, index)

    def sum(self, axis=None, keepdims: bool = False):
        return F.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return F.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return F.reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return F.transpose(self, axes or None)


class Node:
    """One recorded primitive application."""

    __slots__ = ("op", "inputs", "output", "backward_fn")

    def __init__(self, op: str, inputs: Tuple[Tensor, ...], output: Tensor, backward_fn: BackwardFn):
        self.op = op
        self.inputs = inputs
        self.output = output
        self.backward_fn = backward_fn


class Tape:
    """Ordered record of primitive operations.

    Usage::

        with Tape() as tape:
            loss = mse(model(x), y)
        tape.backward(loss)

    A tape may be replayed once; ``reset()`` clears it for reuse.
    """

    def __init__(self):
        self.nodes: List[Node] = []
        self._consumed = False
        self._token = None

    def __enter__(self) -> "Tape":
        self._token = _ACTIVE_TAPE.set(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> bool:
        _ACTIVE_TAPE.reset(self._token)
        self._token = None
        return False

    def __len__(self) -> int:
        return len(self.nodes)

    @staticmethod
    def current() -> Optional["Tape"]:
        return _ACTIVE_TAPE.get()

    def record(self, op: str, inputs: Tuple[Tensor, ...], output: Tensor, backward_fn: BackwardFn) -> None:
        if self._consumed:
            raise BackwardError("tape was already replayed; call reset() before recording again")
        self.nodes.append(Node(op, inputs, output, backward_fn))
        output._tape = self

    def reset(self) -> None:
        self.nodes.clear()
        self._consumed = False

    def backward(self, loss: Tensor) -> None:
        if self._consumed:
            raise BackwardError("backward was already run on this tape; call reset() first")
        if loss.size != 1:
            raise BackwardError(f"backward requires a scalar loss, got shape {loss.shape}")
        if loss._tape is not self:
            raise BackwardError("loss is not connected to this tape")

        pending: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for node in reversed(self.nodes):
            grad_out = pending.pop(id(node.output), None)
            if grad_out is None:
                continue
            for tensor, grad in zip(node.inputs, node.backward_fn(grad_out)):
                if grad is None or not tensor.requires_grad:
                    continue
                if tensor._tape is self:
                    key = id(tensor)
                    pending[key] = grad if key not in pending else pending[key] + grad
                elif tensor.grad is None:
                    tensor.grad = np.array(grad, dtype=np.float64, copy=True)
                else:
                    tensor.grad = tensor.grad + grad
        self._consumed = True


def record_op(op: str, data: np.ndarray, inputs: Sequence[Tensor], backward_fn: BackwardFn) -> Tensor:
    """Wrap ``data`` as the output of ``op`` and record it when differentiation is live."""
    tape = _ACTIVE_TAPE.get()
    inputs = tuple(inputs)
    live = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=live)
    if live:
        tape.record(op, inputs, out, backward_fn)
    return out


from trendlab.core import functional as F  # noqa: E402
