"""Central finite-difference gradient checking."""

from typing import Callable, Dict, Sequence

import numpy as np

from trendlab.core.tensor import Tape, Tensor

FD_EPSILON = 1e-5


def numeric_gradient(fn: Callable[[], Tensor], tensor: Tensor, eps: float = FD_EPSILON) -> np.ndarray:
    """Central differences of the scalar ``fn()`` with respect to ``tensor``, evaluated in place."""
    tensor.data = np.ascontiguousarray(tensor.data)
    grad = np.zeros_like(tensor.data)
    flat = tensor.data.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        saved = flat[i]
        flat[i] = saved + eps
        plus = fn().item()
        flat[i] = saved - eps
        minus = fn().item()
        flat[i] = saved
        out[i] = (plus - minus) / (2.0 * eps)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)
    return float(np.linalg.norm(analytic - numeric) / scale)


def gradcheck(fn: Callable[[], Tensor], inputs: Sequence[Tensor], eps: float = FD_EPSILON) -> Dict[str, float]:
    """Compare tape gradients of ``fn`` with central differences.

    ``fn`` takes no arguments and closes over ``inputs``, each of which must
    require gradients. Returns the norm-wise relative error per input, keyed
    by the tensor's name or its position.
    """
    for t in inputs:
        t.zero_grad()
    with Tape() as tape:
        loss = fn()
    tape.backward(loss)
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in inputs]

    errors: Dict[str, float] = {}
    for index, (t, grad) in enumerate(zip(inputs, analytic)):
        numeric = numeric_gradient(fn, t, eps)
        errors[t.name or str(index)] = relative_error(grad, numeric)
    return errors
