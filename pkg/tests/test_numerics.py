"""
Tests for the tape, differentiable primitives and layers.
Run with: pytest -q tests/test_numerics.py
"""

import numpy as np
import pytest

from trendlab.core import functional as F
from trendlab.core.gradcheck import gradcheck
from trendlab.core.module import CausalConv1d, HeadwiseLinear, LayerNorm, Linear
from trendlab.core.tensor import Tape, Tensor
from trendlab.errors import BackwardError, DimensionError

PRIMITIVE_TOLERANCE = 1e-4


def leaf(rng, *shape, low=-1.0, high=1.0, name=None):
    return Tensor(rng.uniform(low, high, shape), requires_grad=True, name=name)


def test_tensor_shape_checks():
    with pytest.raises(DimensionError):
        Tensor(np.zeros((2, 3))).item()
    t = Tensor([[1.0, 2.0], [3.0, 4.0]])
    assert t.shape == (2, 2)
    assert t.size == 4
    assert t.data.dtype == np.float64


def test_definitions():
    assert F.sigmoid(Tensor(0.0)).item() == 0.5
    assert F.tanh(Tensor(0.0)).item() == 0.0
    assert F.relu(Tensor(-2.0)).item() == 0.0
    np.testing.assert_allclose(F.logsigmoid(Tensor([-800.0])).data, [-800.0])


def test_matmul_matches_triple_loop(rng):
    a, b = rng.normal(size=(3, 4)), rng.normal(size=(4, 2))
    expected = np.zeros((3, 2))
    for i in range(3):
        for j in range(2):
            for k in range(4):
                expected[i, j] += a[i, k] * b[k, j]
    np.testing.assert_allclose(F.matmul(Tensor(a), Tensor(b)).data, expected, atol=1e-12)
    with pytest.raises(DimensionError, match=r"\(3, 4\).*\(3, 2\)"):
        F.matmul(Tensor(a), Tensor(rng.normal(size=(3, 2))))


def test_sum_and_square_gradients():
    x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    with Tape() as tape:
        loss = x.sum()
    tape.backward(loss)
    np.testing.assert_array_equal(x.grad, [1.0, 1.0, 1.0])

    x.zero_grad()
    with Tape() as tape:
        loss = (x * x).sum()
    tape.backward(loss)
    np.testing.assert_array_equal(x.grad, [2.0, 4.0, 6.0])


def test_shared_input_accumulates():
    x = Tensor([2.0], requires_grad=True)
    with Tape() as tape:
        y = x * 3.0
        loss = (y * y + y).sum()
    tape.backward(loss)
    # d/dx (9x^2 + 3x) = 18x + 3
    np.testing.assert_allclose(x.grad, [39.0])


def test_nothing_recorded_outside_tape():
    x = Tensor([1.0, 2.0], requires_grad=True)
    y = F.exp(x)
    assert not y.requires_grad
    with pytest.raises(BackwardError):
        y.sum().backward()


def test_tape_replays_once():
    x = Tensor([1.0], requires_grad=True)
    with Tape() as tape:
        loss = (x * x).sum()
    assert len(tape) == 2
    tape.backward(loss)
    with pytest.raises(BackwardError):
        tape.backward(loss)
    tape.reset()
    assert len(tape) == 0


def test_backward_needs_scalar():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with Tape() as tape:
        y = x * 2.0
    with pytest.raises(BackwardError, match="scalar"):
        tape.backward(y)


def test_constants_receive_no_gradient():
    x = Tensor([1.0, 2.0], requires_grad=True)
    c = Tensor([5.0, 6.0])
    with Tape() as tape:
        loss = (x * c).sum()
    tape.backward(loss)
    assert c.grad is None
    np.testing.assert_array_equal(x.grad, [5.0, 6.0])


UNARY_CASES = {
    "exp": F.exp,
    "log": lambda x: F.log(F.exp(x) + 1.0),
    "neg": F.neg,
    "power": lambda x: F.power(F.exp(x), 1.5),
    "abs": lambda x: F.abs(x + 3.0),
    "sigmoid": F.sigmoid,
    "logsigmoid": F.logsigmoid,
    "tanh": F.tanh,
    "relu": lambda x: F.relu(x + 0.05),
    "silu": F.silu,
    "gelu": F.gelu,
    "cumsum": lambda x: F.cumsum(x, axis=-1),
    "softmax": lambda x: F.softmax(x, axis=-1),
    "amax": lambda x: F.amax(x, axis=-1),
    "mean": lambda x: F.mean(x, axis=0, keepdims=True),
    "transpose": lambda x: F.transpose(x, (1, 0)),
    "swapaxes": lambda x: F.swapaxes(x, 0, 1),
    "reshape": lambda x: F.reshape(x, (12,)),
    "slice": lambda x: x[1:, ::2],
    "fancy_slice": lambda x: F.slice(x, (np.array([0, 0, 2]), slice(None))),
    "layer_norm": F.layer_norm,
    "group_norm": lambda x: F.group_norm(x, 2),
}


@pytest.mark.parametrize("name", sorted(UNARY_CASES))
def test_unary_primitive_gradients(name, rng):
    x = leaf(rng, 3, 4, name="x")
    op = UNARY_CASES[name]
    weights = Tensor(rng.normal(size=np.shape(op(Tensor(x.data)).data)))
    errors = gradcheck(lambda: (op(x) * weights).sum(), [x])
    assert errors["x"] < PRIMITIVE_TOLERANCE


BINARY_CASES = {
    "add": F.add,
    "sub": F.sub,
    "mul": F.mul,
    "div": lambda a, b: F.div(a, F.exp(b)),
    "maximum": F.maximum,
    "where": lambda a, b: F.where(np.array([[True, False, True, False]] * 3), a, b),
    "matmul": lambda a, b: F.matmul(a, F.transpose(b, (1, 0))),
    "concat": lambda a, b: F.concat([a, b], axis=0),
    "stack": lambda a, b: F.stack([a, b], axis=1),
    "mse": F.mse,
}


@pytest.mark.parametrize("name", sorted(BINARY_CASES))
def test_binary_primitive_gradients(name, rng):
    a, b = leaf(rng, 3, 4, name="a"), leaf(rng, 3, 4, name="b")
    op = BINARY_CASES[name]
    weights = Tensor(rng.normal(size=np.shape(op(Tensor(a.data), Tensor(b.data)).data)))
    errors = gradcheck(lambda: (op(a, b) * weights).sum(), [a, b])
    assert max(errors.values()) < PRIMITIVE_TOLERANCE


def test_broadcast_gradients(rng):
    a, b = leaf(rng, 2, 3, 4, name="a"), leaf(rng, 4, name="b")
    errors = gradcheck(lambda: (a * b + b).sum(), [a, b])
    assert max(errors.values()) < PRIMITIVE_TOLERANCE
    w = leaf(rng, 4, 2, name="w")
    errors = gradcheck(lambda: (F.matmul(a, w) ** 2).sum(), [a, w])
    assert max(errors.values()) < PRIMITIVE_TOLERANCE


def test_layer_norm_with_affine(rng):
    x, weight, bias = leaf(rng, 2, 5, 6), leaf(rng, 6), leaf(rng, 6)
    out = F.layer_norm(Tensor(x.data))
    np.testing.assert_allclose(out.data.mean(axis=-1), 0.0, atol=1e-12)
    errors = gradcheck(lambda: (F.layer_norm(x, weight, bias) ** 2).sum(), [x, weight, bias])
    assert max(errors.values()) < PRIMITIVE_TOLERANCE


@pytest.mark.parametrize("dilation,groups", [(1, 1), (2, 1), (3, 3)])
def test_conv_gradients(dilation, groups, rng):
    x = leaf(rng, 2, 9, 3)
    weight = leaf(rng, 3 if groups == 3 else 2, 1 if groups == 3 else 3, 3)
    bias = leaf(rng, weight.shape[0])
    fn = lambda: (F.causal_dilated_conv1d(x, weight, bias, dilation=dilation, groups=groups) ** 2).sum()  # noqa: E731
    errors = gradcheck(fn, [x, weight, bias])
    assert max(errors.values()) < PRIMITIVE_TOLERANCE


def test_conv_is_causal(rng):
    conv = CausalConv1d(2, 3, 4, rng, dilation=2)
    x = rng.normal(size=(1, 20, 2))
    base = conv(Tensor(x)).data
    for t in range(20):
        bumped = x.copy()
        bumped[0, t, :] += 10.0
        changed = np.any(np.abs(conv(Tensor(bumped)).data - base) > 0, axis=(0, 2))
        assert not np.any(changed[:t]), f"output before {t} moved"


def test_conv_shape_errors(rng):
    with pytest.raises(DimensionError):
        F.causal_dilated_conv1d(Tensor(np.zeros((1, 5, 2))), Tensor(np.zeros((3, 4, 2))))


def test_mse_values(rng):
    assert F.mse(Tensor([1.0, 2.0]), Tensor([1.0, 2.0])).item() == 0.0
    assert F.mse(Tensor([0.0, 0.0]), Tensor([1.0, 1.0])).item() == 1.0
    p, t = rng.normal(size=(16, 1)), rng.normal(size=(16, 1))
    oracle = 0.0
    for i in range(16):
        oracle += (p[i, 0] - t[i, 0]) ** 2
    assert F.mse(Tensor(p), Tensor(t)).item() == pytest.approx(oracle / 16, abs=1e-12)
    with pytest.raises(DimensionError):
        F.mse(Tensor(np.zeros(3)), Tensor(np.zeros((3, 1))))


def test_dropout_only_in_training(rng):
    x = Tensor(np.ones((100, 10)))
    assert F.dropout(x, 0.5, rng, training=False) is x
    dropped = F.dropout(x, 0.5, rng, training=True).data
    assert set(np.unique(dropped)) <= {0.0, 2.0}


def test_layers_gradients(rng):
    x = leaf(rng, 2, 3, 4, name="x")
    for layer in (Linear(4, 3, rng), LayerNorm(4, bias=True), HeadwiseLinear(4, 2, rng, bias=True),
                  CausalConv1d(4, 4, 2, rng, depthwise=True)):
        params = layer.parameters()
        errors = gradcheck(lambda: (layer(x) ** 2).sum(), [x, *params])
        assert max(errors.values()) < PRIMITIVE_TOLERANCE, type(layer).__name__


def test_state_dict_round_trip(rng):
    layer = Linear(4, 3, rng)
    state = layer.state_dict()
    assert sorted(state) == ["bias", "weight"]
    layer.weight.data = layer.weight.data + 1.0
    layer.load_state_dict(state)
    np.testing.assert_array_equal(layer.weight.data, state["weight"])
    with pytest.raises(DimensionError):
        layer.load_state_dict({"weight": state["weight"]})
    with pytest.raises(DimensionError):
        layer.load_state_dict({"weight": np.zeros((3, 4)), "bias": state["bias"]})
