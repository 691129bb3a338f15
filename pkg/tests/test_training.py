"""
Tests for Adam, gradient clipping and the epoch loop.
Run with: pytest -q tests/test_training.py
"""

import numpy as np
import pytest

from trendlab.core.module import Parameter
from trendlab.core.tensor import Tape
from trendlab.data.series_io import make_windows
from trendlab.errors import DimensionError, NonFiniteGradientError, TrainingAbortedError
from trendlab.models.naive import NaiveConfig, NaiveForecaster
from trendlab.models.tcn import Tcn, TcnConfig
from trendlab.training.optim import (
    Adam,
    AdamState,
    adam_step,
    clip_gradients,
    global_grad_norm,
)
from trendlab.training.trainer import TrainConfig, fit, validation_loss


def small_tcn(seed: int = 0) -> Tcn:
    return Tcn(TcnConfig(kernel_size=2, num_filters=2, sequence_length=4), seed=seed)


@pytest.fixture(scope="module")
def datasets():
    t = np.arange(120)
    values = 0.5 + 0.4 * np.sin(2 * np.pi * t / 25.0)
    return make_windows(values[:90], 4), make_windows(values[86:], 4, offset=86)


def test_adam_ignores_zero_gradient():
    p = Parameter(np.array([1.0, -2.0]))
    state = AdamState.for_params([p])
    adam_step([p], [np.zeros(2)], state, lr=0.1)
    np.testing.assert_array_equal(p.data, [1.0, -2.0])
    adam_step([p], [None], state, lr=0.1)
    np.testing.assert_array_equal(p.data, [1.0, -2.0])
    assert state.step == 2


def test_adam_first_step_is_learning_rate():
    p = Parameter(np.array([0.0, 0.0]))
    state = AdamState.for_params([p])
    adam_step([p], [np.array([5.0, -0.01])], state, lr=1e-3)
    np.testing.assert_allclose(p.data, [-1e-3, 1e-3], rtol=1e-5)


def test_adam_converges_on_quadratic():
    w = Parameter(np.array([0.0]))
    optimiser = Adam([w], lr=0.1)
    for _ in range(300):
        optimiser.zero_grad()
        with Tape() as tape:
            loss = ((w - 3.0) ** 2).sum()
        tape.backward(loss)
        optimiser.step()
    assert abs(w.data[0] - 3.0) < 1e-2


def test_adam_rejects_bad_gradients():
    p = Parameter(np.zeros(3), name="w")
    state = AdamState.for_params([p])
    with pytest.raises(NonFiniteGradientError, match="w"):
        adam_step([p], [np.array([0.0, np.nan, 1.0])], state, lr=0.1)
    with pytest.raises(DimensionError):
        adam_step([p], [np.zeros(2)], state, lr=0.1)
    assert state.step == 0


def test_clip_scales_global_norm():
    p = Parameter(np.zeros(2))
    p.grad = np.array([3.0, 4.0])
    scale = clip_gradients([p], 1.0)
    assert scale == pytest.approx(0.2)
    np.testing.assert_allclose(p.grad, [0.6, 0.8])

    p.grad = np.array([0.3, 0.4])
    assert clip_gradients([p], 1.0) == 1.0
    np.testing.assert_array_equal(p.grad, [0.3, 0.4])


def test_clip_bounds_random_gradients(rng):
    params = [Parameter(np.zeros((3, 4))), Parameter(np.zeros(5)), Parameter(np.zeros(2))]
    for _ in range(200):
        for p in params[:2]:
            p.grad = rng.normal(size=p.shape) * rng.uniform(0.01, 100.0)
        params[2].grad = None
        before = global_grad_norm(params)
        clip_gradients(params, 1.0)
        after = global_grad_norm(params)
        assert after <= 1.0 + 1e-12
        if before <= 1.0:
            assert after == before


def test_train_config_defaults():
    assert TrainConfig().batch_size == 16
    assert TrainConfig().early_stop_patience == 30
    tcn = TrainConfig.for_model("tcn", learning_rate=1e-3)
    assert (tcn.batch_size, tcn.early_stop_patience, tcn.learning_rate) == (256, 10, 1e-3)


def test_fit_keeps_best_parameters(datasets):
    train, val = datasets
    model = small_tcn()
    config = TrainConfig(learning_rate=0.01, batch_size=8, max_epochs=6, seed=3)
    result = fit(model, train, val, config)
    report = result.report
    assert [r.epoch for r in report.epochs] == list(range(1, report.stopped_epoch + 1))
    assert report.best_val_loss == min(r.val_loss for r in report.epochs)
    assert report.epochs[report.best_epoch - 1].val_loss == report.best_val_loss
    assert validation_loss(model, val, 8) == report.best_val_loss
    for name, value in model.state_dict().items():
        np.testing.assert_array_equal(value, result.best_state[name])
    assert report.to_csv().splitlines()[0] == "epoch,train_loss,val_loss,lr"


def test_fit_is_deterministic(datasets):
    train, val = datasets
    config = TrainConfig(learning_rate=0.01, batch_size=8, max_epochs=3, seed=11)
    first = fit(small_tcn(5), train, val, config).report
    second = fit(small_tcn(5), train, val, config).report
    assert first.to_csv() == second.to_csv()
    assert first.summary() == second.summary()


def test_plateau_halves_rate_then_stops(datasets):
    train, val = datasets
    # nothing after the first epoch clears this tolerance
    config = TrainConfig(learning_rate=0.01, batch_size=16, max_epochs=20, scheduler_patience=2,
                         early_stop_patience=5, improvement_tolerance=1e9)
    report = fit(small_tcn(), train, val, config).report
    assert report.stop_reason == "early_stop"
    assert report.stopped_epoch == 6
    assert report.best_epoch == 1
    assert [r.lr for r in report.epochs] == pytest.approx([0.01, 0.01, 0.01, 0.005, 0.005, 0.0025])


def test_max_epochs_override(datasets):
    train, val = datasets
    report = fit(small_tcn(), train, val, TrainConfig(max_epochs=50), max_epochs=1).report
    assert len(report.epochs) == 1
    assert report.stop_reason == "max_epochs"


def test_nan_loss_aborts_with_last_good_state(datasets):
    _, val = datasets
    values = np.linspace(0.0, 1.0, 30)
    values[-1] = np.nan
    model = small_tcn()
    initial = model.state_dict()
    with pytest.raises(TrainingAbortedError) as excinfo:
        fit(model, make_windows(values, 4), val, TrainConfig(batch_size=64))
    assert excinfo.value.epoch == 1
    for name, value in initial.items():
        np.testing.assert_array_equal(excinfo.value.last_good_state[name], value)


def test_parameterless_model_records_no_epochs(datasets):
    train, val = datasets
    result = fit(NaiveForecaster(NaiveConfig(sequence_length=4)), train, val, TrainConfig())
    assert result.report.epochs == []
    assert result.report.stop_reason == "no_parameters"
    assert result.report.best_val_loss == pytest.approx(float(np.mean((val.inputs[:, -1] - val.targets) ** 2)))
