"""Adam update and learning-rate schedule tests."""

import numpy as np
import pytest

from gazelab.optim import Adam, AdamState, adam_step
from gazelab.tensor import Tensor
from gazelab.training import ScheduleError, lr_schedule

import reference


def test_zero_gradient_leaves_param_and_moments():
    p = Tensor(np.array([1.0, -2.0], np.float32), requires_grad=True)
    state = AdamState(p)
    before = p.data.copy()
    adam_step(p, np.zeros(2, np.float32), state, lr=0.1)
    np.testing.assert_array_equal(p.data, before)
    np.testing.assert_array_equal(state.m, np.zeros(2))
    np.testing.assert_array_equal(state.v, np.zeros(2))
    assert state.step == 1


def test_first_step_magnitude_is_lr():
    """Bias correction makes the first update ~ lr * sign(g) for any |g|."""
    for g in (1e-4, 0.5, 30.0):
        p = Tensor(np.array([0.0], np.float64), requires_grad=True)
        adam_step(p, np.array([g]), AdamState(p), lr=0.01)
        assert p.data[0] == pytest.approx(-0.01, rel=1e-3)
        p = Tensor(np.array([0.0], np.float64), requires_grad=True)
        adam_step(p, np.array([-g]), AdamState(p), lr=0.01)
        assert p.data[0] == pytest.approx(0.01, rel=1e-3)


def test_three_steps_match_scalar_oracle():
    """f(x) = x^2 from x0=1, lr=0.1; float64 against the hand-rolled oracle."""
    p = Tensor(np.array([1.0], np.float64), requires_grad=True)
    state = AdamState(p)
    for _ in range(3):
        adam_step(p, np.array([2.0 * p.data[0]]), state, lr=0.1)
    want = reference.adam_scalar_ref(1.0, lambda x: 2.0 * x, lr=0.1, steps=3)
    assert abs(p.data[0] - want) < 1e-9


def test_step_counter_increments():
    p = Tensor(np.zeros(3, np.float32), requires_grad=True)
    state = AdamState(p)
    for k in range(1, 5):
        adam_step(p, np.ones(3, np.float32), state, lr=1e-3)
        assert state.step == k


def test_adam_wrapper_dedups_nothing_but_steps_all():
    params = [Tensor(np.zeros(2, np.float32), requires_grad=True) for _ in range(3)]
    for p in params:
        p.grad = np.ones(2, np.float32)
    opt = Adam(params)
    opt.step(lr=0.5)
    for p in params:
        assert p.data[0] != 0.0
    opt.zero_grad()
    assert all(p.grad is None for p in params)


class TestLrSchedule:
    def test_cnn_divides_by_ten_every_ten_epochs(self):
        assert lr_schedule("cnn", 0, 1e-4) == pytest.approx(1e-4, rel=1e-12)
        assert lr_schedule("cnn", 9, 1e-4) == pytest.approx(1e-4, rel=1e-12)
        assert lr_schedule("cnn", 10, 1e-4) == pytest.approx(1e-5, rel=1e-12)
        assert lr_schedule("cnn", 20, 1e-4) == pytest.approx(1e-6, rel=1e-12)

    def test_transformer_warmup_and_decay(self):
        assert lr_schedule("transformer", 0, 5e-4) == pytest.approx(5e-4 / 3, rel=1e-12)
        assert lr_schedule("transformer", 1, 5e-4) == pytest.approx(2 * 5e-4 / 3, rel=1e-12)
        assert lr_schedule("transformer", 2, 5e-4) == pytest.approx(5e-4, rel=1e-12)
        assert lr_schedule("transformer", 5, 5e-4) == pytest.approx(5e-4, rel=1e-12)
        assert lr_schedule("transformer", 10, 5e-4) == pytest.approx(2.5e-4, rel=1e-12)

    def test_epoch_beyond_total_rejected(self):
        with pytest.raises(ScheduleError):
            lr_schedule("cnn", 30, 1e-4)
        with pytest.raises(ScheduleError):
            lr_schedule("transformer", 50, 5e-4)
        with pytest.raises(ScheduleError):
            lr_schedule("cnn", 5, 1e-4, total_epochs=5)
        with pytest.raises(ScheduleError):
            lr_schedule("cnn", -1, 1e-4)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ScheduleError):
            lr_schedule("sgd", 0, 1e-4)
