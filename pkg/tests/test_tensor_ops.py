"""Forward-op tests against trivial cases and nested-loop oracles."""

import numpy as np
import pytest

from gazelab import ops
from gazelab import tensor as T
from gazelab.tensor import ShapeError, Tensor

import reference


def t(arr, **kw):
    return Tensor(np.asarray(arr, dtype=np.float32), **kw)


class TestConv2d:
    def test_ones_stride2(self):
        x = t(np.ones((1, 1, 4, 4)))
        w = t(np.ones((1, 1, 2, 2)))
        out = ops.conv2d(x, w, stride=2)
        assert out.dims == (1, 1, 2, 2)
        np.testing.assert_array_equal(out.data, np.full((1, 1, 2, 2), 4.0, np.float32))

    def test_ones_stride1(self):
        x = t(np.ones((1, 1, 4, 4)))
        w = t(np.ones((1, 1, 2, 2)))
        out = ops.conv2d(x, w, stride=1)
        assert out.dims == (1, 1, 3, 3)
        np.testing.assert_array_equal(out.data, np.full((1, 1, 3, 3), 4.0, np.float32))

    def test_matches_nested_loop_oracle(self):
        rng = np.random.default_rng(11)
        x = rng.standard_normal((1, 2, 8, 8)).astype(np.float32)
        w = rng.standard_normal((3, 2, 3, 3)).astype(np.float32)
        b = rng.standard_normal(3).astype(np.float32)
        got = ops.conv2d(t(x), t(w), t(b), stride=2, padding=1).data
        want = reference.conv2d_ref(x, w, b, stride=2, padding=1)
        np.testing.assert_allclose(got, want, atol=1e-6)

    def test_channel_mismatch_names_axis(self):
        with pytest.raises(ShapeError, match="channel"):
            ops.conv2d(t(np.ones((1, 2, 4, 4))), t(np.ones((1, 3, 2, 2))))

    def test_kernel_too_large(self):
        with pytest.raises(ShapeError, match="kernel"):
            ops.conv2d(t(np.ones((1, 1, 3, 3))), t(np.ones((1, 1, 5, 5))))

    def test_linearity_bias_free(self):
        rng = np.random.default_rng(3)
        a = rng.standard_normal((1, 2, 6, 6)).astype(np.float32)
        b = rng.standard_normal((1, 2, 6, 6)).astype(np.float32)
        w = t(rng.standard_normal((2, 2, 3, 3)).astype(np.float32))
        f = lambda arr: ops.conv2d(t(arr), w, stride=1, padding=1).data
        np.testing.assert_allclose(f(a + b), f(a) + f(b), atol=1e-5)
        np.testing.assert_allclose(f(2.5 * a), 2.5 * f(a), atol=1e-5)

    def test_output_size_formula(self):
        rng = np.random.default_rng(5)
        for h in (5, 8, 13):
            for k in (1, 2, 3, 5):
                for s in (1, 2, 3):
                    for p in (0, 1, 2):
                        if k > h + 2 * p:
                            continue
                        x = t(rng.standard_normal((1, 1, h, h)).astype(np.float32))
                        w = t(np.ones((1, 1, k, k), np.float32))
                        out = ops.conv2d(x, w, stride=s, padding=p)
                        expect = (h + 2 * p - k) // s + 1
                        assert out.dims[2] == expect and out.dims[3] == expect


class TestPooling:
    def test_maxpool_basic(self):
        x = t(np.array([1, 2, 3, 4], np.float32).reshape(1, 1, 2, 2))
        out = ops.maxpool2d(x, 2, 2)
        np.testing.assert_array_equal(out.data, [[[[4.0]]]])

    def test_maxpool_tie_routes_first(self):
        x = t(np.full((1, 1, 2, 2), 7.0), requires_grad=True)
        with T.Tape() as tape:
            loss = T.sum_all(ops.maxpool2d(x, 2, 2))
        T.backward(loss, tape)
        np.testing.assert_array_equal(out_grad := x.grad[0, 0], [[1, 0], [0, 0]])

    def test_maxpool_oracle(self):
        rng = np.random.default_rng(7)
        x = rng.standard_normal((1, 1, 6, 6)).astype(np.float32)
        got = ops.maxpool2d(t(x), 3, 2).data
        np.testing.assert_allclose(got, reference.maxpool2d_ref(x, 3, 2), atol=1e-6)

    def test_maxpool_kernel_too_large(self):
        with pytest.raises(ShapeError):
            ops.maxpool2d(t(np.ones((1, 1, 2, 2))), 5, 1, padding=1)

    def test_avgpool_basic(self):
        x = t(np.array([1, 2, 3, 4], np.float32).reshape(1, 1, 2, 2))
        np.testing.assert_allclose(ops.avgpool2d(x, 2, 2).data, [[[[2.5]]]])

    def test_avgpool_constant(self):
        x = t(np.full((1, 2, 4, 4), 3.25))
        np.testing.assert_allclose(ops.avgpool2d(x, 2, 2).data, 3.25)

    def test_avgpool_oracle(self):
        rng = np.random.default_rng(9)
        x = rng.standard_normal((1, 1, 6, 6)).astype(np.float32)
        got = ops.avgpool2d(t(x), 2, 2).data
        np.testing.assert_allclose(got, reference.avgpool2d_ref(x, 2, 2), atol=1e-6)

    def test_global_avg_pool_matches_avgpool(self):
        rng = np.random.default_rng(13)
        x = rng.standard_normal((2, 3, 5, 5)).astype(np.float32)
        a = ops.global_avg_pool(t(x)).data
        b = ops.avgpool2d(t(x), 5, 1).data.reshape(2, 3)
        np.testing.assert_allclose(a, b, atol=1e-6)


class TestLinear:
    def test_identity(self):
        x = t(np.arange(6).reshape(2, 3))
        out = ops.linear(x, t(np.eye(3)), t(np.zeros(3)))
        np.testing.assert_array_equal(out.data, x.data)

    def test_zero_weight_gives_bias(self):
        x = t(np.random.default_rng(0).standard_normal((4, 3)))
        b = np.array([1.5, -2.0], np.float32)
        out = ops.linear(x, t(np.zeros((2, 3))), t(b))
        np.testing.assert_array_equal(out.data, np.tile(b, (4, 1)))

    def test_dot_product_oracle(self):
        rng = np.random.default_rng(21)
        x = rng.standard_normal((2, 3)).astype(np.float32)
        w = rng.standard_normal((4, 3)).astype(np.float32)
        b = rng.standard_normal(4).astype(np.float32)
        got = ops.linear(t(x), t(w), t(b)).data
        np.testing.assert_allclose(got, reference.linear_ref(x, w, b), atol=1e-6)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError, match="feature"):
            ops.linear(t(np.ones((2, 3))), t(np.ones((4, 5))))


class TestElementwise:
    def test_relu(self):
        out = T.relu(t([-1.0, 0.0, 2.0]))
        np.testing.assert_array_equal(out.data, [0.0, 0.0, 2.0])

    def test_softmax_uniform(self):
        out = T.softmax_lastdim(t([[0.0, 0.0]]))
        np.testing.assert_allclose(out.data, [[0.5, 0.5]])

    def test_softmax_rows_sum_to_one(self):
        rng = np.random.default_rng(2)
        out = T.softmax_lastdim(t(rng.standard_normal((5, 7)) * 10))
        np.testing.assert_allclose(out.data.sum(-1), 1.0, atol=1e-6)

    def test_concat(self):
        a, b = t(np.ones((2, 3))), t(np.zeros((2, 2)))
        out = T.concat([a, b], axis=1)
        assert out.dims == (2, 5)
        with pytest.raises(ShapeError):
            T.concat([a, t(np.ones((3, 3)))], axis=1)


class TestBatchNorm:
    def test_eval_identity_stats(self):
        x = t(np.random.default_rng(1).standard_normal((2, 3, 4, 4)))
        state = ops.BatchNormState(3)
        out = ops.batchnorm2d(x, t(np.ones(3)), t(np.zeros(3)), state, training=False)
        np.testing.assert_allclose(out.data, x.data, atol=1e-4)

    def test_train_normalizes(self):
        rng = np.random.default_rng(4)
        x = t(rng.standard_normal((8, 3, 6, 6)) * 3 + 1)
        state = ops.BatchNormState(3)
        out = ops.batchnorm2d(x, t(np.ones(3)), t(np.zeros(3)), state, training=True)
        mean = out.data.mean(axis=(0, 2, 3))
        var = out.data.var(axis=(0, 2, 3))
        assert np.abs(mean).max() < 1e-5
        assert np.abs(var - 1.0).max() < 1e-3

    def test_train_updates_running_stats(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal((4, 2, 3, 3)).astype(np.float32) + 2.0
        state = ops.BatchNormState(2)
        ops.batchnorm2d(t(x), t(np.ones(2)), t(np.zeros(2)), state, training=True)
        want_mean = 0.1 * x.mean(axis=(0, 2, 3))
        np.testing.assert_allclose(state.running_mean, want_mean, rtol=1e-5)

    def test_degenerate_batch_rejected(self):
        x = t(np.ones((1, 2, 1, 1)))
        state = ops.BatchNormState(2)
        with pytest.raises(ShapeError, match="degenerate"):
            ops.batchnorm2d(x, t(np.ones(2)), t(np.zeros(2)), state, training=True)


class TestL1Loss:
    def test_zero_when_equal(self):
        p = t(np.random.default_rng(0).standard_normal((3, 2)))
        assert T.l1_loss(p, p).item() == 0.0

    def test_one_when_off_by_one(self):
        p = t(np.zeros((4, 2)))
        q = t(np.ones((4, 2)))
        assert T.l1_loss(p, q).item() == 1.0

    def test_scalar_oracle(self):
        rng = np.random.default_rng(6)
        a = rng.standard_normal((5, 2)).astype(np.float32)
        b = rng.standard_normal((5, 2)).astype(np.float32)
        got = T.l1_loss(t(a), t(b)).item()
        assert abs(got - reference.l1_loss_ref(a, b)) < 1e-7


def test_forward_determinism():
    def run():
        rng = np.random.default_rng(42)
        x = t(rng.standard_normal((2, 3, 16, 16)).astype(np.float32), requires_grad=True)
        w = t(rng.standard_normal((4, 3, 3, 3)).astype(np.float32), requires_grad=True)
        with T.Tape() as tape:
            h = T.relu(ops.conv2d(x, w, stride=2, padding=1))
            loss = T.sum_all(h)
        T.backward(loss, tape)
        return h.data.copy(), x.grad.copy(), w.grad.copy()

    a = run()
    b = run()
    for x, y in zip(a, b):
        assert (x == y).all()


def test_tensor_invariants():
    x = Tensor(np.arange(12, dtype=np.float32).reshape(3, 4))
    assert int(np.prod(x.dims)) == x.size
    assert x.data.flags["C_CONTIGUOUS"]
    out = T.relu(x)
    assert np.isfinite(out.data).all()
