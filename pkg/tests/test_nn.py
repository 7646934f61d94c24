"""Tests for utils.nn (layers, loss, optimizer, gradient checking)."""

import numpy as np
import pytest

from utils.nn import (
    BatchNormState, Conv2D, Dense, LayerSpec, MaxPool, NonFiniteError, OptimizerState, RMSprop, Sequential,
    ShapeError, batchnorm_forward, conv2d_forward, dropout_forward, fc_forward, grad_check, init_uniform,
    maxpool_backward, maxpool_forward, mse_loss, numeric_gradient, relative_error, rmsprop_step,
)

SEEDS = range(20)


def _chain(*layers, in_shape, seed=0):
    return Sequential(list(layers), in_shape, seed)


# ============================================================================
# Convolution / pooling
# ============================================================================


class TestConv2D:
    def test_worked_example(self):
        x = np.arange(1, 10, dtype=float).reshape(3, 3, 1)
        w = np.ones((2, 2, 1, 1))
        out, _ = conv2d_forward(x, w, np.zeros(1))
        assert out[..., 0].tolist() == [[12.0, 16.0], [24.0, 28.0]]

    def test_output_geometry(self):
        x = np.zeros((2, 257, 5, 1))
        out, _ = conv2d_forward(x, np.zeros((12, 2, 1, 10)), np.zeros(10))
        assert out.shape == (2, 246, 4, 10)

    def test_kernel_too_large(self):
        with pytest.raises(ShapeError, match="larger than input"):
            conv2d_forward(np.zeros((1, 3, 3, 1)), np.zeros((4, 1, 1, 1)), np.zeros(1))

    def test_channel_mismatch(self):
        with pytest.raises(ShapeError, match="does not match"):
            conv2d_forward(np.zeros((1, 6, 6, 2)), np.zeros((2, 2, 3, 1)), np.zeros(1))

    @pytest.mark.parametrize("seed", SEEDS)
    def test_gradients(self, seed):
        rng = np.random.default_rng(seed)
        layer = Conv2D("c", (3, 2), 2, 3, rng=rng)
        net = _chain(layer, in_shape=(6, 6, 2))
        x = rng.standard_normal((2, 6, 6, 2))
        target = rng.standard_normal((2, 4, 5, 3))
        assert grad_check(net, x, target, seed=seed) < 1e-4

    def test_input_gradient(self):
        rng = np.random.default_rng(1)
        layer = Conv2D("c", (2, 2), 1, 2, rng=rng)
        net = _chain(layer, in_shape=(4, 4, 1)).astype(np.float64)
        x = rng.standard_normal((1, 4, 4, 1))
        target = rng.standard_normal((1, 3, 3, 2))
        _, grad = mse_loss(net.forward(x), target)
        dx = net.backward(grad)
        numeric = numeric_gradient(lambda: net.loss(x, target), x, (0, 1, 2, 0), 1e-5)
        assert relative_error(float(dx[0, 1, 2, 0]), numeric) < 1e-6


class TestMaxPool:
    def test_constant_input(self):
        out, _ = maxpool_forward(np.full((1, 4, 3, 2), 7.0), (2, 1))
        assert out.shape == (1, 2, 3, 2)
        assert np.all(out == 7.0)

    def test_audio_branch_rows(self):
        out, _ = maxpool_forward(np.zeros((1, 246, 4, 10)), (2, 1))
        assert out.shape == (1, 123, 4, 10)

    @pytest.mark.parametrize("seed", range(5))
    def test_linear_in_input(self, seed):
        rng = np.random.default_rng(seed)
        w = rng.standard_normal((3, 2, 2, 4))
        x, y = rng.standard_normal((2, 7, 5, 2)), rng.standard_normal((2, 7, 5, 2))
        a, b = rng.uniform(-2.0, 2.0, 2)
        combined, _ = conv2d_forward(a * x + b * y, w, np.zeros(4))
        fx, _ = conv2d_forward(x, w, np.zeros(4))
        fy, _ = conv2d_forward(y, w, np.zeros(4))
        assert np.allclose(combined, a * fx + b * fy, atol=1e-10)

    def test_odd_rows_dropped(self):
        out, _ = maxpool_forward(np.arange(5.0).reshape(1, 5, 1, 1), (2, 1))
        assert out[0, :, 0, 0].tolist() == [1.0, 3.0]

    def test_routes_to_argmax(self):
        x = np.array([1.0, 5.0, 4.0, 2.0]).reshape(1, 4, 1, 1)
        out, cache = maxpool_forward(x, (2, 1))
        dx = maxpool_backward(np.ones_like(out), cache)
        assert dx[0, :, 0, 0].tolist() == [0.0, 1.0, 1.0, 0.0]

    @pytest.mark.parametrize("seed", SEEDS)
    def test_gradients_through_pool(self, seed):
        rng = np.random.default_rng(seed)
        net = _chain(Conv2D("c", (2, 1), 1, 2, rng=rng), MaxPool("p", (2, 1)), in_shape=(9, 3, 1))
        x = rng.standard_normal((2, 9, 3, 1))
        target = rng.standard_normal((2, 4, 3, 2))
        assert grad_check(net, x, target, seed=seed) < 1e-4

    def test_frozen_pool_reuses_routing(self):
        pool = MaxPool("p", (2, 1))
        pool.forward(np.array([1.0, 5.0, 4.0, 2.0]).reshape(1, 4, 1, 1), True, None)
        pool.frozen = True
        out = pool.forward(np.array([6.0, 5.0, 4.0, 7.0]).reshape(1, 4, 1, 1), True, None)
        assert out[0, :, 0, 0].tolist() == [5.0, 4.0]
        pool.frozen = False
        out = pool.forward(np.array([6.0, 5.0, 4.0, 7.0]).reshape(1, 4, 1, 1), True, None)
        assert out[0, :, 0, 0].tolist() == [6.0, 7.0]

    def test_routing_shape_checked(self):
        with pytest.raises(ShapeError, match="Routing"):
            maxpool_forward(np.zeros((1, 4, 1, 1)), (2, 1), arg=np.zeros((1, 3, 1, 1), dtype=int))

    def test_near_tie_gradients(self):
        # the two rows pool to 1.0001 and 1.0, so a 1e-3 step on the second weight flips the max
        conv = Conv2D("c", (1, 2), 1, 1)
        conv.params["c.w"] = np.array([1.0001, 1.0]).reshape(1, 2, 1, 1)
        net = _chain(conv, MaxPool("p", (2, 1)), in_shape=(2, 2, 1))
        x = np.array([[1.0, 0.0], [0.0, 1.0]]).reshape(1, 2, 2, 1)
        target = np.zeros((1, 1, 1, 1))
        net.forward(x)
        unfrozen = numeric_gradient(lambda: net.loss(x, target), conv.params["c.w"], (0, 1, 0, 0), 1e-3)
        assert unfrozen > 0.1
        assert grad_check(net, x, target) < 1e-6


# ============================================================================
# Fully connected / batch norm / dropout
# ============================================================================


class TestDense:
    def test_linear_forward(self):
        y, _ = fc_forward(np.array([1.0, 2.0]), np.array([[1.0, 0.0], [0.0, 2.0]]), np.array([0.5, 0.5]))
        assert y.tolist() == [1.5, 4.5]

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError, match="does not match"):
            fc_forward(np.zeros((2, 3)), np.zeros((4, 1)), np.zeros(1))

    @pytest.mark.parametrize("seed", SEEDS)
    def test_sigmoid_gradients(self, seed):
        rng = np.random.default_rng(seed)
        net = _chain(Dense("f", 12, 5, "sigmoid", rng=rng), Dense("g", 5, 3, rng=rng), in_shape=(3, 4))
        x = rng.standard_normal((3, 3, 4))
        assert grad_check(net, x, rng.standard_normal((3, 3)), seed=seed) < 1e-4

    def test_flattens_input(self):
        net = _chain(Dense("f", 12, 2), in_shape=(3, 4))
        assert net.forward(np.zeros((5, 3, 4))).shape == (5, 2)


class TestBatchNorm:
    def test_standardized_batch_unchanged(self):
        x = np.array([[-1.0, 2.0], [1.0, -2.0]])
        x = x / x.std(axis=0)
        state = BatchNormState(np.zeros(2), np.ones(2))
        out, _ = batchnorm_forward(x, np.ones(2), np.zeros(2), state, training=True)
        assert np.allclose(out, x, atol=1e-5)

    def test_unit_batch_variance(self):
        x = np.random.default_rng(0).normal(3.0, 5.0, (64, 4))
        state = BatchNormState(np.zeros(4), np.ones(4))
        out, _ = batchnorm_forward(x, np.ones(4), np.zeros(4), state, training=True)
        assert np.allclose(out.var(axis=0), 1.0, atol=1e-4)

    def test_running_stats_move(self):
        x = np.full((4, 2), 10.0) + np.arange(4.0)[:, None]
        state = BatchNormState(np.zeros(2), np.ones(2))
        batchnorm_forward(x, np.ones(2), np.zeros(2), state, training=True)
        assert state.running_mean == pytest.approx([0.115, 0.115])

    def test_inference_uses_running_stats(self):
        state = BatchNormState(np.array([1.0]), np.array([4.0]), eps=0.0)
        out, _ = batchnorm_forward(np.array([[5.0]]), np.ones(1), np.zeros(1), state, training=False)
        assert out[0, 0] == pytest.approx(2.0)

    def test_training_needs_two(self):
        state = BatchNormState(np.zeros(1), np.ones(1))
        with pytest.raises(ShapeError, match="at least 2"):
            batchnorm_forward(np.zeros((1, 1)), np.ones(1), np.zeros(1), state, training=True)

    @pytest.mark.parametrize("seed", SEEDS)
    def test_gradients(self, seed):
        rng = np.random.default_rng(seed)
        net = _chain(Dense("f", 6, 4, "sigmoid", batchnorm=True, rng=rng), Dense("g", 4, 2, rng=rng), in_shape=(6,))
        x = rng.standard_normal((5, 6))
        assert grad_check(net, x, rng.standard_normal((5, 2)), seed=seed) < 1e-3

    @pytest.mark.parametrize("seed", range(5))
    def test_conv_gradients(self, seed):
        rng = np.random.default_rng(seed)
        net = _chain(Conv2D("c", (2, 2), 1, 2, batchnorm=True, rng=rng), in_shape=(4, 4, 1))
        x = rng.standard_normal((3, 4, 4, 1))
        assert grad_check(net, x, rng.standard_normal((3, 3, 3, 2)), seed=seed) < 1e-3


    def test_normed_layers_drop_bias(self):
        assert set(Dense("f", 4, 3, batchnorm=True).params) == {"f.w", "f.gamma", "f.beta"}
        assert set(Dense("f", 4, 3).params) == {"f.w", "f.b"}
        assert set(Conv2D("c", (2, 2), 1, 2, batchnorm=True, center=False).params) == {"c.w", "c.gamma"}

    def test_uncentered_gradients(self):
        rng = np.random.default_rng(0)
        net = _chain(Conv2D("c", (2, 2), 1, 2, batchnorm=True, center=False, rng=rng), in_shape=(4, 4, 1))
        x = rng.standard_normal((3, 4, 4, 1))
        target = rng.standard_normal((3, 3, 3, 2))
        _, grads = net.loss_and_grads(x, target)
        assert set(grads) == {"c.w", "c.gamma"}
        assert grad_check(net, x, target) < 1e-3


class TestDropout:
    def test_inference_identity(self):
        x = np.ones((10, 10))
        out, mask = dropout_forward(x, 0.5, np.random.default_rng(0), training=False)
        assert out is x
        assert mask is None

    def test_drop_fraction_and_scale(self):
        x = np.ones((200, 100))
        out, _ = dropout_forward(x, 0.1, np.random.default_rng(0), training=True)
        assert np.mean(out == 0.0) == pytest.approx(0.1, abs=0.01)
        assert np.allclose(out[out > 0], 1.0 / 0.9)

    def test_bad_rate(self):
        with pytest.raises(ShapeError, match="Dropout rate"):
            LayerSpec("fc", units=3, dropout=1.0)

    @pytest.mark.parametrize("seed", range(5))
    def test_gradients_with_fixed_mask(self, seed):
        rng = np.random.default_rng(seed)
        net = _chain(Dense("f", 8, 6, "sigmoid", dropout=0.3, rng=rng), Dense("g", 6, 2, rng=rng),
                     in_shape=(8,), seed=seed)
        x = rng.standard_normal((4, 8))
        assert grad_check(net, x, rng.standard_normal((4, 2)), seed=seed) < 1e-4


# ============================================================================
# Loss / optimizer / init
# ============================================================================


class TestLoss:
    def test_mse(self):
        loss, grad = mse_loss(np.array([[1.0, 2.0], [0.0, 0.0]]), np.zeros((2, 2)))
        assert loss == pytest.approx(2.5)
        assert grad.tolist() == [[1.0, 2.0], [0.0, 0.0]]

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError, match="differ"):
            mse_loss(np.zeros((2, 3)), np.zeros((3, 2)))


class TestRMSprop:
    def test_first_step(self):
        p = {"w": np.array([1.0])}
        state = OptimizerState(lr=1e-4)
        rmsprop_step(p, {"w": np.array([1.0])}, state)
        assert state.v["w"][0] == pytest.approx(0.1)
        assert p["w"][0] == pytest.approx(1.0 - 1e-4 / np.sqrt(0.1), rel=1e-6)
        assert 1.0 - p["w"][0] == pytest.approx(3.1623e-4, rel=1e-4)

    def test_updates_in_place(self):
        w = np.ones(3, np.float32)
        params = {"w": w}
        RMSprop(lr=0.01).step(params, {"w": np.ones(3, np.float32)})
        assert params["w"] is w
        assert np.all(w < 1.0)

    def test_zero_lr_is_noop(self):
        w = np.ones(3)
        RMSprop(lr=0.0).step({"w": w}, {"w": np.ones(3)})
        assert np.all(w == 1.0)

    def test_gradient_shape_checked(self):
        with pytest.raises(ShapeError, match="gradient"):
            RMSprop().step({"w": np.ones(3)}, {"w": np.ones(2)})

    def test_fits_linear_regression(self):
        rng = np.random.default_rng(0)
        net = _chain(Dense("f", 3, 1, init="scaled", rng=rng), in_shape=(3,))
        x = rng.standard_normal((64, 3)).astype(np.float32)
        y = (x @ np.array([[1.0], [-2.0], [0.5]])).astype(np.float32)
        opt = RMSprop(lr=0.01)
        first = net.loss(x, y)
        for _ in range(1000):
            _, grads = net.loss_and_grads(x, y)
            opt.step(net.parameters(), grads)
        assert net.loss(x, y) < 0.01 * first


class TestInit:
    def test_uniform_range(self):
        w = init_uniform((1000,), 10, 10, "uniform", np.random.default_rng(0))
        assert w.min() >= -1.0 and w.max() <= 1.0
        assert w.max() > 0.9

    def test_scaled_range(self):
        w = init_uniform((1000,), 10, 14, "scaled", np.random.default_rng(0))
        assert np.abs(w).max() <= np.sqrt(6.0 / 24)

    def test_unknown_mode(self):
        with pytest.raises(ShapeError, match="Unknown init mode"):
            init_uniform((2,), 1, 1, "normal", np.random.default_rng(0))


# ============================================================================
# Sequential / gradient checker
# ============================================================================


class TestSequential:
    def test_input_shape_checked(self):
        net = _chain(Dense("f", 4, 2), in_shape=(4,))
        with pytest.raises(ShapeError, match="per-sample input"):
            net.forward(np.zeros((2, 5)))

    def test_nan_is_hard_failure(self):
        net = _chain(Dense("f", 2, 2), in_shape=(2,))
        with pytest.raises(NonFiniteError, match="f"):
            net.forward(np.array([[np.nan, 0.0], [0.0, 0.0]]))

    def test_load_checks_shapes(self):
        net = _chain(Dense("f", 2, 2), in_shape=(2,))
        with pytest.raises(ShapeError, match="f.w"):
            net.load({"f.w": np.zeros((3, 2))})

    def test_negative_control_detected(self):
        rng = np.random.default_rng(0)
        net = _chain(Dense("f", 4, 3, "sigmoid", rng=rng), in_shape=(4,))
        x, y = rng.standard_normal((3, 4)), rng.standard_normal((3, 3))
        doubled = grad_check(net, x, y, grad_transform=lambda g: {k: 2 * v for k, v in g.items()})
        assert doubled > 0.1
        assert grad_check(net, x, y) < 1e-4

    def test_relative_error_floor(self):
        assert relative_error(0.0, 1e-10) == pytest.approx(1e-2)
        assert relative_error(0.0, 1e-10, floor=1e-6) == pytest.approx(1e-4)
        assert relative_error(2.0, 1.0) == pytest.approx(0.5)

    def test_scaled_floor_is_opt_in(self):
        rng = np.random.default_rng(0)
        net = _chain(Dense("f", 4, 3, "sigmoid", rng=rng), in_shape=(4,))
        x, y = rng.standard_normal((3, 4)), rng.standard_normal((3, 3))
        plain = grad_check(net, x, y)
        assert grad_check(net, x, y, floor_scale=1e-7) <= plain
