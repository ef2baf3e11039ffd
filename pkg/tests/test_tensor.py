"""Tensor core: op semantics, gradients, adjointness, Adam."""

import numpy as np
import pytest

from s2s import tensor as T
from s2s.errors import ShapeError
from s2s.tensor import Adam, Tensor, no_grad

from helpers import assert_grads_match


def naive_conv2d(x, w, b, stride, pad):
    """Quadruple-loop cross-correlation oracle, independent of the im2col path."""
    B, Cin, H, W = x.shape
    Cout, _, kH, kW = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    Hout = (H + 2 * pad - kH) // stride + 1
    Wout = (W + 2 * pad - kW) // stride + 1
    out = np.zeros((B, Cout, Hout, Wout), dtype=np.float64)
    for bi in range(B):
        for co in range(Cout):
            for i in range(Hout):
                for j in range(Wout):
                    acc = 0.0
                    for ci in range(Cin):
                        for u in range(kH):
                            for v in range(kW):
                                acc += xp[bi, ci, i * stride + u, j * stride + v] * w[co, ci, u, v]
                    out[bi, co, i, j] = acc + b[co]
    return out


class TestConv2d:
    def test_identity_kernel(self):
        x = Tensor(np.ones((1, 1, 3, 3)))
        w = Tensor(np.ones((1, 1, 1, 1)))
        out = T.conv2d(x, w, stride=1, pad=0)
        np.testing.assert_array_equal(out.data, x.data)

    def test_strided_average_kernel(self):
        x = np.arange(16, dtype=np.float64).reshape(1, 1, 4, 4)
        w = np.full((1, 1, 2, 2), 0.25)
        b = np.zeros(1)
        out = T.conv2d(Tensor(x), Tensor(w), Tensor(b), stride=2, pad=0)
        expected = np.array([[2.5, 4.5], [10.5, 12.5]])
        np.testing.assert_allclose(out.data[0, 0], expected)
        np.testing.assert_allclose(naive_conv2d(x, w, b, 2, 0)[0, 0], expected)

    def test_matches_naive_oracle(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((2, 3, 7, 6))
        w = rng.standard_normal((4, 3, 3, 3))
        b = rng.standard_normal(4)
        for stride, pad in [(1, 0), (2, 1), (3, 2)]:
            got = T.conv2d(Tensor(x), Tensor(w), Tensor(b), stride=stride, pad=pad)
            np.testing.assert_allclose(got.data, naive_conv2d(x, w, b, stride, pad),
                                       rtol=1e-12, atol=1e-12)

    def test_output_shape_formula(self):
        x = Tensor(np.zeros((1, 1, 64, 64)))
        w = Tensor(np.zeros((1, 1, 4, 4)))
        out = T.conv2d(x, w, stride=2, pad=1)
        assert out.shape == (1, 1, 32, 32)

    def test_channel_mismatch(self):
        with pytest.raises(ShapeError):
            T.conv2d(Tensor(np.zeros((1, 2, 4, 4))), Tensor(np.zeros((1, 3, 2, 2))))

    def test_kernel_larger_than_input(self):
        with pytest.raises(ShapeError):
            T.conv2d(Tensor(np.zeros((1, 1, 2, 2))), Tensor(np.zeros((1, 1, 4, 4))))

    def test_gradients(self):
        rng = np.random.default_rng(7)
        x = rng.standard_normal((2, 2, 6, 5))
        w = rng.standard_normal((3, 2, 3, 3))
        b = rng.standard_normal(3)
        assert_grads_match(
            lambda xt, wt, bt: T.conv2d(xt, wt, bt, stride=2, pad=1).mean(),
            [x, w, b],
        )

    def test_deterministic(self):
        rng = np.random.default_rng(11)
        x = rng.standard_normal((1, 2, 8, 8)).astype(np.float32)
        w = rng.standard_normal((2, 2, 4, 4)).astype(np.float32)
        a = T.conv2d(Tensor(x), Tensor(w), stride=2, pad=1).data
        b = T.conv2d(Tensor(x), Tensor(w), stride=2, pad=1).data
        assert np.array_equal(a, b)


class TestConvTranspose2d:
    def test_identity_kernel(self):
        x = Tensor(np.arange(9, dtype=np.float64).reshape(1, 1, 3, 3))
        w = Tensor(np.ones((1, 1, 1, 1)))
        out = T.conv_transpose2d(x, w, stride=1, pad=0)
        np.testing.assert_array_equal(out.data, x.data)

    def test_output_shape_formula(self):
        x = Tensor(np.zeros((1, 1, 32, 32)))
        w = Tensor(np.zeros((1, 1, 4, 4)))
        out = T.conv_transpose2d(x, w, stride=2, pad=1)
        assert out.shape == (1, 1, 64, 64)

    def test_adjoint_identity(self):
        rng = np.random.default_rng(5)
        for seed in range(5):
            r = np.random.default_rng(seed)
            x = r.standard_normal((1, 2, 8, 8))
            w = r.standard_normal((3, 2, 4, 4))
            y = r.standard_normal((1, 3, 4, 4))
            conv_xy = T.conv2d(Tensor(x), Tensor(w), stride=2, pad=1).data
            convt_y = T.conv_transpose2d(Tensor(y), Tensor(w), stride=2, pad=1).data
            lhs = float(np.sum(conv_xy * y))
            rhs = float(np.sum(x * convt_y))
            assert abs(lhs - rhs) / max(abs(lhs), abs(rhs)) <= 1e-6
        del rng

    def test_channel_mismatch(self):
        with pytest.raises(ShapeError):
            T.conv_transpose2d(Tensor(np.zeros((1, 2, 4, 4))),
                               Tensor(np.zeros((3, 1, 2, 2))))

    def test_gradients(self):
        rng = np.random.default_rng(13)
        x = rng.standard_normal((2, 3, 4, 4))
        w = rng.standard_normal((3, 2, 4, 4))
        b = rng.standard_normal(2)
        assert_grads_match(
            lambda xt, wt, bt: T.conv_transpose2d(xt, wt, bt, stride=2, pad=1).mean(),
            [x, w, b],
        )


class TestActivations:
    def test_values(self):
        x = Tensor(np.array([-1.0, 0.0, 2.0]))
        np.testing.assert_allclose(T.leaky_relu(x, 0.2).data, [-0.2, 0.0, 2.0])
        np.testing.assert_allclose(T.relu(x).data, [0.0, 0.0, 2.0])
        assert T.sigmoid(Tensor(np.array([0.0]))).data[0] == 0.5
        assert T.tanh(Tensor(np.array([0.0]))).data[0] == 0.0

    def test_activation_dispatcher(self):
        x = Tensor(np.array([-1.0]))
        assert T.activation(x, "leaky_relu", alpha=0.2).data[0] == pytest.approx(-0.2)
        with pytest.raises(ValueError):
            T.activation(x, "swish")

    def test_tanh_gradient_at_zero(self):
        x = Tensor(np.array([0.0]), requires_grad=True)
        T.tanh(x).sum().backward()
        assert x.grad[0] == pytest.approx(1.0)

    def test_gradients(self):
        rng = np.random.default_rng(17)
        x = rng.standard_normal((3, 4)) + 0.05  # keep clear of the relu kink
        for fn in [T.relu, lambda t: T.leaky_relu(t, 0.2), T.tanh, T.sigmoid]:
            assert_grads_match(lambda t, f=fn: f(t).mean(), [x])

    def test_sigmoid_extreme_logits(self):
        out = T.sigmoid(Tensor(np.array([-1e4, 1e4])))
        assert np.all(np.isfinite(out.data))
        assert out.data[0] == pytest.approx(0.0, abs=1e-30)
        assert out.data[1] == pytest.approx(1.0)


class TestBatchNorm:
    def test_constant_input_returns_beta(self):
        x = Tensor(np.full((2, 3, 4, 4), 1.7))
        gamma = Tensor(np.ones(3))
        beta = Tensor(np.full(3, 0.7))
        out = T.batch_norm(x, gamma, beta, eps=1e-5)
        np.testing.assert_allclose(out.data, 0.7, atol=1e-3)

    def test_two_value_channel(self):
        # mean 2, population variance 1 -> normalized to -1, +1
        x = Tensor(np.array([1.0, 3.0]).reshape(2, 1, 1, 1))
        out = T.batch_norm(x, Tensor(np.ones(1)), Tensor(np.zeros(1)), eps=1e-12)
        np.testing.assert_allclose(out.data.reshape(-1), [-1.0, 1.0], atol=1e-6)

    def test_eval_mode_uses_running_stats(self):
        rm = np.array([1.0], dtype=np.float64)
        rv = np.array([4.0], dtype=np.float64)
        x = Tensor(np.array([3.0]).reshape(1, 1, 1, 1))
        out = T.batch_norm(x, Tensor(np.ones(1)), Tensor(np.zeros(1)), eps=0.0,
                           training=False, running_mean=rm, running_var=rv)
        assert out.data.reshape(-1)[0] == pytest.approx(1.0)

    def test_running_stats_update(self):
        rm = np.zeros(1)
        rv = np.ones(1)
        x = Tensor(np.full((4, 1, 2, 2), 10.0))
        T.batch_norm(x, Tensor(np.ones(1)), Tensor(np.zeros(1)),
                     running_mean=rm, running_var=rv, momentum=0.1)
        assert rm[0] == pytest.approx(1.0)
        assert rv[0] == pytest.approx(0.9)

    def test_gradients(self):
        rng = np.random.default_rng(23)
        x = rng.standard_normal((3, 2, 4, 4))
        gamma = rng.standard_normal(2) + 1.0
        beta = rng.standard_normal(2)
        assert_grads_match(
            lambda xt, gt, bt: T.batch_norm(xt, gt, bt, eps=1e-5).mean(),
            [x, gamma, beta],
        )


class TestLosses:
    def test_bce_at_even_odds(self):
        out = T.bce_with_logits(Tensor(np.zeros((2, 2))), Tensor(np.ones((2, 2))))
        assert out.item() == pytest.approx(np.log(2.0), abs=1e-9)

    def test_bce_saturated_logits_stay_finite(self):
        out = T.bce_with_logits(Tensor(np.array([100.0])), Tensor(np.array([1.0])))
        assert np.isfinite(out.item())
        assert out.item() <= 1e-40
        big = T.bce_with_logits(Tensor(np.array([-1e4])), Tensor(np.array([1.0])))
        assert np.isfinite(big.item())

    def test_bce_gradient_is_sigmoid_minus_target(self):
        rng = np.random.default_rng(29)
        z = rng.standard_normal((3, 5))
        t = (rng.random((3, 5)) > 0.5).astype(np.float64)
        zt = Tensor(z, requires_grad=True)
        T.bce_with_logits(zt, Tensor(t)).backward()
        expected = (1.0 / (1.0 + np.exp(-z)) - t) / z.size
        np.testing.assert_allclose(zt.grad, expected, atol=1e-10)

    def test_bce_shape_mismatch(self):
        with pytest.raises(ShapeError):
            T.bce_with_logits(Tensor(np.zeros(3)), Tensor(np.zeros(4)))

    def test_l1_values(self):
        a = Tensor(np.array([0.0, 1.0]))
        b = Tensor(np.array([1.0, 1.0]))
        assert T.l1_loss(a, a).item() == 0.0
        assert T.l1_loss(a, b).item() == pytest.approx(0.5)

    def test_l1_shape_mismatch(self):
        with pytest.raises(ShapeError):
            T.l1_loss(Tensor(np.zeros(2)), Tensor(np.zeros(3)))

    def test_l1_gradient(self):
        rng = np.random.default_rng(31)
        a = rng.standard_normal((4, 4))
        b = a + np.where(rng.standard_normal((4, 4)) > 0, 0.5, -0.5)  # away from ties
        assert_grads_match(lambda at, bt: T.l1_loss(at, bt), [a, b])

    def test_l1_subgradient_zero_at_ties(self):
        a = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        T.l1_loss(a, Tensor(np.array([1.0, 2.0]))).backward()
        np.testing.assert_array_equal(a.grad, [0.0, 0.0])


class TestBackward:
    def test_square_gradient(self):
        x = Tensor(np.array([3.0]), requires_grad=True)
        (x * x).sum().backward()
        assert x.grad[0] == pytest.approx(6.0)

    def test_non_scalar_rejected(self):
        x = Tensor(np.zeros(3), requires_grad=True)
        with pytest.raises(ValueError, match="scalar"):
            (x * 2.0).backward()

    def test_reuse_accumulates_linearly(self):
        # a tensor consumed k times gets exactly k single-use gradients
        x = Tensor(np.array([2.0]), requires_grad=True)
        (x * 1.0).sum().backward()
        single = x.grad.copy()
        for k in (2, 3, 5):
            x.grad = None
            acc = (x * 1.0).sum()
            for _ in range(k - 1):
                acc = acc + (x * 1.0).sum()
            acc.backward()
            np.testing.assert_allclose(x.grad, k * single)

    def test_no_grad_blocks_graph(self):
        x = Tensor(np.array([1.0]), requires_grad=True)
        with no_grad():
            y = x * 3.0
        assert not y.requires_grad
        assert y._parents == ()

    def test_detach(self):
        x = Tensor(np.array([1.0]), requires_grad=True)
        y = (x * 2.0).detach()
        z = (y * 5.0)
        assert not z.requires_grad

    def test_broadcast_gradients(self):
        rng = np.random.default_rng(37)
        a = rng.standard_normal((2, 3, 4))
        b = rng.standard_normal((1, 3, 1))
        assert_grads_match(lambda at, bt: (at * bt).mean(), [a, b])
        assert_grads_match(lambda at, bt: (at + bt).mean(), [a, b])

    def test_concat_gradients(self):
        rng = np.random.default_rng(41)
        a = rng.standard_normal((2, 2, 3, 3))
        b = rng.standard_normal((2, 4, 3, 3))
        assert_grads_match(lambda at, bt: T.concat([at, bt], axis=1).mean(), [a, b])


class TestAdam:
    def test_zero_gradient_leaves_params(self):
        p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
        opt = Adam([p], lr=0.1)
        p.grad = np.zeros_like(p.data)
        opt.step()
        np.testing.assert_array_equal(p.data, [1.0, -2.0])
        assert opt.step_count == 1

    def test_first_step_is_signed_lr(self):
        for g in (3.0, -0.5, 12.0):
            p = Tensor(np.array([0.0]), requires_grad=True)
            opt = Adam([p], lr=0.01, eps=1e-8)
            p.grad = np.array([g])
            opt.step()
            assert abs(-p.data[0] - 0.01 * np.sign(g)) <= 0.01 * 1e-8 / abs(g) + 1e-12

    def test_quadratic_convergence(self):
        theta = Tensor(np.array([0.0]), requires_grad=True)
        opt = Adam([theta], lr=0.1, beta1=0.9)
        for _ in range(500):
            opt.zero_grad()
            diff = theta + (-5.0)
            loss = (diff * diff).sum()
            loss.backward()
            opt.step()
        assert abs(theta.data[0] - 5.0) <= 1e-2
