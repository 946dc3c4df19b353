import numpy as np
import pytest

from latticenet import tensor as T
from latticenet.errors import (
    ConfigurationError,
    DimensionError,
    InputError,
    UsageError,
)


def rand(shape, seed=0):
    return np.random.default_rng(seed).standard_normal(shape)


class TestConv2d:
    def test_sum_of_ones(self):
        x = T.Tensor(np.ones((1, 1, 3, 3)))
        k = T.Tensor(np.ones((1, 1, 3, 3)))
        b = T.Tensor(np.zeros(1))
        out = T.conv2d(x, k, b)
        assert out.shape == (1, 1, 1, 1)
        assert out.data.ravel()[0] == 9.0

    def test_identity_kernel(self):
        x = T.Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 1, 2, 2))
        k = T.Tensor(np.ones((1, 1, 1, 1)))
        b = T.Tensor(np.zeros(1))
        out = T.conv2d(x, k, b)
        np.testing.assert_array_equal(out.data, x.data)

    def test_gradient_vs_finite_differences(self):
        kv, bv = rand((3, 2, 3, 3), 1), rand(3, 2)
        err = T.grad_check(
            lambda t: T.conv2d(t, T.Tensor(kv), T.Tensor(bv), 1, 0).sum(),
            T.Tensor(rand((1, 2, 5, 5), 3)),
        )
        assert err < 1e-5
        xv = rand((1, 2, 5, 5), 4)
        err = T.grad_check(
            lambda t: T.conv2d(T.Tensor(xv), t, T.Tensor(bv), 1, 1).sum(),
            T.Tensor(kv),
        )
        assert err < 1e-5
        err = T.grad_check(
            lambda t: T.conv2d(T.Tensor(xv), T.Tensor(kv), t, 1, 1).sum(), T.Tensor(bv)
        )
        assert err < 1e-5

    def test_channel_mismatch(self):
        with pytest.raises(DimensionError):
            T.conv2d(
                T.Tensor(np.ones((1, 3, 4, 4))),
                T.Tensor(np.ones((1, 2, 3, 3))),
                T.Tensor(np.zeros(1)),
            )

    def test_non_integer_output_extent(self):
        with pytest.raises(ConfigurationError):
            T.conv2d(
                T.Tensor(np.ones((1, 1, 5, 5))),
                T.Tensor(np.ones((1, 1, 2, 2))),
                T.Tensor(np.zeros(1)),
                stride=2,
            )

    @pytest.mark.parametrize("pad", [0, 1, 2])
    @pytest.mark.parametrize("stride", [1, 2])
    @pytest.mark.parametrize("kernel", [1, 3])
    def test_output_shape_formula(self, pad, stride, kernel):
        h = w = 9
        span = h + 2 * pad - kernel
        if span % stride != 0:
            pytest.skip("invalid combination by construction")
        x = T.Tensor(np.ones((1, 1, h, w)))
        k = T.Tensor(np.ones((2, 1, kernel, kernel)))
        out = T.conv2d(x, k, T.Tensor(np.zeros(2)), stride, pad)
        expected = span // stride + 1
        assert out.shape == (1, 2, expected, expected)


class TestRelu:
    def test_definition(self):
        out = T.relu(T.Tensor([-1.0, 0.0, 2.0]))
        np.testing.assert_array_equal(out.data, [0.0, 0.0, 2.0])

    def test_dead_region_zero_gradient(self):
        x = T.Tensor(-np.ones((2, 3)), requires_grad=True)
        out = T.relu(x)
        np.testing.assert_array_equal(out.data, np.zeros((2, 3)))
        T.backward(out.sum())
        np.testing.assert_array_equal(x.grad, np.zeros((2, 3)))

    def test_gradient_mask(self):
        xv = rand(20, 5)
        xv = np.where(np.abs(xv) < 1e-2, xv + 0.5, xv)
        assert T.grad_check(lambda t: T.relu(t).sum(), T.Tensor(xv)) < 1e-4
        x = T.Tensor(xv, requires_grad=True)
        T.backward(T.relu(x).sum())
        np.testing.assert_array_equal(x.grad, (xv > 0).astype(float))


class TestPooling:
    def test_maxpool_value(self):
        x = T.Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 1, 2, 2))
        assert T.maxpool2d(x, 2, 2).data.ravel()[0] == 4.0

    def test_maxpool_tie_routes_first_index(self):
        x = T.Tensor(np.full((1, 1, 2, 2), 7.0), requires_grad=True)
        out = T.maxpool2d(x, 2, 2)
        assert out.data.ravel()[0] == 7.0
        T.backward(out.sum())
        np.testing.assert_array_equal(
            x.grad.reshape(2, 2), [[1.0, 0.0], [0.0, 0.0]]
        )

    def test_maxpool_gradient(self):
        assert (
            T.grad_check(lambda t: T.maxpool2d(t, 2, 2).sum(), T.Tensor(rand((1, 1, 4, 4), 6)))
            < 1e-5
        )

    def test_window_too_large(self):
        with pytest.raises(ConfigurationError):
            T.maxpool2d(T.Tensor(np.ones((1, 1, 2, 2))), 3, 1)

    def test_avgpool_value(self):
        x = T.Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 1, 2, 2))
        assert T.avgpool2d(x, 2, 2).data.ravel()[0] == 2.5

    def test_avgpool_constant(self):
        x = T.Tensor(np.full((1, 2, 4, 4), 3.25))
        np.testing.assert_array_equal(T.avgpool2d(x, 2, 2).data, np.full((1, 2, 2, 2), 3.25))

    def test_avgpool_gradient_uniform(self):
        x = T.Tensor(rand((1, 1, 4, 4), 7), requires_grad=True)
        T.backward(T.avgpool2d(x, 2, 2).sum())
        np.testing.assert_allclose(x.grad, np.full((1, 1, 4, 4), 0.25))
        assert (
            T.grad_check(lambda t: T.avgpool2d(t, 2, 2).sum(), T.Tensor(rand((1, 1, 4, 4), 8)))
            < 1e-5
        )


class TestDense:
    def test_identity_weight(self):
        x = T.Tensor(rand((3, 4), 1))
        out = T.dense(x, T.Tensor(np.eye(4)), T.Tensor(np.zeros(4)))
        np.testing.assert_array_equal(out.data, x.data)

    def test_zero_weight_gives_bias(self):
        bias = np.array([1.0, -2.0, 0.5])
        out = T.dense(
            T.Tensor(rand((4, 2), 2)), T.Tensor(np.zeros((2, 3))), T.Tensor(bias)
        )
        np.testing.assert_array_equal(out.data, np.tile(bias, (4, 1)))

    def test_gradients(self):
        wv, bv = rand((3, 4), 3), rand(4, 4)
        xv = rand((2, 3), 5)
        assert (
            T.grad_check(lambda t: T.dense(t, T.Tensor(wv), T.Tensor(bv)).sum(), T.Tensor(xv))
            < 1e-6
        )
        assert (
            T.grad_check(lambda t: T.dense(T.Tensor(xv), t, T.Tensor(bv)).sum(), T.Tensor(wv))
            < 1e-6
        )

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            T.dense(T.Tensor(np.ones((2, 3))), T.Tensor(np.ones((4, 5))), T.Tensor(np.zeros(5)))


class TestSoftmaxCrossEntropy:
    def test_uniform_logits(self):
        for k in (2, 5, 10):
            loss = T.softmax_cross_entropy(T.Tensor(np.zeros((3, k))), [0] * 3)
            assert loss.item() == pytest.approx(np.log(k), abs=1e-12)

    def test_margin_limit(self):
        losses = []
        for margin in (1.0, 5.0, 20.0):
            logits = np.zeros((1, 4))
            logits[0, 2] = margin
            losses.append(T.softmax_cross_entropy(T.Tensor(logits), [2]).item())
        assert losses[0] > losses[1] > losses[2]
        assert losses[2] < 1e-8

    def test_gradient(self):
        y = np.array([0, 3, 2])
        assert (
            T.grad_check(lambda t: T.softmax_cross_entropy(t, y), T.Tensor(rand((3, 5), 9)))
            < 1e-6
        )

    def test_shift_invariance(self):
        logits = rand((4, 6), 10) * 10
        y = np.array([0, 1, 2, 3])
        a = T.softmax_cross_entropy(T.Tensor(logits), y).item()
        b = T.softmax_cross_entropy(T.Tensor(logits + 123.456), y).item()
        assert abs(a - b) < 1e-10

    def test_out_of_range_label(self):
        with pytest.raises(InputError):
            T.softmax_cross_entropy(T.Tensor(np.zeros((2, 3))), [0, 3])


class TestBackward:
    def test_sum_gives_ones(self):
        x = T.Tensor(rand((3, 4), 11), requires_grad=True)
        T.backward(x.sum())
        np.testing.assert_array_equal(x.grad, np.ones((3, 4)))

    def test_quadratic(self):
        x = T.Tensor([1.0, 2.0], requires_grad=True)
        T.backward(T.mul(x, x).sum())
        np.testing.assert_array_equal(x.grad, [2.0, 4.0])

    def test_accumulation_across_calls(self):
        x = T.Tensor([1.0, 2.0], requires_grad=True)
        T.backward(x.sum())
        T.backward(x.sum())
        np.testing.assert_array_equal(x.grad, [2.0, 2.0])

    def test_two_consumer_fanout(self):
        # loss = sum(x*x) + sum(3*x): grad = 2x + 3, both paths accumulate
        x = T.Tensor([1.0, -2.0], requires_grad=True)
        loss = T.add(T.mul(x, x).sum(), T.scale(x, 3.0).sum())
        T.backward(loss)
        np.testing.assert_allclose(x.grad, [5.0, -1.0])

    def test_composite_graph_finite_differences(self):
        kv, bv = rand((2, 1, 3, 3), 12) * 0.5, rand(2, 13) * 0.1
        wv, bv2 = rand((8, 3), 14) * 0.5, rand(3, 15) * 0.1
        y = np.array([1])

        def f(x):
            h = T.relu(T.conv2d(x, T.Tensor(kv), T.Tensor(bv), 1, 0))
            h = T.flatten_batch(h)
            return T.softmax_cross_entropy(T.dense(h, T.Tensor(wv), T.Tensor(bv2)), y)

        assert T.grad_check(f, T.Tensor(rand((1, 1, 4, 4), 16))) < 1e-4

    def test_non_scalar_loss_rejected(self):
        with pytest.raises(UsageError):
            T.backward(T.Tensor(np.ones(3), requires_grad=True))

    def test_determinism(self):
        xv, kv = rand((2, 3, 8, 8), 17), rand((4, 3, 3, 3), 18)
        outs = []
        for _ in range(2):
            x = T.Tensor(xv, requires_grad=True)
            out = T.conv2d(x, T.Tensor(kv), T.Tensor(np.zeros(4)), 1, 1)
            T.backward(T.relu(out).sum())
            outs.append((out.data.copy(), x.grad.copy()))
        np.testing.assert_array_equal(outs[0][0], outs[1][0])
        np.testing.assert_array_equal(outs[0][1], outs[1][1])


class TestGradCheck:
    def test_sum_is_exact(self):
        assert T.grad_check(lambda t: t.sum(), T.Tensor(rand(5, 19))) < 1e-10

    def test_relu_kink_excluded(self):
        point = T.Tensor([1.0, 0.0, -1.0])
        err, checked, excluded = T.grad_check(
            lambda t: T.relu(t).sum(), point, return_details=True
        )
        assert excluded == 1
        assert checked == 2
        assert err < 1e-6
