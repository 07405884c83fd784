import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from twopathway.core.gradcheck import check_layer
from twopathway.core.layers import BatchNorm2d, Conv2d, Dense, Flatten, MaxPool2x2, ReLU
from twopathway.core.tensor import ParamTensor, precision
from twopathway.errors import ShapeError
from twopathway.nets.stage import Stage


def naive_conv(x, weight, bias, padding):
    n, c, h, w = x.shape
    f, _, k, _ = weight.shape
    padded = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    out_h, out_w = h + 2 * padding - k + 1, w + 2 * padding - k + 1
    out = np.zeros((n, f, out_h, out_w))
    for b in range(n):
        for o in range(f):
            for i in range(out_h):
                for j in range(out_w):
                    out[b, o, i, j] = (padded[b, :, i:i + k, j:j + k] * weight[o]).sum() + bias[o]
    return out


class TestConv2d:
    @pytest.mark.parametrize("kernel", [1, 3, 5])
    def test_matches_direct_summation(self, kernel):
        with precision("float64"):
            rng = np.random.default_rng(kernel)
            conv = Conv2d(2, 3, kernel, rng=rng)
            conv.bias.assign(rng.standard_normal(3))
            x = rng.standard_normal((2, 2, 6, 6))
            expected = naive_conv(x, conv.weight.value, conv.bias.value, (kernel - 1) // 2)
            assert_allclose(conv.forward(x), expected, rtol=1e-10, atol=1e-12)

    def test_same_padding_keeps_spatial_size(self):
        conv = Conv2d(3, 4, 5)
        assert conv.forward(np.zeros((1, 3, 8, 8), dtype=np.float32)).shape == (1, 4, 8, 8)

    def test_delta_kernel_is_identity(self):
        with precision("float64"):
            conv = Conv2d(1, 1, 3)
            kernel = np.zeros((1, 1, 3, 3))
            kernel[0, 0, 1, 1] = 1.0
            conv.weight.assign(kernel)
            x = np.random.default_rng(0).standard_normal((2, 1, 5, 5))
            assert_allclose(conv.forward(x), x)

    def test_even_kernel_rejected(self):
        with pytest.raises(ShapeError):
            Conv2d(1, 1, 4)

    def test_channel_mismatch_rejected(self):
        with pytest.raises(ShapeError):
            Conv2d(3, 2, 3).forward(np.zeros((1, 1, 4, 4), dtype=np.float32))

    def test_gradients_accumulate(self):
        with precision("float64"):
            rng = np.random.default_rng(1)
            conv = Conv2d(1, 2, 3, rng=rng)
            x = rng.standard_normal((2, 1, 4, 4))
            upstream = rng.standard_normal((2, 2, 4, 4))
            conv.forward(x)
            conv.backward(upstream)
            once = conv.weight.grad.copy()
            conv.forward(x)
            conv.backward(upstream)
            assert_allclose(conv.weight.grad, 2 * once)


class TestBatchNorm2d:
    def test_train_mode_normalizes_each_channel(self):
        with precision("float64"):
            bn = BatchNorm2d(3)
            x = np.random.default_rng(2).normal(5.0, 3.0, size=(8, 3, 4, 4))
            out = bn.forward(x)
            assert_allclose(out.mean(axis=(0, 2, 3)), 0.0, atol=1e-10)
            assert_allclose(out.var(axis=(0, 2, 3)), 1.0, rtol=1e-4)

    def test_running_statistics_use_unbiased_variance(self):
        with precision("float64"):
            bn = BatchNorm2d(1, momentum=0.1)
            x = np.random.default_rng(3).standard_normal((4, 1, 2, 2))
            bn.forward(x)
            assert_allclose(bn.running_mean, 0.1 * x.mean())
            assert_allclose(bn.running_var, 0.9 + 0.1 * x.var(ddof=1))

    def test_eval_mode_uses_running_statistics(self):
        with precision("float64"):
            bn = BatchNorm2d(2)
            bn.running_mean[...] = [1.0, -1.0]
            bn.running_var[...] = [4.0, 0.25]
            bn.eval()
            x = np.ones((1, 2, 2, 2))
            out = bn.forward(x)
            assert_allclose(out[0, 0], 0.0, atol=1e-12)
            assert_allclose(out[0, 1], 2.0 / np.sqrt(0.25 + 1e-5))

    def test_single_image_batch_rejected_in_train_mode(self):
        with pytest.raises(ShapeError):
            BatchNorm2d(2).forward(np.zeros((1, 2, 2, 2), dtype=np.float32))


class TestMaxPool2x2:
    def test_halves_spatial_size(self):
        x = np.arange(16, dtype=np.float32).reshape(1, 1, 4, 4)
        out = MaxPool2x2().forward(x)
        assert_array_equal(out[0, 0], [[5, 7], [13, 15]])

    def test_ties_route_gradient_to_first_position(self):
        pool = MaxPool2x2()
        pool.forward(np.ones((1, 1, 2, 2), dtype=np.float32))
        grad = pool.backward(np.array([[[[3.0]]]], dtype=np.float32))
        assert_array_equal(grad[0, 0], [[3.0, 0.0], [0.0, 0.0]])

    def test_odd_size_rejected(self):
        with pytest.raises(ShapeError):
            MaxPool2x2().forward(np.zeros((1, 1, 3, 4), dtype=np.float32))


class TestDenseReluFlatten:
    def test_dense_shapes_and_bias(self):
        dense = Dense(4, 3)
        dense.bias.assign(np.array([1.0, 2.0, 3.0]))
        out = dense.forward(np.zeros((5, 4), dtype=np.float32))
        assert out.shape == (5, 3)
        assert_allclose(out[0], [1.0, 2.0, 3.0])

    def test_relu_subgradient_at_zero_is_zero(self):
        relu = ReLU()
        relu.forward(np.array([[-1.0, 0.0, 2.0]]))
        assert_array_equal(relu.backward(np.ones((1, 3))), [[0.0, 0.0, 1.0]])

    def test_flatten_round_trip_shape(self):
        flatten = Flatten()
        out = flatten.forward(np.zeros((2, 3, 4, 4)))
        assert out.shape == (2, 48)
        assert flatten.backward(out).shape == (2, 3, 4, 4)


class TestStage:
    def test_output_is_half_size(self):
        stage = Stage(3, 4, 3)
        assert stage.forward(np.zeros((2, 3, 8, 8), dtype=np.float32)).shape == (2, 4, 4, 4)

    def test_params_are_conv_then_batchnorm(self):
        names = [p.name for p in Stage(1, 2, 3, name="stage0").params()]
        assert names == ["stage0.conv.weight", "stage0.conv.bias", "stage0.bn.gamma", "stage0.bn.beta"]


class TestGradientCheck:
    @pytest.mark.parametrize("make_layer, shape", [
        (lambda rng: Conv2d(2, 3, 3, rng=rng), (2, 2, 5, 5)),
        (lambda rng: BatchNorm2d(2), (3, 2, 3, 3)),
        (lambda rng: MaxPool2x2(), (2, 2, 4, 4)),
        (lambda rng: Dense(5, 3, rng=rng), (4, 5)),
        (lambda rng: Stage(2, 3, 3, rng=rng), (3, 2, 4, 4)),
    ])
    def test_analytic_gradients_match_central_differences(self, make_layer, shape):
        with precision("float64"):
            rng = np.random.default_rng(4)
            result = check_layer(make_layer(rng), rng.standard_normal(shape), seed=4)
        assert result.checked > 0
        assert result.max_relative_error < 1e-4

    def test_param_tensor_assign_checks_shape(self):
        param = ParamTensor("w", np.zeros(3))
        with pytest.raises(ValueError):
            param.assign(np.zeros(4))
