"""Tests for differentiable operators."""

import time

import numpy as np
import pytest

from planesweep_glr import runtime
from planesweep_glr.exceptions import ShapeMismatchError
from planesweep_glr.models import UpsampleMode
from planesweep_glr.nn.ops import (
    avg_pool2x,
    conv2d,
    conv2d_backward,
    conv2d_forward,
    relu_backward,
    relu_forward,
    upsample2x,
    upsample2x_backward,
)


def _reference_conv(x, w, b, stride=1, groups=1):
    """Direct nested-loop cross-correlation with zero padding."""
    batch, cin, height, width = x.shape
    cout, cin_g, k, _ = w.shape
    pad = (k - 1) // 2
    padded = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    out = np.zeros((batch, cout, height // stride, width // stride))
    per_group = cout // groups
    for n in range(batch):
        for o in range(cout):
            g = o // per_group
            for i in range(height // stride):
                for j in range(width // stride):
                    window = padded[n, g * cin_g : (g + 1) * cin_g, i * stride : i * stride + k, j * stride : j * stride + k]
                    out[n, o, i, j] = np.sum(window * w[o]) + b[o]
    return out


class TestConv2d:
    """Tests for grouped convolution."""

    @pytest.mark.parametrize("k,stride,groups", [(3, 1, 1), (1, 1, 1), (3, 2, 1), (3, 1, 2), (1, 1, 3)])
    def test_matches_reference(self, k, stride, groups):
        """Test against a direct nested-loop implementation."""
        rng = np.random.default_rng(1)
        x = rng.standard_normal((2, 6, 4, 6))
        w = rng.standard_normal((6, 6 // groups, k, k))
        b = rng.standard_normal(6)
        np.testing.assert_allclose(
            conv2d(x, w, b, stride=stride, groups=groups),
            _reference_conv(x, w, b, stride, groups),
            atol=1e-10,
        )

    def test_backward_adjoint(self):
        """Test <dy, conv(x)> linearity: dx and dw are the exact adjoints."""
        rng = np.random.default_rng(2)
        x = rng.standard_normal((1, 4, 6, 6))
        w = rng.standard_normal((4, 2, 3, 3))
        b = np.zeros(4)
        y, cache = conv2d_forward(x, w, b, stride=2, groups=2)
        dy = rng.standard_normal(y.shape)
        dx, dw, db = conv2d_backward(dy, cache)
        assert np.sum(dy * y) == pytest.approx(np.sum(dx * x))
        assert np.sum(dy * y) == pytest.approx(np.sum(dw * w))
        np.testing.assert_allclose(db, dy.sum(axis=(0, 2, 3)))

    def test_deterministic_mode_agrees(self):
        """Test that the fixed-order contraction gives the same result."""
        rng = np.random.default_rng(3)
        x = rng.standard_normal((1, 3, 4, 4))
        w = rng.standard_normal((2, 3, 3, 3))
        b = rng.standard_normal(2)
        fast = conv2d(x, w, b)
        runtime.set_deterministic(True)
        np.testing.assert_allclose(conv2d(x, w, b), fast, atol=1e-12)

    def test_columns_are_one_matrix_per_group(self):
        """Test that the cached windows form a contiguous (groups, B*H*W, Cin/groups*k*k) matrix."""
        rng = np.random.default_rng(4)
        x = rng.standard_normal((2, 4, 6, 8))
        _, cache = conv2d_forward(x, rng.standard_normal((6, 2, 3, 3)), np.zeros(6), stride=2, groups=2)
        assert cache.columns.shape == (2, 2 * 3 * 4, 2 * 3 * 3)
        assert cache.columns.flags["C_CONTIGUOUS"]
        assert cache.output_size == (3, 4)

    def test_deterministic_backward_agrees(self):
        """Test that both gradient paths agree with the BLAS path."""
        rng = np.random.default_rng(5)
        x = rng.standard_normal((2, 4, 4, 4))
        w = rng.standard_normal((4, 2, 3, 3))
        y, cache = conv2d_forward(x, w, np.zeros(4), groups=2)
        dy = rng.standard_normal(y.shape)
        fast = conv2d_backward(dy, cache)
        runtime.set_deterministic(True)
        for got, want in zip(conv2d_backward(dy, cache), fast, strict=True):
            np.testing.assert_allclose(got, want, atol=1e-12)

    @pytest.mark.slow
    def test_large_conv_speed(self):
        """Test that a training-size float32 conv step stays fast."""
        rng = np.random.default_rng(6)
        x = rng.standard_normal((8, 66, 64, 64)).astype(np.float32)
        w = rng.standard_normal((16, 66, 3, 3)).astype(np.float32)
        started = time.perf_counter()
        y, cache = conv2d_forward(x, w, np.zeros(16, dtype=np.float32))
        conv2d_backward(np.ones_like(y), cache)
        assert time.perf_counter() - started < 5.0

    def test_rejects_bad_kernel(self):
        """Test that only 1x1 and 3x3 kernels are accepted."""
        with pytest.raises(ShapeMismatchError, match="kernel"):
            conv2d(np.zeros((1, 1, 4, 4)), np.zeros((1, 1, 5, 5)), np.zeros(1))

    def test_rejects_channel_mismatch(self):
        """Test that the weight must match the input channels."""
        with pytest.raises(ShapeMismatchError):
            conv2d(np.zeros((1, 3, 4, 4)), np.zeros((2, 2, 3, 3)), np.zeros(2))

    def test_rejects_indivisible_stride(self):
        """Test that odd sizes cannot be strided by 2."""
        with pytest.raises(ShapeMismatchError, match="stride"):
            conv2d(np.zeros((1, 1, 5, 4)), np.zeros((1, 1, 3, 3)), np.zeros(1), stride=2)


class TestElementwise:
    """Tests for ReLU, upsampling and pooling."""

    def test_relu(self):
        """Test ReLU and its zero subgradient at zero."""
        x = np.array([-1.0, 0.0, 2.0])
        y, mask = relu_forward(x)
        np.testing.assert_array_equal(y, [0.0, 0.0, 2.0])
        np.testing.assert_array_equal(relu_backward(np.ones(3), mask), [0.0, 0.0, 1.0])

    def test_nearest_upsample(self):
        """Test pixel replication."""
        x = np.array([[[[1.0, 2.0], [3.0, 4.0]]]])
        y = upsample2x(x, UpsampleMode.NEAREST)
        np.testing.assert_array_equal(y[0, 0, :2, :2], 1.0)
        np.testing.assert_array_equal(y[0, 0, 2:, 2:], 4.0)

    def test_bilinear_upsample_values(self):
        """Test half-pixel-centered interpolation with edge clamping."""
        x = np.array([0.0, 4.0]).reshape(1, 1, 1, 2)
        y = upsample2x(x, "bilinear")
        np.testing.assert_allclose(y[0, 0, 0], [0.0, 1.0, 3.0, 4.0])

    def test_bilinear_preserves_constants(self):
        """Test that a constant image stays constant."""
        y = upsample2x(np.full((1, 2, 3, 3), 0.7), UpsampleMode.BILINEAR)
        np.testing.assert_allclose(y, 0.7)

    @pytest.mark.parametrize("mode", ["nearest", "bilinear"])
    def test_upsample_adjoint(self, mode):
        """Test that the backward pass is the transpose of the forward map."""
        rng = np.random.default_rng(4)
        x = rng.standard_normal((2, 3, 4, 5))
        dy = rng.standard_normal((2, 3, 8, 10))
        assert np.sum(upsample2x(x, mode) * dy) == pytest.approx(np.sum(x * upsample2x_backward(dy, mode)))

    def test_avg_pool(self):
        """Test 2x2 averaging."""
        x = np.arange(16, dtype=np.float64).reshape(1, 1, 4, 4)
        np.testing.assert_allclose(avg_pool2x(x)[0, 0], [[2.5, 4.5], [10.5, 12.5]])
        with pytest.raises(ShapeMismatchError):
            avg_pool2x(np.zeros((1, 1, 3, 4)))
