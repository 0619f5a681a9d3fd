"""Tests for Adam and gradient clipping."""

import math

import numpy as np
import pytest

from planesweep_glr.exceptions import ShapeMismatchError
from planesweep_glr.nn.optim import AdamState, adam_step, clip_global_norm, global_norm


class TestAdam:
    """Tests for adam_step."""

    def test_first_step_moves_by_lr(self):
        """Test that the bias-corrected first step has magnitude ~lr."""
        params = {"w": np.array([1.0, -2.0], dtype=np.float32)}
        grads = {"w": np.array([0.5, -3.0], dtype=np.float32)}
        new, state = adam_step(params, grads, AdamState.fresh(params), lr=0.1)
        np.testing.assert_allclose(new["w"], [0.9, -1.9], rtol=1e-5)
        assert state.step == 1
        assert new["w"].dtype == np.float32

    def test_inputs_untouched(self):
        """Test that the update is pure."""
        params = {"w": np.ones(3)}
        state = AdamState.fresh(params)
        adam_step(params, {"w": np.ones(3)}, state, lr=0.1)
        np.testing.assert_array_equal(params["w"], 1.0)
        np.testing.assert_array_equal(state.m["w"], 0.0)
        assert state.step == 0

    def test_zero_gradient_when_missing(self):
        """Test that a parameter without gradient stays put on the first step."""
        params = {"w": np.ones(2)}
        new, _ = adam_step(params, {}, AdamState.fresh(params), lr=0.1)
        np.testing.assert_array_equal(new["w"], params["w"])

    def test_shape_mismatch(self):
        """Test that a misshaped gradient is rejected."""
        params = {"w": np.ones(2)}
        with pytest.raises(ShapeMismatchError):
            adam_step(params, {"w": np.ones(3)}, AdamState.fresh(params), lr=0.1)

    def test_minimizes_quadratic(self):
        """Test convergence on f(w) = |w - 3|^2."""
        params = {"w": np.zeros(4)}
        state = AdamState.fresh(params)
        for _ in range(500):
            params, state = adam_step(params, {"w": 2.0 * (params["w"] - 3.0)}, state, lr=0.05)
        np.testing.assert_allclose(params["w"], 3.0, atol=5e-2)


class TestClipping:
    """Tests for global-norm clipping."""

    def test_global_norm(self):
        """Test the norm over all tensors together."""
        assert global_norm({"a": np.array([3.0]), "b": np.array([[4.0]])}) == pytest.approx(5.0)

    def test_clip_scales_down(self):
        """Test that a large gradient is rescaled to the threshold."""
        clipped, norm = clip_global_norm({"a": np.array([3.0]), "b": np.array([4.0])}, 1.0)
        assert norm == pytest.approx(5.0)
        assert global_norm(clipped) == pytest.approx(1.0)
        np.testing.assert_allclose(clipped["a"], [0.6])

    def test_clip_leaves_small(self):
        """Test that a small gradient passes unchanged."""
        grads = {"a": np.array([0.1, 0.2])}
        clipped, _ = clip_global_norm(grads, 1.0)
        np.testing.assert_array_equal(clipped["a"], grads["a"])

    def test_infinite_norm_reported(self):
        """Test that a non-finite gradient yields a non-finite norm."""
        _, norm = clip_global_norm({"a": np.array([np.inf])}, 1.0)
        assert not math.isfinite(norm)

    def test_threshold_must_be_positive(self):
        """Test that a zero threshold is rejected."""
        with pytest.raises(ValueError):
            clip_global_norm({"a": np.ones(1)}, 0.0)
