from __future__ import annotations

import numpy as np
import pytest
from pydantic import ValidationError

from training.optimizer import AdamState, TrainConfig, adamw_step, clip_gradients, global_norm
from utils.config import GRAD_CLIP, LEARNING_RATE, WEIGHT_DECAY
from utils.errors import ShapeError


def test_defaults():
    cfg = TrainConfig()
    assert (cfg.learning_rate, cfg.weight_decay, cfg.grad_clip) == (LEARNING_RATE, WEIGHT_DECAY, GRAD_CLIP)
    assert (cfg.beta1, cfg.beta2) == (0.9, 0.999)


def test_first_step_moves_by_the_learning_rate():
    cfg = TrainConfig(learning_rate=1e-3, weight_decay=0.0)
    params = {"w": np.array([1.0])}
    new, state = adamw_step(params, {"w": np.array([1.0])}, AdamState.zeros_like(params), cfg)
    assert new["w"][0] == pytest.approx(0.999)
    assert state.step == 1
    np.testing.assert_allclose(state.m["w"], [0.1])
    np.testing.assert_allclose(state.v["w"], [0.001])


def test_decay_is_decoupled_from_the_gradient():
    cfg = TrainConfig(learning_rate=0.1, weight_decay=0.5)
    params = {"w": np.array([2.0, -4.0])}
    new, _ = adamw_step(params, {"w": np.zeros(2)}, AdamState.zeros_like(params), cfg)
    np.testing.assert_allclose(new["w"], params["w"] * (1.0 - 0.1 * 0.5))


def test_step_does_not_mutate_its_inputs():
    cfg = TrainConfig()
    params = {"a": np.ones(3), "b": np.ones((2, 2))}
    grads = {"a": np.full(3, 0.5), "b": np.full((2, 2), -0.5)}
    state = AdamState.zeros_like(params)
    adamw_step(params, grads, state, cfg)
    np.testing.assert_array_equal(params["a"], np.ones(3))
    assert state.step == 0 and not state.m["a"].any()


def test_step_checks_gradient_shapes():
    params = {"w": np.ones(3)}
    with pytest.raises(ShapeError):
        adamw_step(params, {"w": np.ones(2)}, AdamState.zeros_like(params), TrainConfig())


def test_clip_scales_to_the_threshold():
    clipped, norm = clip_gradients({"a": np.array([0.3]), "b": np.array([0.4])}, 0.1)
    assert norm == pytest.approx(0.5)
    np.testing.assert_allclose(clipped["a"], [0.06])
    np.testing.assert_allclose(clipped["b"], [0.08])
    assert global_norm(clipped) == pytest.approx(0.1)


def test_clip_leaves_small_gradients_alone():
    grads = {"a": np.array([0.03, 0.04])}
    clipped, norm = clip_gradients(grads, 0.1)
    assert norm == pytest.approx(0.05)
    np.testing.assert_array_equal(clipped["a"], grads["a"])


@pytest.mark.parametrize("threshold", [0.0, -1.0])
def test_clip_needs_a_positive_threshold(threshold):
    with pytest.raises(ValueError):
        clip_gradients({"a": np.ones(1)}, threshold)


def test_global_norm_is_order_independent():
    rng = np.random.default_rng(0)
    grads = {f"k{i}": rng.normal(size=(3, 4)) for i in range(6)}
    reordered = dict(reversed(list(grads.items())))
    assert global_norm(grads) == global_norm(reordered)


@pytest.mark.parametrize("overrides", [{"beta1": 1.0}, {"learning_rate": 0.0}, {"grad_clip": 0.0}, {"momentum": 0.9}])
def test_config_rejects_bad_values(overrides):
    with pytest.raises(ValidationError):
        TrainConfig(**overrides)
