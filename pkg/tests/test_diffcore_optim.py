"""Optimizer updates, clipping, and learning-rate schedules."""

import math

import numpy as np
import pytest

from rfrlf.diffcore import (OptimState, ParamSet, clip_global_norm, init_optim,
                            lr_schedule, optimizer_step)
from rfrlf.diffcore.optim import (ADAFACTOR_CLIP, ADAFACTOR_DECAY_POWER,
                                  ADAFACTOR_EPS1, ADAM_BETA1, ADAM_BETA2,
                                  ADAM_EPS)
from rfrlf.errors import ConfigurationError


def _unfactored_adafactor_reference(param, grad, steps, lr):
    """Full second-moment variant, mirroring decay/eps/clipping choices."""
    p = param.copy()
    v = np.zeros_like(p)
    for t in range(1, steps + 1):
        beta2t = 1.0 - t ** (-ADAFACTOR_DECAY_POWER)
        v = beta2t * v + (1.0 - beta2t) * (grad * grad + ADAFACTOR_EPS1)
        update = grad / np.sqrt(v)
        rms = math.sqrt(float(np.mean(update * update)))
        if rms > ADAFACTOR_CLIP:
            update = update / (rms / ADAFACTOR_CLIP)
        p = p - lr * update
    return p


class TestAdafactor:
    def test_rank1_matches_unfactored_oracle(self):
        rng = np.random.default_rng(70)
        for steps in (1, 3, 7):
            u = rng.uniform(0.5, 2.0, size=6)
            v = rng.uniform(0.5, 2.0, size=4)
            grad = np.outer(u, v)          # squared gradient is exactly rank one
            p0 = rng.standard_normal((6, 4))
            ps = ParamSet()
            ps.add("w", p0.copy())
            state = init_optim(ps, "adafactor")
            for _ in range(steps):
                optimizer_step(ps, {"w": grad}, state, lr=0.01)
            expected = _unfactored_adafactor_reference(p0, grad, steps, lr=0.01)
            assert np.max(np.abs(ps.get("w") - expected)) < 1e-6

    def test_vector_param_uses_full_second_moment(self):
        grad = np.array([0.3, -0.7, 1.1])
        p0 = np.zeros(3)
        ps = ParamSet()
        ps.add("b", p0.copy())
        state = init_optim(ps, "adafactor")
        optimizer_step(ps, {"b": grad.copy()}, state, lr=0.1)
        expected = _unfactored_adafactor_reference(p0, grad, 1, lr=0.1)
        assert np.max(np.abs(ps.get("b") - expected)) < 1e-12

    def test_frozen_param_and_slots_untouched(self):
        ps = ParamSet()
        ps.add("w", np.ones((2, 2)), frozen=True)
        ps.add("b", np.ones(2))
        state = init_optim(ps, "adafactor")
        row_before = state.slots["w"]["row"].copy()
        optimizer_step(ps, {"w": np.ones((2, 2)), "b": np.ones(2)}, state, lr=0.1)
        assert np.array_equal(ps.get("w"), np.ones((2, 2)))
        assert np.array_equal(state.slots["w"]["row"], row_before)
        assert not np.array_equal(ps.get("b"), np.ones(2))

    def test_missing_state_raises(self):
        ps = ParamSet()
        ps.add("w", np.ones(2))
        state = OptimState(algorithm="adafactor", slots={})
        with pytest.raises(ConfigurationError):
            optimizer_step(ps, {"w": np.ones(2)}, state, lr=0.1)

    def test_grad_shape_mismatch_raises(self):
        ps = ParamSet()
        ps.add("w", np.ones(2))
        state = init_optim(ps, "adafactor")
        with pytest.raises(ConfigurationError):
            optimizer_step(ps, {"w": np.ones(3)}, state, lr=0.1)


class TestAdam:
    def test_single_step_closed_form(self):
        # with bias correction, the first step moves by ~lr * sign(g)
        ps = ParamSet()
        ps.add("w", np.zeros(3))
        state = init_optim(ps, "adam")
        g = np.array([0.5, -2.0, 1e-12])
        optimizer_step(ps, {"w": g.copy()}, state, lr=0.001)
        m_hat = g
        v_hat = g * g
        expected = -0.001 * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
        assert np.max(np.abs(ps.get("w") - expected)) < 1e-15

    def test_multi_step_reference(self):
        rng = np.random.default_rng(71)
        p0 = rng.standard_normal(5)
        grads = [rng.standard_normal(5) for _ in range(4)]
        ps = ParamSet()
        ps.add("w", p0.copy())
        state = init_optim(ps, "adam")
        for g in grads:
            optimizer_step(ps, {"w": g}, state, lr=0.01)
        # reference loop
        p = p0.copy()
        m = np.zeros(5)
        v = np.zeros(5)
        for t, g in enumerate(grads, start=1):
            m = ADAM_BETA1 * m + (1 - ADAM_BETA1) * g
            v = ADAM_BETA2 * v + (1 - ADAM_BETA2) * g * g
            p = p - 0.01 * (m / (1 - ADAM_BETA1 ** t)) / (np.sqrt(v / (1 - ADAM_BETA2 ** t)) + ADAM_EPS)
        assert np.max(np.abs(ps.get("w") - p)) < 1e-12


class TestClipGlobalNorm:
    def test_below_threshold_unchanged_bitwise(self):
        grads = {"a": np.array([0.3, 0.4]), "b": np.array([0.0])}
        clipped, norm = clip_global_norm(grads, 1.0)
        assert clipped is grads
        assert abs(norm - 0.5) < 1e-15

    def test_above_threshold_scaled_to_max(self):
        grads = {"a": np.array([3.0, 4.0])}
        clipped, norm = clip_global_norm(grads, 1.0)
        assert abs(norm - 5.0) < 1e-12
        new_norm = np.linalg.norm(clipped["a"])
        assert abs(new_norm - 1.0) < 1e-12

    def test_invalid_max_norm(self):
        with pytest.raises(ConfigurationError):
            clip_global_norm({"a": np.ones(2)}, 0.0)


class TestLrSchedule:
    def test_constant(self):
        assert lr_schedule("constant", 0.5, 123) == 0.5

    def test_cosine_closed_form(self):
        base, total = 0.001, 4000
        for t in (0, 1, 1000, 3999, 4000):
            expected = base * 0.5 * (1.0 + math.cos(math.pi * t / total))
            assert lr_schedule("cosine", base, t, total_steps=total) == expected

    def test_cosine_endpoints(self):
        assert lr_schedule("cosine", 0.1, 0, total_steps=100) == 0.1
        assert lr_schedule("cosine", 0.1, 100, total_steps=100) < 1e-17

    def test_step_decay_closed_form(self):
        base = 0.02
        for t in (0, 4999, 5000, 10000, 12345):
            expected = base * 0.5 ** (t // 5000)
            assert lr_schedule("step", base, t, decay_every=5000, decay_factor=0.5) == expected

    def test_validation(self):
        with pytest.raises(ConfigurationError):
            lr_schedule("cosine", 0.1, 0)
        with pytest.raises(ConfigurationError):
            lr_schedule("step", 0.1, 0, decay_every=0, decay_factor=0.5)
        with pytest.raises(ConfigurationError):
            lr_schedule("nope", 0.1, 0)
        with pytest.raises(ConfigurationError):
            lr_schedule("constant", -0.1, 0)
