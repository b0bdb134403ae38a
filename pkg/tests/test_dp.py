import math

import numpy as np
import pytest

from splitleak.dp import (ClipState, DpConfig, LabelDpConfig, clip_and_noise,
                          flip_label, flip_labels, flip_probability_for_epsilon,
                          label_dp_epsilon)


def fixed_state(c=1.0, sigma=0.0):
    return ClipState(DpConfig(noise_multiplier=sigma, clip_mode="fixed", clip_norm=c))


def test_inside_clip_ball_unchanged():
    state = fixed_state(c=10.0)
    g = np.array([1.0, 2.0, 2.0])  # norm 3 < 10
    out = clip_and_noise(g, state, 0.0, np.random.default_rng(0))
    np.testing.assert_array_equal(out, g)


def test_clip_scales_to_exact_norm():
    state = fixed_state(c=1.5)
    g = np.array([3.0, 0.0, 0.0])  # norm 2C
    out = clip_and_noise(g, state, 0.0, np.random.default_rng(0))
    assert abs(np.linalg.norm(out) - 1.5) < 1e-12


def test_post_clip_norm_bound():
    rng = np.random.default_rng(1)
    state = fixed_state(c=0.7)
    for _ in range(200):
        g = rng.normal(size=8) * rng.uniform(0, 5)
        out = clip_and_noise(g, state, 0.0, rng)
        assert np.linalg.norm(out) <= 0.7 + 1e-12


def test_noise_std_monte_carlo():
    rng = np.random.default_rng(2)
    state = fixed_state(c=1.0, sigma=0.01)
    draws = np.stack([clip_and_noise(np.zeros(10), state, 0.01, rng)
                      for _ in range(10000)])
    assert abs(draws.std() - 0.01) / 0.01 < 0.05


def test_zero_flip_probability_is_identity():
    rng = np.random.default_rng(3)
    y = rng.integers(0, 2, size=1000)
    np.testing.assert_array_equal(flip_labels(y, 0.0, rng), y)


def test_flip_rate_at_p01():
    rng = np.random.default_rng(4)
    y = np.zeros(100000, dtype=int)
    flipped = flip_labels(y, 0.1, rng)
    assert abs(flipped.mean() - 0.1) < 0.005


def test_flip_rate_near_half():
    rng = np.random.default_rng(5)
    y = np.zeros(100000, dtype=int)
    flipped = flip_labels(y, 0.5 - 1e-9, rng)
    assert abs(flipped.mean() - 0.5) < 0.01


def test_double_flip_rate():
    # two independent flips at rate p net out to 2p(1-p)
    rng = np.random.default_rng(6)
    p = 0.2
    y = np.zeros(200000, dtype=int)
    twice = flip_labels(flip_labels(y, p, rng), p, rng)
    assert abs(twice.mean() - 2 * p * (1 - p)) < 0.005


def test_flip_label_scalar():
    rng = np.random.default_rng(7)
    assert flip_label(1, 0.0, rng) == 1
    flips = [flip_label(0, 0.4999, rng) for _ in range(2000)]
    assert 0.4 < np.mean(flips) < 0.6


def test_epsilon_paper_values():
    assert abs(label_dp_epsilon(0.1) - 2.197) < 0.001
    assert abs(label_dp_epsilon(0.01) - 4.595) < 0.001


def test_epsilon_limit_at_half():
    assert label_dp_epsilon(0.4999999) < 1e-5


def test_epsilon_domain():
    for bad in (0.0, 0.5, 0.7, -0.1):
        with pytest.raises(ValueError):
            label_dp_epsilon(bad)


def test_epsilon_inverse_roundtrip():
    for p in np.linspace(0.01, 0.49, 25):
        eps = label_dp_epsilon(p)
        assert abs(flip_probability_for_epsilon(eps) - p) < 1e-12
        assert abs(1.0 / (math.exp(eps) + 1.0) - p) < 1e-12


def test_adaptive_state_warmup_and_ema():
    cfg = DpConfig(clip_mode="adaptive_median", warmup=8, ema_rate=0.5)
    state = ClipState(cfg)
    rng = np.random.default_rng(8)
    for _ in range(8):
        clip_and_noise(rng.normal(size=4), state, 0.0, rng)
    assert state.median_estimate is not None
    before = state.median_estimate
    clip_and_noise(np.zeros(4), state, 0.0, rng)  # norm 0 pulls the EMA down
    assert state.median_estimate == pytest.approx(0.5 * before)


def test_adaptive_clip_is_half_median():
    cfg = DpConfig(clip_mode="adaptive_median", warmup=100, ema_rate=0.01)
    state = ClipState(cfg)
    for norm in np.linspace(1.0, 3.0, 99):
        state.observe(norm)
    assert state.clip_norm() == pytest.approx(0.5 * 2.0)


def test_config_validation():
    with pytest.raises(ValueError):
        DpConfig(noise_multiplier=-1.0)
    with pytest.raises(ValueError):
        DpConfig(clip_mode="fixed")  # needs clip_norm
    with pytest.raises(ValueError):
        DpConfig(clip_mode="bogus")
    with pytest.raises(ValueError):
        LabelDpConfig(flip_probability=0.5)


def test_sigma_zero_fixed_inf_is_noop():
    state = fixed_state(c=np.inf)
    rng = np.random.default_rng(9)
    g = rng.normal(size=16) * 100
    np.testing.assert_array_equal(clip_and_noise(g, state, 0.0, rng), g)
