"""Noise-schedule and guidance-mixing tests."""

import math

import numpy as np
import pytest

from brainrecon.errors import ConfigError
from brainrecon.schedule import (
    BETA_END,
    BETA_START,
    TRAINING_TIMESTEPS,
    DiffusionSchedule,
    GuidanceConfig,
    format_schedule_csv,
    mix_guidance,
    noise,
    steps_from_strength,
    write_schedule_csv,
)


@pytest.fixture(scope="module")
def sched():
    return DiffusionSchedule.nominal()


def test_steps_from_strength_reference_points():
    assert steps_from_strength(50, 0.75) == 37
    assert steps_from_strength(50, 0.0) == 0
    assert steps_from_strength(50, 1.0) == 50
    assert steps_from_strength(100, 0.755) == 75


def test_steps_from_strength_range_errors():
    with pytest.raises(ConfigError):
        steps_from_strength(50, -0.1)
    with pytest.raises(ConfigError):
        steps_from_strength(50, 1.5)
    with pytest.raises(ConfigError):
        steps_from_strength(0, 0.5)


def test_alpha_bar_shape_and_anchors(sched):
    assert sched.alpha_bar.shape == (51,)
    assert sched.alpha_bar[0] == 1.0
    assert np.all(np.diff(sched.alpha_bar) < 0)
    inner = sched.alpha_bar[1:]
    assert np.all((inner > 0.0) & (inner < 1.0))


def test_betas_against_independent_construction(sched):
    # Rebuild from scratch: sqrt-space linear ramp over the full training
    # grid, then pick every k-th cumulative product.
    grid = np.linspace(
        math.sqrt(BETA_START), math.sqrt(BETA_END), TRAINING_TIMESTEPS
    ) ** 2
    full_bar = np.cumprod(1.0 - grid)
    for k in range(1, 51):
        idx = math.ceil(k * TRAINING_TIMESTEPS / 50) - 1
        assert sched.alpha_bar[k] == pytest.approx(full_bar[idx], rel=1e-12)
        assert sched.betas[k - 1] == pytest.approx(grid[idx], rel=1e-12)
        assert sched.timesteps[k - 1] == idx


def test_noise_at_t_zero_is_identity(sched):
    rng = np.random.default_rng(0)
    z0 = rng.normal(size=(3, 8))
    eps = rng.normal(size=(3, 8))
    assert np.array_equal(noise(z0, 0, eps, sched), z0)


def test_noise_with_zero_eps_scales_by_sqrt_alpha_bar(sched):
    rng = np.random.default_rng(1)
    z0 = rng.normal(size=(2, 6))
    out = noise(z0, 10, np.zeros_like(z0), sched)
    assert np.allclose(out, math.sqrt(sched.alpha_bar[10]) * z0, rtol=1e-12)


def test_noise_linearity(sched):
    rng = np.random.default_rng(2)
    z0 = rng.normal(size=(4, 5))
    eps = rng.normal(size=(4, 5))
    a = noise(z0, 20, np.zeros_like(eps), sched)
    b = noise(np.zeros_like(z0), 20, eps, sched)
    assert np.allclose(noise(z0, 20, eps, sched), a + b, rtol=0, atol=1e-12)


def test_noise_shape_and_range_errors(sched):
    z0 = np.zeros((2, 3))
    with pytest.raises(ValueError):
        noise(z0, 1, np.zeros((3, 2)), sched)
    with pytest.raises(ValueError):
        noise(z0, -1, np.zeros_like(z0), sched)
    with pytest.raises(ValueError):
        noise(z0, 51, np.zeros_like(z0), sched)


def test_noise_variance_identity(sched):
    # For unit-norm z0 and standard normal eps in d dims,
    # E[|z_t|^2] = alpha_bar_t + (1 - alpha_bar_t) * d.
    d, n = 16, 100_000
    rng = np.random.default_rng(3)
    z0 = np.zeros(d)
    z0[0] = 1.0
    z0 = np.tile(z0, (n, 1))
    eps = rng.normal(size=(n, d))
    t = 37
    zt = noise(z0, t, eps, sched)
    observed = (zt**2).sum(axis=1).mean()
    ab = sched.alpha_bar[t]
    expected = ab + (1.0 - ab) * d
    assert abs(observed - expected) / expected < 0.02


def test_guidance_defaults_and_validation():
    cfg = GuidanceConfig()
    assert cfg.w_vision == 0.6 and cfg.w_text == 0.4
    assert abs(cfg.w_vision + cfg.w_text - 1.0) <= 1e-9
    with pytest.raises(ConfigError):
        GuidanceConfig(w_vision=0.7, w_text=0.4)
    with pytest.raises(ConfigError):
        GuidanceConfig(w_vision=-0.2, w_text=1.2)
    with pytest.raises(ConfigError):
        GuidanceConfig(strength=1.5)


def test_mix_guidance_endpoints():
    rng = np.random.default_rng(4)
    a_vision = rng.normal(size=(2, 7))
    a_text = rng.normal(size=(2, 7))
    only_v = mix_guidance(GuidanceConfig(w_vision=1.0, w_text=0.0), a_vision, a_text)
    assert np.array_equal(only_v, a_vision)
    only_t = mix_guidance(GuidanceConfig(w_vision=0.0, w_text=1.0), a_vision, a_text)
    assert np.array_equal(only_t, a_text)


def test_mix_guidance_fixed_point_and_convexity():
    rng = np.random.default_rng(5)
    a = rng.normal(size=(3, 4))
    cfg = GuidanceConfig()
    assert np.allclose(mix_guidance(cfg, a, a), a, rtol=0, atol=1e-15)
    b = rng.normal(size=(3, 4))
    out = mix_guidance(cfg, a, b)
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    assert np.all(out >= lo - 1e-12) and np.all(out <= hi + 1e-12)


def test_mix_guidance_rejects_shape_mismatch():
    with pytest.raises(ValueError):
        mix_guidance(GuidanceConfig(), np.zeros((2, 3)), np.zeros((3, 2)))


def test_csv_format(sched, tmp_path):
    text = format_schedule_csv(sched)
    lines = text.splitlines()
    assert lines[0] == "# schedule: nominal"
    assert lines[1] == "t,beta_t,alpha_bar_t"
    assert lines[2] == "0,,1.0"
    assert len(lines) == 2 + 51
    first = lines[3].split(",")
    assert first[0] == "1"
    assert float(first[1]) == pytest.approx(sched.betas[0], rel=1e-9)
    assert float(first[2]) == pytest.approx(sched.alpha_bar[1], rel=1e-9)
    last = lines[-1].split(",")
    assert last[0] == "50"

    out = tmp_path / "sched.csv"
    write_schedule_csv(sched, out)
    assert out.read_text() == text


def test_custom_step_count():
    sched = DiffusionSchedule.scaled_linear(total_steps=10)
    assert sched.alpha_bar.shape == (11,)
    assert sched.timesteps[-1] == TRAINING_TIMESTEPS - 1
