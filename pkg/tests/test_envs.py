import numpy as np
import pytest

from e2o.envs import (
    PEND_GRAVITY,
    PEND_LENGTH,
    PEND_MASS,
    PEND_MAX_SPEED,
    PEND_MAX_TORQUE,
    env_reset,
    env_step,
    is_truncated,
    make_spec,
    observe,
    wrap_angle,
)
from e2o.errors import ConfigError, ShapeError


def test_reset_is_deterministic_per_seed():
    spec = make_spec("pendulum")
    a = env_reset(spec, 123)
    b = env_reset(spec, 123)
    assert np.array_equal(a.phys, b.phys)
    c = env_reset(spec, 124)
    assert not np.array_equal(a.phys, c.phys)


def test_pendulum_zero_noise_reset_is_hanging_down():
    spec = make_spec("pendulum", reset_noise=0.0)
    state = env_reset(spec, 7)
    assert state.phys[0] == pytest.approx(np.pi)
    assert state.phys[1] == pytest.approx(0.0)


def test_reset_distribution_mean():
    # 1000 seeded resets: empirical mean within 3 standard errors of (pi, 0)
    spec = make_spec("pendulum")
    draws = np.array([env_reset(spec, s).phys for s in range(1000)])
    se_theta = 0.1 / np.sqrt(3) / np.sqrt(1000)
    se_vel = 0.05 / np.sqrt(3) / np.sqrt(1000)
    assert abs(draws[:, 0].mean() - np.pi) < 3 * se_theta
    assert abs(draws[:, 1].mean()) < 3 * se_vel


def test_pointmass_reset_in_unit_box():
    spec = make_spec("pointmass")
    for s in range(50):
        state = env_reset(spec, s)
        assert np.all(np.abs(state.phys[:2]) <= 1.0)
        assert np.array_equal(state.phys[2:], [0.0, 0.0])


def test_pendulum_upright_fixed_point_reward_zero():
    spec = make_spec("pendulum")
    state = env_reset(spec, 0)._replace(phys=np.array([0.0, 0.0]))
    _, reward, done = env_step(spec, state, np.zeros(1))
    assert reward == pytest.approx(0.0)
    assert not done


def test_pointmass_at_goal_reward_zero():
    spec = make_spec("pointmass")
    state = env_reset(spec, 0)._replace(phys=np.zeros(4))
    _, reward, _ = env_step(spec, state, np.zeros(2))
    assert reward == pytest.approx(0.0)


def test_pendulum_rollout_matches_reference_integrator():
    # independent double-precision semi-implicit Euler of the same dynamics
    spec = make_spec("pendulum")
    state = env_reset(spec, 99)
    theta, theta_dot = state.phys
    for _ in range(200):
        state, reward, _ = env_step(spec, state, np.zeros(1))
        acc = (3.0 * PEND_GRAVITY / (2.0 * PEND_LENGTH)) * np.sin(theta)
        theta_dot = np.clip(theta_dot + acc * spec.dt, -PEND_MAX_SPEED, PEND_MAX_SPEED)
        theta = theta + theta_dot * spec.dt
        assert abs(state.phys[0] - theta) < 1e-5
        assert abs(state.phys[1] - theta_dot) < 1e-5


def test_pendulum_reward_formula():
    spec = make_spec("pendulum")
    state = env_reset(spec, 0)._replace(phys=np.array([np.pi / 2, 1.0]))
    action = np.array([0.5])
    _, reward, _ = env_step(spec, state, action)
    u = PEND_MAX_TORQUE * 0.5
    expected = -((np.pi / 2) ** 2 + 0.1 * 1.0 + 0.001 * u * u)
    assert reward == pytest.approx(expected)


def test_env_step_is_pure():
    spec = make_spec("pointmass")
    state = env_reset(spec, 5)
    phys0 = state.phys.copy()
    a = np.array([0.3, -0.7])
    n1 = env_step(spec, state, a)
    n2 = env_step(spec, state, a)
    assert np.array_equal(n1[0].phys, n2[0].phys)
    assert n1[1] == n2[1]
    assert np.array_equal(state.phys, phys0)


def test_actions_clamped_and_nonfinite_rejected():
    spec = make_spec("pendulum")
    state = env_reset(spec, 1)
    big, _, _ = env_step(spec, state, np.array([5.0]))
    one, _, _ = env_step(spec, state, np.array([1.0]))
    assert np.array_equal(big.phys, one.phys)
    with pytest.raises(ValueError):
        env_step(spec, state, np.array([np.nan]))
    with pytest.raises(ShapeError):
        env_step(spec, state, np.array([0.1, 0.2]))


def test_truncation_at_max_episode_steps():
    spec = make_spec("pointmass", max_episode_steps=3)
    state = env_reset(spec, 0)
    for i in range(3):
        assert not is_truncated(spec, state)
        state, _, done = env_step(spec, state, np.zeros(2))
        assert not done
    assert is_truncated(spec, state)


def test_wrap_angle():
    assert wrap_angle(0.0) == 0.0
    assert wrap_angle(2 * np.pi) == pytest.approx(0.0)
    assert wrap_angle(np.pi + 0.1) == pytest.approx(-np.pi + 0.1)


def test_observe_shapes_and_dtype():
    for env in ("pendulum", "pointmass"):
        spec = make_spec(env)
        obs = observe(spec, env_reset(spec, 0))
        assert obs.shape == (spec.obs_dim,)
        assert obs.dtype == np.float32


def test_unknown_env_rejected():
    with pytest.raises(ConfigError):
        make_spec("cartpole")
