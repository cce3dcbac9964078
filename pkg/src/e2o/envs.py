"""Deterministic toy continuous-control environments.

Two analytic tasks stand in for heavyweight simulator benchmarks:

* ``pendulum``  — torque-limited swing-up from the hanging position.
* ``pointmass`` — velocity-damped double integrator steered to a goal.

Physics integrate in float64 for reproducible rollouts; observations are
emitted in float32. Actions live in [-1, 1]^act_dim and are clamped on entry.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, ShapeError

ENV_IDS = ("pendulum", "pointmass")
ENV_CODES = {name: i for i, name in enumerate(ENV_IDS)}

# pendulum constants (classic swing-up parameterization)
PEND_GRAVITY = 10.0
PEND_MASS = 1.0
PEND_LENGTH = 1.0
PEND_MAX_TORQUE = 2.0
PEND_MAX_SPEED = 8.0
PEND_THETA_NOISE = 0.1
PEND_VEL_NOISE = 0.05

# pointmass constants
PM_DAMPING = 0.5
PM_ACCEL = 1.0
PM_START_HALF_WIDTH = 1.0
PM_GOAL = np.zeros(2)


@dataclass(frozen=True)
class EnvSpec:
    env_id: str
    obs_dim: int
    act_dim: int
    max_episode_steps: int
    dt: float
    reset_noise: float = 1.0

    def __post_init__(self) -> None:
        if self.env_id not in ENV_IDS:
            raise ConfigError(f"unknown env_id {self.env_id!r}, expected one of {ENV_IDS}")
        if self.act_dim < 1 or self.max_episode_steps < 1 or not (self.dt > 0):
            raise ConfigError("act_dim, max_episode_steps and dt must be positive")


class EnvState(NamedTuple):
    env_id: str
    phys: np.ndarray  # float64 internal state, read-only
    t: int  # steps taken this episode


def make_spec(env_id: str, max_episode_steps: int | None = None, reset_noise: float = 1.0) -> EnvSpec:
    if env_id == "pendulum":
        return EnvSpec("pendulum", 3, 1, max_episode_steps or 200, 0.05, reset_noise)
    if env_id == "pointmass":
        return EnvSpec("pointmass", 4, 2, max_episode_steps or 100, 0.1, reset_noise)
    raise ConfigError(f"unknown env_id {env_id!r}, expected one of {ENV_IDS}")


def _frozen(vec: np.ndarray) -> np.ndarray:
    vec = np.asarray(vec, dtype=np.float64)
    vec.setflags(write=False)
    return vec


def env_reset(spec: EnvSpec, seed: int) -> EnvState:
    """Deterministic seeded initial state."""
    rng = np.random.default_rng(seed)
    s = spec.reset_noise
    if spec.env_id == "pendulum":
        theta = np.pi + rng.uniform(-PEND_THETA_NOISE, PEND_THETA_NOISE) * s
        theta_dot = rng.uniform(-PEND_VEL_NOISE, PEND_VEL_NOISE) * s
        phys = np.array([theta, theta_dot])
    else:
        pos = rng.uniform(-PM_START_HALF_WIDTH, PM_START_HALF_WIDTH, size=2) * s
        phys = np.concatenate([pos, np.zeros(2)])
    return EnvState(spec.env_id, _frozen(phys), 0)


def wrap_angle(theta: float) -> float:
    """Map an angle to [-pi, pi)."""
    return float((theta + np.pi) % (2.0 * np.pi) - np.pi)


def env_step(spec: EnvSpec, state: EnvState, action: np.ndarray):
    """Pure deterministic transition; returns (next_state, reward, done).

    Out-of-range action components are clamped to [-1, 1]; callers that need
    to log clamping should compare against the bounds before stepping.
    ``done`` is reserved for genuine terminals (neither env has any); time
    limits are the rollout loop's concern via ``state.t``.
    """
    action = np.asarray(action, dtype=np.float64).reshape(-1)
    if action.shape != (spec.act_dim,):
        raise ShapeError(f"action width {action.shape} != expected ({spec.act_dim},)")
    if not np.all(np.isfinite(action)):
        raise ValueError(f"non-finite action {action}")
    action = np.clip(action, -1.0, 1.0)

    if spec.env_id == "pendulum":
        theta, theta_dot = state.phys
        u = PEND_MAX_TORQUE * action[0]
        reward = -(wrap_angle(theta) ** 2 + 0.1 * theta_dot**2 + 0.001 * u**2)
        theta_ddot = (3.0 * PEND_GRAVITY / (2.0 * PEND_LENGTH)) * np.sin(theta) + (
            3.0 / (PEND_MASS * PEND_LENGTH**2)
        ) * u
        new_theta_dot = np.clip(theta_dot + theta_ddot * spec.dt, -PEND_MAX_SPEED, PEND_MAX_SPEED)
        new_theta = theta + new_theta_dot * spec.dt
        phys = np.array([new_theta, new_theta_dot])
    else:
        pos, vel = state.phys[:2], state.phys[2:]
        reward = -float(np.linalg.norm(pos - PM_GOAL))
        new_vel = vel + (PM_ACCEL * action - PM_DAMPING * vel) * spec.dt
        new_pos = pos + new_vel * spec.dt
        phys = np.concatenate([new_pos, new_vel])

    return EnvState(spec.env_id, _frozen(phys), state.t + 1), float(reward), False


def observe(spec: EnvSpec, state: EnvState) -> np.ndarray:
    """Float32 observation of the physical state."""
    if spec.env_id == "pendulum":
        theta, theta_dot = state.phys
        obs = np.array([np.cos(theta), np.sin(theta), theta_dot])
    else:
        obs = state.phys
    return obs.astype(np.float32)


def is_truncated(spec: EnvSpec, state: EnvState) -> bool:
    return state.t >= spec.max_episode_steps
