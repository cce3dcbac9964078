"""Tanh-squashed Gaussian policy head.

The trunk MLP maps an observation to per-dimension (mean, raw log-std); the
log-std is clamped to [-20, 2]. Sampling is reparameterized (a = tanh(mean +
std * eps)) and the reported log-density carries the exact tanh
change-of-variables correction, so exp(log_prob) integrates to one over the
action box.

`sample_backward` implements the reverse-mode path through the squash and the
log-density, which is all the actor update needs on top of the trunk's own
backward pass.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import nets
from .errors import DiagnosticError, ShapeError
from .nets import Mlp

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
_LOG_2PI = float(np.log(2.0 * np.pi))
_LOG_2 = float(np.log(2.0))


@dataclass
class SquashedGaussianPolicy:
    trunk: Mlp  # obs -> (mean, raw log_std), output width 2*act_dim
    act_dim: int

    @property
    def obs_dim(self) -> int:
        return self.trunk.in_dim


def policy_init(obs_dim: int, act_dim: int, hidden_dims, rng: np.random.Generator) -> SquashedGaussianPolicy:
    dims = (obs_dim, *hidden_dims, 2 * act_dim)
    return SquashedGaussianPolicy(nets.mlp_init(dims, rng), act_dim)


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.log1p(np.exp(-np.abs(x))) + np.maximum(x, 0.0)


def _log_one_minus_tanh_sq(u: np.ndarray) -> np.ndarray:
    # log(1 - tanh(u)^2) in a form stable for large |u|
    return 2.0 * (_LOG_2 - u - _softplus(-2.0 * u))


class PolicySample(NamedTuple):
    action: np.ndarray  # (B, A), strictly inside (-1, 1)
    log_prob: np.ndarray  # (B,)
    cache: tuple


def dist_params(policy: SquashedGaussianPolicy, obs: np.ndarray, params=None):
    out, trunk_cache = nets.forward_cached(policy.trunk, obs, params)
    if out.ndim == 1:
        out = out[None, :]
    a = policy.act_dim
    mean, raw = out[:, :a], out[:, a:]
    log_std = np.clip(raw, LOG_STD_MIN, LOG_STD_MAX)
    return mean, raw, log_std, np.exp(log_std), trunk_cache


def sample(policy: SquashedGaussianPolicy, obs: np.ndarray, eps: np.ndarray, params=None) -> PolicySample:
    """Reparameterized sample with frozen noise ``eps`` of shape (B, act_dim)."""
    mean, raw, log_std, std, trunk_cache = dist_params(policy, obs, params)
    if not np.all(np.isfinite(mean)) or not np.all(np.isfinite(raw)):
        raise DiagnosticError("policy trunk produced non-finite output")
    eps = np.asarray(eps, dtype=mean.dtype)
    if eps.shape != mean.shape:
        raise ShapeError(f"noise shape {eps.shape} != ({mean.shape})")
    u = mean + std * eps
    action = np.tanh(u)
    log_prob = np.sum(
        -log_std - 0.5 * _LOG_2PI - 0.5 * eps * eps - _log_one_minus_tanh_sq(u), axis=1
    )
    gate = ((raw > LOG_STD_MIN) & (raw < LOG_STD_MAX)).astype(mean.dtype)
    cache = (trunk_cache, action, std, eps, gate)
    return PolicySample(action, log_prob, cache)


def sample_backward(policy: SquashedGaussianPolicy, cache, d_action: np.ndarray,
                    d_log_prob: np.ndarray, params=None) -> np.ndarray:
    """Backprop dL/d(action) and dL/d(log_prob) into trunk parameter gradients."""
    trunk_cache, action, std, eps, gate = cache
    one_minus_a2 = 1.0 - action * action
    dlp = d_log_prob[:, None]
    # d log_prob / du = 2*tanh(u);  da/du = 1 - a^2;  du/dlog_std = std*eps
    g_u = dlp * (2.0 * action) + d_action * one_minus_a2
    g_mean = g_u
    g_raw = (dlp * -1.0 + g_u * (std * eps)) * gate
    upstream = np.concatenate([g_mean, g_raw], axis=1)
    param_grads, _ = nets.backward_from_cache(policy.trunk, trunk_cache, upstream, params)
    return param_grads


def deterministic_action(policy: SquashedGaussianPolicy, obs: np.ndarray, params=None) -> np.ndarray:
    out = nets.forward(policy.trunk, obs, params)
    mean = out[..., : policy.act_dim]
    if not np.all(np.isfinite(mean)):
        raise DiagnosticError("policy trunk produced non-finite output")
    return np.tanh(mean)


def sample_action(policy: SquashedGaussianPolicy, obs: np.ndarray,
                  rng: np.random.Generator, deterministic: bool = False):
    """Spec-level convenience: one stochastic (or deterministic) action per obs.

    Returns (action, log_prob); log_prob is None in deterministic mode.
    """
    obs = np.asarray(obs)
    single = obs.ndim == 1
    if deterministic:
        act = deterministic_action(policy, obs)
        return act, None
    batch = obs[None, :] if single else obs
    eps = rng.standard_normal((batch.shape[0], policy.act_dim)).astype(np.float32)
    res = sample(policy, batch, eps)
    if single:
        return res.action[0], float(res.log_prob[0])
    return res.action, res.log_prob


def action_log_prob(policy: SquashedGaussianPolicy, obs: np.ndarray,
                    actions: np.ndarray, params=None) -> np.ndarray:
    """Exact squashed log-density at arbitrary in-range actions."""
    mean, _, log_std, std, _ = dist_params(policy, obs, params)
    actions = np.asarray(actions, dtype=mean.dtype)
    if actions.ndim == 1:
        actions = actions[None, :]
    a = np.clip(actions, -1.0 + 1e-7, 1.0 - 1e-7)
    u = np.arctanh(a)
    z = (u - mean) / std
    return np.sum(
        -log_std - 0.5 * _LOG_2PI - 0.5 * z * z - _log_one_minus_tanh_sq(u), axis=1
    )
