"""Uniform-sampling ring replay buffer with per-transition bootstrap masks.

Each stored transition carries an immutable Bernoulli(p_mask) mask row of
length N (the critic-ensemble size); heads train only on transitions whose
mask bit is set. With p_mask=1 every head sees everything.
"""

from __future__ import annotations

import numpy as np

from .dataset import Dataset, TransitionBatch, TransitionRecord
from .errors import ConfigError, ShapeError, StateError


class ReplayBuffer:
    def __init__(self, capacity: int, obs_dim: int, act_dim: int,
                 ensemble_size: int, p_mask: float = 1.0):
        if capacity < 1:
            raise ConfigError("capacity must be positive")
        if not (0.0 <= p_mask <= 1.0):
            raise ConfigError(f"p_mask must lie in [0, 1], got {p_mask}")
        self.capacity = int(capacity)
        self.obs_dim = int(obs_dim)
        self.act_dim = int(act_dim)
        self.ensemble_size = int(ensemble_size)
        self.p_mask = float(p_mask)
        self.obs = np.zeros((capacity, obs_dim), np.float32)
        self.actions = np.zeros((capacity, act_dim), np.float32)
        self.rewards = np.zeros(capacity, np.float32)
        self.next_obs = np.zeros((capacity, obs_dim), np.float32)
        self.dones = np.zeros(capacity, bool)
        self.truncateds = np.zeros(capacity, bool)
        self.masks = np.zeros((capacity, ensemble_size), np.uint8)
        self.write_cursor = 0
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def _draw_mask(self, rng: np.random.Generator, n: int = 1) -> np.ndarray:
        if self.p_mask >= 1.0:
            return np.ones((n, self.ensemble_size), np.uint8)
        return (rng.random((n, self.ensemble_size)) < self.p_mask).astype(np.uint8)

    def push(self, record: TransitionRecord, rng: np.random.Generator) -> None:
        obs = np.asarray(record.obs, np.float32)
        action = np.asarray(record.action, np.float32)
        next_obs = np.asarray(record.next_obs, np.float32)
        if obs.shape != (self.obs_dim,) or next_obs.shape != (self.obs_dim,):
            raise ShapeError(f"obs width {obs.shape} != expected ({self.obs_dim},)")
        if action.shape != (self.act_dim,):
            raise ShapeError(f"action width {action.shape} != expected ({self.act_dim},)")
        i = self.write_cursor
        self.obs[i] = obs
        self.actions[i] = action
        self.rewards[i] = record.reward
        self.next_obs[i] = next_obs
        self.dones[i] = record.done
        self.truncateds[i] = record.truncated
        self.masks[i] = self._draw_mask(rng)[0]
        self.write_cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample_uniform(self, batch_size: int, rng: np.random.Generator):
        """I.i.d. uniform indices with replacement; returns (batch, mask rows)."""
        if self.size < 1:
            raise StateError("cannot sample from an empty buffer")
        idx = rng.integers(0, self.size, size=batch_size)
        batch = TransitionBatch(
            self.obs[idx], self.actions[idx], self.rewards[idx],
            self.next_obs[idx], self.dones[idx], self.truncateds[idx],
        )
        return batch, self.masks[idx].astype(np.float32)

    def init_from_dataset(self, ds: Dataset, rng: np.random.Generator,
                          obs_dim: int | None = None, act_dim: int | None = None) -> None:
        """Pre-fill with dataset records in file order.

        Datasets larger than capacity keep only the most recent records.
        """
        rec = ds.records
        if rec.obs.shape[1] != self.obs_dim or rec.actions.shape[1] != self.act_dim:
            raise ConfigError(
                f"dataset dims ({rec.obs.shape[1]}, {rec.actions.shape[1]}) do not match "
                f"buffer dims ({self.obs_dim}, {self.act_dim})"
            )
        n = len(rec)
        if n > self.capacity:
            rec = rec.slice(slice(n - self.capacity, n))
            n = self.capacity
        self.obs[:n] = rec.obs
        self.actions[:n] = rec.actions
        self.rewards[:n] = rec.rewards
        self.next_obs[:n] = rec.next_obs
        self.dones[:n] = rec.dones
        self.truncateds[:n] = rec.truncateds
        self.masks[:n] = self._draw_mask(rng, n)
        self.size = n
        self.write_cursor = n % self.capacity
