"""Offline transition datasets and the "E2OD" binary file format.

A dataset is a header (environment id, collection kind, reference scores for
score normalization, generator seed) plus a contiguous block of transition
records stored in single precision. Files round-trip byte-exactly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .envs import ENV_CODES, ENV_IDS, make_spec
from .errors import ConfigError, FormatError, ShapeError

DATASET_MAGIC = b"E2OD"
DATASET_VERSION = 1

DATASET_KINDS = ("medium", "medium_replay", "medium_expert")
KIND_CODES = {name: i for i, name in enumerate(DATASET_KINDS)}

_HEADER_FMT = "<IIQddQ"  # env_id, kind, record_count, random_ref, expert_ref, generator_seed


class TransitionRecord(NamedTuple):
    obs: np.ndarray
    action: np.ndarray
    reward: float
    next_obs: np.ndarray
    done: bool
    truncated: bool


@dataclass
class TransitionBatch:
    """Struct-of-arrays storage for many transitions."""

    obs: np.ndarray  # (n, obs_dim) float32
    actions: np.ndarray  # (n, act_dim) float32
    rewards: np.ndarray  # (n,) float32
    next_obs: np.ndarray  # (n, obs_dim) float32
    dones: np.ndarray  # (n,) bool
    truncateds: np.ndarray  # (n,) bool

    def __post_init__(self) -> None:
        n = self.obs.shape[0]
        for name in ("actions", "rewards", "next_obs", "dones", "truncateds"):
            if getattr(self, name).shape[0] != n:
                raise ShapeError(f"field {name} has {getattr(self, name).shape[0]} rows, expected {n}")
        if np.logical_and(self.dones, self.truncateds).any():
            raise ConfigError("done and truncated must never both be set")

    def __len__(self) -> int:
        return self.obs.shape[0]

    def row(self, i: int) -> TransitionRecord:
        return TransitionRecord(
            self.obs[i], self.actions[i], float(self.rewards[i]),
            self.next_obs[i], bool(self.dones[i]), bool(self.truncateds[i]),
        )

    def slice(self, idx) -> "TransitionBatch":
        return TransitionBatch(
            self.obs[idx], self.actions[idx], self.rewards[idx],
            self.next_obs[idx], self.dones[idx], self.truncateds[idx],
        )


def batch_from_records(records, obs_dim: int, act_dim: int) -> TransitionBatch:
    n = len(records)
    batch = TransitionBatch(
        obs=np.zeros((n, obs_dim), np.float32),
        actions=np.zeros((n, act_dim), np.float32),
        rewards=np.zeros(n, np.float32),
        next_obs=np.zeros((n, obs_dim), np.float32),
        dones=np.zeros(n, bool),
        truncateds=np.zeros(n, bool),
    )
    for i, r in enumerate(records):
        batch.obs[i] = r.obs
        batch.actions[i] = r.action
        batch.rewards[i] = r.reward
        batch.next_obs[i] = r.next_obs
        batch.dones[i] = r.done
        batch.truncateds[i] = r.truncated
    return batch


def concat_batches(parts) -> TransitionBatch:
    return TransitionBatch(
        np.concatenate([p.obs for p in parts]),
        np.concatenate([p.actions for p in parts]),
        np.concatenate([p.rewards for p in parts]),
        np.concatenate([p.next_obs for p in parts]),
        np.concatenate([p.dones for p in parts]),
        np.concatenate([p.truncateds for p in parts]),
    )


@dataclass
class DatasetHeader:
    env_id: str
    dataset_kind: str
    record_count: int
    random_ref_score: float
    expert_ref_score: float
    generator_seed: int

    def __post_init__(self) -> None:
        if self.env_id not in ENV_IDS:
            raise ConfigError(f"unknown env_id {self.env_id!r}")
        if self.dataset_kind not in DATASET_KINDS:
            raise ConfigError(f"unknown dataset kind {self.dataset_kind!r}")
        if self.record_count <= 0:
            raise ConfigError("record_count must be positive")
        if not self.expert_ref_score > self.random_ref_score:
            raise ConfigError(
                f"expert_ref_score {self.expert_ref_score} must exceed "
                f"random_ref_score {self.random_ref_score}"
            )


@dataclass
class Dataset:
    header: DatasetHeader
    records: TransitionBatch

    def __post_init__(self) -> None:
        if self.header.record_count != len(self.records):
            raise ConfigError(
                f"header record_count {self.header.record_count} != stored {len(self.records)}"
            )
        if np.abs(self.records.actions).max(initial=0.0) > 1.0:
            raise ConfigError("stored actions must lie in [-1, 1]")

    def __len__(self) -> int:
        return len(self.records)


def record_dtype(obs_dim: int, act_dim: int) -> np.dtype:
    return np.dtype(
        [
            ("obs", "<f4", (obs_dim,)),
            ("action", "<f4", (act_dim,)),
            ("reward", "<f4"),
            ("next_obs", "<f4", (obs_dim,)),
            ("done", "u1"),
            ("truncated", "u1"),
        ]
    )


def dataset_to_bytes(ds: Dataset) -> bytes:
    spec = make_spec(ds.header.env_id)
    header = struct.pack(
        _HEADER_FMT,
        ENV_CODES[ds.header.env_id],
        KIND_CODES[ds.header.dataset_kind],
        ds.header.record_count,
        ds.header.random_ref_score,
        ds.header.expert_ref_score,
        ds.header.generator_seed,
    )
    rows = np.zeros(len(ds.records), dtype=record_dtype(spec.obs_dim, spec.act_dim))
    rows["obs"] = ds.records.obs
    rows["action"] = ds.records.actions
    rows["reward"] = ds.records.rewards
    rows["next_obs"] = ds.records.next_obs
    rows["done"] = ds.records.dones
    rows["truncated"] = ds.records.truncateds
    return DATASET_MAGIC + struct.pack("<I", DATASET_VERSION) + header + rows.tobytes()


def dataset_from_bytes(buf: bytes) -> Dataset:
    if buf[:4] != DATASET_MAGIC:
        raise FormatError(f"bad magic {buf[:4]!r}, expected {DATASET_MAGIC!r}")
    (version,) = struct.unpack_from("<I", buf, 4)
    if version != DATASET_VERSION:
        raise FormatError(f"unsupported dataset version {version}")
    env_code, kind_code, count, random_ref, expert_ref, gen_seed = struct.unpack_from(
        _HEADER_FMT, buf, 8
    )
    if env_code >= len(ENV_IDS) or kind_code >= len(DATASET_KINDS):
        raise FormatError(f"unknown env/kind codes ({env_code}, {kind_code})")
    header = DatasetHeader(
        ENV_IDS[env_code], DATASET_KINDS[kind_code], count, random_ref, expert_ref, gen_seed
    )
    spec = make_spec(header.env_id)
    dt = record_dtype(spec.obs_dim, spec.act_dim)
    off = 8 + struct.calcsize(_HEADER_FMT)
    if len(buf) != off + count * dt.itemsize:
        raise FormatError(f"dataset length {len(buf)} != expected {off + count * dt.itemsize}")
    rows = np.frombuffer(buf, dtype=dt, count=count, offset=off)
    records = TransitionBatch(
        obs=rows["obs"].copy(),
        actions=rows["action"].copy(),
        rewards=rows["reward"].copy(),
        next_obs=rows["next_obs"].copy(),
        dones=rows["done"].astype(bool),
        truncateds=rows["truncated"].astype(bool),
    )
    return Dataset(header, records)


def save_dataset(ds: Dataset, path) -> None:
    with open(path, "wb") as f:
        f.write(dataset_to_bytes(ds))


def load_dataset(path) -> Dataset:
    with open(path, "rb") as f:
        return dataset_from_bytes(f.read())


def normalized_score(raw_return: float, header: DatasetHeader) -> float:
    """100 * (raw - random_ref) / (expert_ref - random_ref)."""
    span = header.expert_ref_score - header.random_ref_score
    if not span > 0:
        raise ConfigError("reference scores are degenerate (expert <= random)")
    return 100.0 * (raw_return - header.random_ref_score) / span
