"""Two-phase training orchestration: offline pre-training on a fixed dataset,
checkpoint handoff, online fine-tuning with periodic evaluation, plus run
configuration, metric logging and the end-to-end experiment driver.

The offline phase trains a conservative ensemble (cql_alpha > 0, MinQ targets,
pessimistic actor). The online phase reloads every network, drops the
conservative term, switches the target reduction and exploration mechanism
(WeightedMinPair + SUNRISE by default; all overridable for ablations), and
interacts with the live environment using a fresh replay buffer unless
``use_offline_data_online`` is set.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import checkpoint as ckpt
from . import policy as pol
from .agent import Agent, AgentConfig, ensemble_q
from .dataset import Dataset, TransitionRecord, load_dataset, normalized_score, save_dataset
from .datagen import derived_int, derived_rng, evaluate_policy, generate_dataset
from .envs import EnvSpec, env_reset, env_step, is_truncated, make_spec, observe
from .errors import ConfigError, E2OError, StateError
from .replay import ReplayBuffer

RUNLOG_COLUMNS = (
    "phase", "step", "eval_return_mean", "eval_return_std", "normalized_score",
    "avg_q_on_dataset", "q_std_mean", "critic_loss", "actor_loss", "alpha",
    "action_clamp_count",
)


@dataclass
class RunConfig:
    agent: AgentConfig
    env: str = "pendulum"
    dataset_path: str = ""
    seed: int = 0
    offline_steps: int = 50_000
    online_env_steps: int = 25_000
    eval_interval: int = 1000
    eval_episodes: int = 10
    eval_seed: int = 9_000_000
    use_offline_data_online: bool = False
    output_dir: str = "runs/run0"
    buffer_capacity: int = 1_000_000
    online_warmup_steps: int = 500
    q_probe_size: int = 10_000
    generate_if_missing: bool = False
    dataset_kind: str = "medium"
    dataset_size: int = 100_000
    # online-phase overrides of the (offline) agent config
    online_target_strategy: str = "WeightedMinPair"
    online_exploration: str = "SUNRISE_UCB"
    online_cql_alpha: float = 0.0
    online_sunrise_temperature: float = 10.0

    def __post_init__(self) -> None:
        for name in ("offline_steps", "online_env_steps"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        for name in ("eval_interval", "eval_episodes", "buffer_capacity", "q_probe_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")

    def online_agent_config(self) -> AgentConfig:
        return replace(
            self.agent,
            cql_alpha=self.online_cql_alpha,
            target_strategy=self.online_target_strategy,
            exploration=self.online_exploration,
            sunrise_temperature=self.online_sunrise_temperature,
        )

    def resolved_p_mask(self) -> float:
        return 0.8 if self.online_exploration == "BootstrappedHeads" else 1.0


_RUN_KEYS = {f.name: f for f in fields(RunConfig) if f.name != "agent"}
_AGENT_KEYS = {
    f.name: f for f in fields(AgentConfig) if f.name not in ("obs_dim", "act_dim")
}

_BOOL_VALUES = {"true": True, "false": False, "1": True, "0": False, "yes": True, "no": False}


def _convert(name: str, value: str, annotation: str):
    if name == "hidden_dims":
        return tuple(int(x) for x in value.split(",") if x)
    if name == "target_entropy":
        return None if value.lower() == "none" else float(value)
    if "bool" in annotation:
        if value.lower() not in _BOOL_VALUES:
            raise ConfigError(f"key {name!r}: expected a boolean, got {value!r}")
        return _BOOL_VALUES[value.lower()]
    if "int" in annotation:
        return int(value)
    if "float" in annotation:
        return float(value)
    return value


def parse_run_config(text: str) -> RunConfig:
    """Flat ``key = value`` format, one per line, '#' comments, unknown keys rejected."""
    run_kwargs: dict = {}
    agent_kwargs: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key in _RUN_KEYS:
            run_kwargs[key] = _convert(key, value, str(_RUN_KEYS[key].type))
        elif key in _AGENT_KEYS:
            agent_kwargs[key] = _convert(key, value, str(_AGENT_KEYS[key].type))
        else:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
    env = run_kwargs.get("env", "pendulum")
    spec = make_spec(env)
    agent = AgentConfig(obs_dim=spec.obs_dim, act_dim=spec.act_dim, **agent_kwargs)
    return RunConfig(agent=agent, **run_kwargs)


def load_run_config(path) -> RunConfig:
    return parse_run_config(Path(path).read_text())


def run_config_to_dict(cfg: RunConfig) -> dict:
    out = {}
    for f in fields(RunConfig):
        if f.name == "agent":
            continue
        out[f.name] = getattr(cfg, f.name)
    for f in fields(AgentConfig):
        v = getattr(cfg.agent, f.name)
        out[f.name] = list(v) if isinstance(v, tuple) else v
    return out


# --- run log ------------------------------------------------------------------


class RunLogWriter:
    """Append-only CSV with a fixed header; flushed after every row."""

    def __init__(self, path):
        self.path = Path(path)
        self._f = open(self.path, "w")
        self._f.write(",".join(RUNLOG_COLUMNS) + "\n")
        self._f.flush()
        self._last = None

    def append(self, phase: str, step: int, **metrics) -> None:
        key = (0 if phase == "offline" else 1, step)
        if self._last is not None and key <= self._last:
            raise StateError(f"run log rows must increase in (phase, step); got {key}")
        self._last = key
        cells = [phase, str(int(step))]
        for name in RUNLOG_COLUMNS[2:]:
            v = metrics[name]
            cells.append(str(int(v)) if name == "action_clamp_count" else repr(float(v)))
        self._f.write(",".join(cells) + "\n")
        self._f.flush()

    def close(self) -> None:
        self._f.close()


def read_runlog(path) -> dict:
    """Columns as arrays: 'phase' (str array), 'step' (int), the rest float."""
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != ",".join(RUNLOG_COLUMNS):
        raise ConfigError(f"{path}: not a run log (unexpected header)")
    rows = [line.split(",") for line in lines[1:] if line]
    out: dict = {"phase": np.array([r[0] for r in rows])}
    out["step"] = np.array([int(r[1]) for r in rows], dtype=np.int64)
    for i, name in enumerate(RUNLOG_COLUMNS[2:], start=2):
        out[name] = np.array([float(r[i]) for r in rows])
    return out


# --- evaluation ----------------------------------------------------------------


def evaluate(policy, spec: EnvSpec, episodes: int, eval_seed: int):
    """Deterministic-policy evaluation; returns (mean, std) of undiscounted returns."""
    if episodes < 1:
        raise ConfigError("episodes must be >= 1")
    return evaluate_policy(spec, policy, episodes, eval_seed)


# --- phase loops -----------------------------------------------------------------


class PhaseResult(NamedTuple):
    agent: Agent
    ckpt_path: Path
    log_path: Path
    final_eval: float
    final_score: float


def _probe_indices(cfg: RunConfig, ds: Dataset) -> np.ndarray:
    n = min(cfg.q_probe_size, len(ds))
    rng = derived_rng(cfg.seed, "q-probe")
    return rng.choice(len(ds), size=n, replace=False)


def _avg_q_on_dataset(agent: Agent, ds: Dataset, idx: np.ndarray) -> float:
    q = ensemble_q(agent.ensemble.online_nets, ds.records.obs[idx], ds.records.actions[idx])
    return float(q.mean())


def _eval_steps(total: int, interval: int):
    steps = list(range(interval, total + 1, interval))
    if total > 0 and (not steps or steps[-1] != total):
        steps.append(total)
    return steps


def _load_run_dataset(cfg: RunConfig) -> Dataset:
    ds = load_dataset(cfg.dataset_path)
    if ds.header.env_id != cfg.env:
        raise ConfigError(
            f"dataset env {ds.header.env_id!r} does not match run env {cfg.env!r}"
        )
    return ds


def train_offline(cfg: RunConfig, out_dir=None) -> PhaseResult:
    """Conservative ensemble pre-training on the dataset only; evaluation
    rollouts never enter any buffer."""
    spec = make_spec(cfg.env)
    ds = _load_run_dataset(cfg)
    out_dir = Path(out_dir if out_dir is not None else cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    agent = Agent(cfg.agent, derived_int(cfg.seed, "offline-agent"), phase="offline")
    buffer = ReplayBuffer(max(len(ds), 1), spec.obs_dim, spec.act_dim,
                          cfg.agent.ensemble_size, p_mask=1.0)
    buffer.init_from_dataset(ds, derived_rng(cfg.seed, "offline-mask"))
    rng_batch = derived_rng(cfg.seed, "offline-batch")
    probe_idx = _probe_indices(cfg, ds)
    eval_at = set(_eval_steps(cfg.offline_steps, cfg.eval_interval))
    writer = RunLogWriter(out_dir / "offline_log.csv")
    last = {"critic_loss": float("nan"), "actor_loss": float("nan"), "q_std_mean": float("nan")}
    final_eval = final_score = float("nan")
    try:
        for step in range(1, cfg.offline_steps + 1):
            batch, masks = buffer.sample_uniform(cfg.agent.batch_size, rng_batch)
            stats = agent.update_critics(batch, masks)
            actor_loss, mean_log_prob = agent.update_actor(batch.obs)
            agent.update_temperature(mean_log_prob)
            last = {
                "critic_loss": float(stats.loss_per_critic.mean()),
                "actor_loss": actor_loss,
                "q_std_mean": stats.q_std_mean,
            }
            if step in eval_at:
                ret, ret_std = evaluate(agent.policy, spec, cfg.eval_episodes, cfg.eval_seed)
                final_eval, final_score = ret, normalized_score(ret, ds.header)
                writer.append(
                    "offline", step,
                    eval_return_mean=ret, eval_return_std=ret_std,
                    normalized_score=final_score,
                    avg_q_on_dataset=_avg_q_on_dataset(agent, ds, probe_idx),
                    action_clamp_count=0, alpha=agent.alpha, **last,
                )
    finally:
        writer.close()
    ckpt_path = out_dir / "offline.e2oc"
    ckpt.save_checkpoint(agent, ckpt_path, cfg.env)
    return PhaseResult(agent, ckpt_path, out_dir / "offline_log.csv", final_eval, final_score)


def train_online(cfg: RunConfig, offline_ckpt, out_dir=None) -> PhaseResult:
    """Online fine-tuning from an offline checkpoint.

    Loads every network (and optimizer moments), zeroes the conservative
    term, switches target reduction/exploration to the configured online
    variants, and re-initializes the entropy temperature. The replay buffer
    starts empty unless ``use_offline_data_online`` is set.
    """
    spec = make_spec(cfg.env)
    ds = _load_run_dataset(cfg)
    out_dir = Path(out_dir if out_dir is not None else cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if ckpt.peek_phase(offline_ckpt) != "offline":
        raise StateError(f"{offline_ckpt}: expected an offline-phase checkpoint")
    online_cfg = cfg.online_agent_config()
    agent, ckpt_env = ckpt.load_checkpoint(
        offline_ckpt, expected_config=online_cfg, seed=derived_int(cfg.seed, "online-agent")
    )
    if ckpt_env != cfg.env:
        raise ConfigError(f"checkpoint env {ckpt_env!r} does not match run env {cfg.env!r}")
    agent.phase = "online"
    agent.reset_temperature()

    buffer = ReplayBuffer(cfg.buffer_capacity, spec.obs_dim, spec.act_dim,
                          online_cfg.ensemble_size, p_mask=cfg.resolved_p_mask())
    rng_mask = derived_rng(cfg.seed, "online-mask")
    if cfg.use_offline_data_online:
        buffer.init_from_dataset(ds, rng_mask)
    rng_batch = derived_rng(cfg.seed, "online-batch")
    rng_head = derived_rng(cfg.seed, "online-head")
    env_seed_base = derived_int(cfg.seed, "online-env") % (2**31)
    probe_idx = _probe_indices(cfg, ds)
    eval_at = set(_eval_steps(cfg.online_env_steps, cfg.eval_interval))
    min_fill = max(online_cfg.batch_size, cfg.online_warmup_steps)

    writer = RunLogWriter(out_dir / "online_log.csv")
    last = {"critic_loss": float("nan"), "actor_loss": float("nan"), "q_std_mean": float("nan")}
    clamp_count = 0
    final_eval = final_score = float("nan")
    state = env_reset(spec, env_seed_base)
    episode = 0
    head = int(rng_head.integers(online_cfg.ensemble_size))
    try:
        for step in range(1, cfg.online_env_steps + 1):
            obs = observe(spec, state)
            action = agent.select_exploration_action(obs, bootstrap_head=head)
            if np.any(np.abs(action) > 1.0):
                clamp_count += 1
                action = np.clip(action, -1.0, 1.0)
            next_state, reward, done = env_step(spec, state, action)
            truncated = (not done) and is_truncated(spec, next_state)
            buffer.push(
                TransitionRecord(obs, action.astype(np.float32), reward,
                                 observe(spec, next_state), done, truncated),
                rng_mask,
            )
            if done or truncated:
                episode += 1
                state = env_reset(spec, env_seed_base + episode)
                head = int(rng_head.integers(online_cfg.ensemble_size))
            else:
                state = next_state
            if len(buffer) >= min_fill:
                for _ in range(online_cfg.updates_per_env_step):
                    batch, masks = buffer.sample_uniform(online_cfg.batch_size, rng_batch)
                    stats = agent.update_critics(batch, masks)
                    actor_loss, mean_log_prob = agent.update_actor(batch.obs)
                    agent.update_temperature(mean_log_prob)
                    last = {
                        "critic_loss": float(stats.loss_per_critic.mean()),
                        "actor_loss": actor_loss,
                        "q_std_mean": stats.q_std_mean,
                    }
            if step in eval_at:
                ret, ret_std = evaluate(agent.policy, spec, cfg.eval_episodes, cfg.eval_seed)
                final_eval, final_score = ret, normalized_score(ret, ds.header)
                writer.append(
                    "online", step,
                    eval_return_mean=ret, eval_return_std=ret_std,
                    normalized_score=final_score,
                    avg_q_on_dataset=_avg_q_on_dataset(agent, ds, probe_idx),
                    action_clamp_count=clamp_count, alpha=agent.alpha, **last,
                )
                clamp_count = 0
    finally:
        writer.close()
    ckpt_path = out_dir / "online.e2oc"
    ckpt.save_checkpoint(agent, ckpt_path, cfg.env)
    return PhaseResult(agent, ckpt_path, out_dir / "online_log.csv", final_eval, final_score)


# --- end-to-end driver ------------------------------------------------------------


def _sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def run_experiment(cfg: RunConfig) -> dict:
    """Dataset load/generation, offline phase, online phase, manifest."""
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest: dict = {
        "config": run_config_to_dict(cfg),
        "seed": cfg.seed,
        "input_hashes": {},
        "artifact_hashes": {},
        "status": "ok",
        "error": None,
    }
    try:
        dataset_path = Path(cfg.dataset_path)
        if not dataset_path.exists():
            if not cfg.generate_if_missing:
                raise ConfigError(f"dataset file {dataset_path} does not exist")
            spec = make_spec(cfg.env)
            ds = generate_dataset(cfg.dataset_kind, spec, cfg.seed, cfg.dataset_size)
            dataset_path.parent.mkdir(parents=True, exist_ok=True)
            save_dataset(ds, dataset_path)
        manifest["input_hashes"]["dataset"] = _sha256_file(dataset_path)
        offline = train_offline(cfg, out_dir)
        online = train_online(cfg, offline.ckpt_path, out_dir)
        for p in (offline.ckpt_path, offline.log_path, online.ckpt_path, online.log_path):
            manifest["artifact_hashes"][Path(p).name] = _sha256_file(p)
    except E2OError as exc:
        manifest["status"] = "error"
        manifest["error"] = f"{type(exc).__name__}: {exc}"
    manifest["timestamp"] = time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime())
    with open(out_dir / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return manifest
