"""Reference-policy training and offline dataset synthesis.

Builds the three dataset kinds from scratch, deterministically per seed:

* ``medium``        — rollouts of a mid-training policy checkpoint (with its
                      stochastic action noise).
* ``medium_replay`` — the verbatim transition stream seen while training up
                      to that checkpoint.
* ``medium_expert`` — a 50/50 concatenation of medium- and expert-policy
                      rollouts.

The "expert" is the best evaluation checkpoint of a from-scratch soft
actor-critic run with two critics; the "medium" checkpoint is the one whose
evaluation return lands nearest the midpoint between the random-policy and
expert returns.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from . import nets, policy as pol
from .agent import Agent, AgentConfig
from .dataset import (
    Dataset,
    DatasetHeader,
    TransitionBatch,
    TransitionRecord,
    concat_batches,
)
from .envs import EnvSpec, env_reset, env_step, is_truncated, make_spec, observe
from .errors import ConfigError, GenerationError
from .policy import SquashedGaussianPolicy
from .replay import ReplayBuffer

REF_TOTAL_STEPS = {"pendulum": 30_000, "pointmass": 15_000}
REF_HIDDEN_DIMS = (64, 64)
REF_CKPT_INTERVAL = 500
REF_CKPT_EVAL_EPISODES = 10
REF_SELECT_EVAL_EPISODES = 20
REF_SCORE_EPISODES = 100
REF_RANDOM_ACTION_STEPS = 1000
REF_MIN_IMPROVEMENT = 0.25  # expert must beat random by this fraction of |random|


def derived_seed(seed: int, tag: str) -> np.random.SeedSequence:
    """Stable named sub-stream of a base seed (no salted hashing)."""
    digest = hashlib.sha256(tag.encode()).digest()
    return np.random.SeedSequence([int(seed), int.from_bytes(digest[:8], "little")])


def derived_rng(seed: int, tag: str) -> np.random.Generator:
    return np.random.default_rng(derived_seed(seed, tag))


def derived_int(seed: int, tag: str) -> int:
    return int(derived_seed(seed, tag).generate_state(1)[0])


def evaluate_policy(spec: EnvSpec, policy: SquashedGaussianPolicy, episodes: int,
                    eval_seed: int):
    """Deterministic-policy rollouts with consecutive episode seeds."""
    returns = np.zeros(episodes)
    for e in range(episodes):
        state = env_reset(spec, eval_seed + e)
        total = 0.0
        while True:
            action = pol.deterministic_action(policy, observe(spec, state))
            state, reward, done = env_step(spec, state, action)
            total += reward
            if done or is_truncated(spec, state):
                break
        returns[e] = total
    return float(returns.mean()), float(returns.std())


def random_policy_return(spec: EnvSpec, episodes: int, eval_seed: int,
                         rng: np.random.Generator) -> float:
    returns = np.zeros(episodes)
    for e in range(episodes):
        state = env_reset(spec, eval_seed + e)
        total = 0.0
        while True:
            action = rng.uniform(-1.0, 1.0, size=spec.act_dim)
            state, reward, done = env_step(spec, state, action)
            total += reward
            if done or is_truncated(spec, state):
                break
        returns[e] = total
    return float(returns.mean())


def collect_policy_rollouts(spec: EnvSpec, policy: SquashedGaussianPolicy, n_steps: int,
                            rng: np.random.Generator, env_seed_base: int) -> TransitionBatch:
    """Exactly n_steps transitions from stochastic policy rollouts."""
    batch = _empty_batch(n_steps, spec)
    state = env_reset(spec, env_seed_base)
    episode = 0
    for i in range(n_steps):
        obs = observe(spec, state)
        action, _ = pol.sample_action(policy, obs, rng)
        next_state, reward, done = env_step(spec, state, action)
        truncated = (not done) and is_truncated(spec, next_state)
        _store(batch, i, obs, action, reward, observe(spec, next_state), done, truncated)
        if done or truncated:
            episode += 1
            state = env_reset(spec, env_seed_base + episode)
        else:
            state = next_state
    return batch


def _empty_batch(n: int, spec: EnvSpec) -> TransitionBatch:
    return TransitionBatch(
        obs=np.zeros((n, spec.obs_dim), np.float32),
        actions=np.zeros((n, spec.act_dim), np.float32),
        rewards=np.zeros(n, np.float32),
        next_obs=np.zeros((n, spec.obs_dim), np.float32),
        dones=np.zeros(n, bool),
        truncateds=np.zeros(n, bool),
    )


def _store(batch, i, obs, action, reward, next_obs, done, truncated):
    batch.obs[i] = obs
    batch.actions[i] = np.clip(action, -1.0, 1.0)
    batch.rewards[i] = reward
    batch.next_obs[i] = next_obs
    batch.dones[i] = done
    batch.truncateds[i] = truncated


def _snapshot_policy(policy: SquashedGaussianPolicy) -> SquashedGaussianPolicy:
    return SquashedGaussianPolicy(nets.clone_mlp(policy.trunk), policy.act_dim)


@dataclass
class ReferencePolicies:
    spec: EnvSpec
    seed: int
    medium_policy: SquashedGaussianPolicy
    expert_policy: SquashedGaussianPolicy
    medium_return: float
    expert_return: float
    random_return: float
    random_ref_score: float
    expert_ref_score: float
    replay_trace: TransitionBatch
    medium_step: int


def train_reference_policies(spec: EnvSpec, seed: int, total_steps: int | None = None,
                             hidden_dims=REF_HIDDEN_DIMS) -> ReferencePolicies:
    """Train soft actor-critic (two critics, min targets, no conservative term)
    from scratch; pick expert and medium checkpoints by evaluation return."""
    total_steps = total_steps or REF_TOTAL_STEPS[spec.env_id]
    config = AgentConfig(
        obs_dim=spec.obs_dim,
        act_dim=spec.act_dim,
        hidden_dims=tuple(hidden_dims),
        ensemble_size=2,
        policy_lr=3e-4,
        critic_lr=1e-3,
        alpha_lr=3e-4,
        batch_size=128,
        target_strategy="MinQ",
        exploration="None",
    )
    agent = Agent(config, derived_int(seed, "ref-agent"), phase="online")
    buffer = ReplayBuffer(total_steps, spec.obs_dim, spec.act_dim, config.ensemble_size)
    rng_batch = derived_rng(seed, "ref-batch")
    rng_mask = derived_rng(seed, "ref-mask")
    rng_act = derived_rng(seed, "ref-act")
    env_seed_base = derived_int(seed, "ref-env") % (2**31)
    eval_seed = derived_int(seed, "ref-eval") % (2**31)

    trace = _empty_batch(total_steps, spec)
    checkpoints = []  # (step, eval_return, policy snapshot)
    state = env_reset(spec, env_seed_base)
    episode = 0
    for step in range(1, total_steps + 1):
        obs = observe(spec, state)
        if step <= REF_RANDOM_ACTION_STEPS:
            action = rng_act.uniform(-1.0, 1.0, size=spec.act_dim).astype(np.float32)
        else:
            action, _ = pol.sample_action(agent.policy, obs, rng_act)
        next_state, reward, done = env_step(spec, state, action)
        truncated = (not done) and is_truncated(spec, next_state)
        next_obs = observe(spec, next_state)
        _store(trace, step - 1, obs, action, reward, next_obs, done, truncated)
        buffer.push(TransitionRecord(obs, np.clip(action, -1, 1), reward, next_obs, done, truncated), rng_mask)
        if done or truncated:
            episode += 1
            state = env_reset(spec, env_seed_base + episode)
        else:
            state = next_state
        if len(buffer) >= max(config.batch_size, REF_RANDOM_ACTION_STEPS):
            batch, masks = buffer.sample_uniform(config.batch_size, rng_batch)
            agent.update_critics(batch, masks)
            _, mean_log_prob = agent.update_actor(batch.obs)
            agent.update_temperature(mean_log_prob)
        if step % REF_CKPT_INTERVAL == 0:
            ret, _ = evaluate_policy(spec, agent.policy, REF_CKPT_EVAL_EPISODES, eval_seed)
            checkpoints.append((step, ret, _snapshot_policy(agent.policy)))

    random_return = random_policy_return(
        spec, REF_SCORE_EPISODES, eval_seed, derived_rng(seed, "ref-random")
    )
    best_step, _, expert_policy = max(checkpoints, key=lambda c: c[1])
    expert_return, _ = evaluate_policy(spec, expert_policy, REF_SELECT_EVAL_EPISODES, eval_seed)
    if expert_return < random_return + REF_MIN_IMPROVEMENT * abs(random_return):
        raise GenerationError(
            f"reference training failed: expert return {expert_return:.1f} is not "
            f"{REF_MIN_IMPROVEMENT:.0%} of |random| above random return {random_return:.1f}"
        )
    midpoint = random_return + 0.5 * (expert_return - random_return)
    med_step, _, medium_policy = min(checkpoints, key=lambda c: abs(c[1] - midpoint))
    medium_return, _ = evaluate_policy(spec, medium_policy, REF_SELECT_EVAL_EPISODES, eval_seed)

    expert_ref, _ = evaluate_policy(spec, expert_policy, REF_SCORE_EPISODES, eval_seed)
    if not expert_ref > random_return:
        raise GenerationError("reference scores are degenerate (expert <= random)")
    return ReferencePolicies(
        spec=spec,
        seed=seed,
        medium_policy=medium_policy,
        expert_policy=expert_policy,
        medium_return=medium_return,
        expert_return=expert_return,
        random_return=random_return,
        random_ref_score=random_return,
        expert_ref_score=expert_ref,
        replay_trace=trace.slice(slice(0, med_step)),
        medium_step=med_step,
    )


def generate_dataset(kind: str, spec: EnvSpec, seed: int, size: int,
                     refs: ReferencePolicies | None = None) -> Dataset:
    """Build one offline dataset; trains reference policies when not supplied."""
    if refs is None:
        refs = train_reference_policies(spec, seed)
    if refs.spec.env_id != spec.env_id:
        raise ConfigError("reference policies were trained on a different env")
    if kind == "medium":
        if size < 1:
            raise ConfigError("size must be positive")
        records = collect_policy_rollouts(
            spec, refs.medium_policy, size, derived_rng(seed, "data-medium"),
            derived_int(seed, "data-medium-env") % (2**31),
        )
    elif kind == "medium_replay":
        records = refs.replay_trace  # verbatim; the size argument does not apply
    elif kind == "medium_expert":
        if size < 2 or size % 2 != 0:
            raise ConfigError("medium_expert size must be a positive even number")
        half = size // 2
        med = collect_policy_rollouts(
            spec, refs.medium_policy, half, derived_rng(seed, "data-me-medium"),
            derived_int(seed, "data-me-medium-env") % (2**31),
        )
        exp = collect_policy_rollouts(
            spec, refs.expert_policy, half, derived_rng(seed, "data-me-expert"),
            derived_int(seed, "data-me-expert-env") % (2**31),
        )
        records = concat_batches([med, exp])
    else:
        raise ConfigError(f"unknown dataset kind {kind!r}")
    header = DatasetHeader(
        env_id=spec.env_id,
        dataset_kind=kind,
        record_count=len(records),
        random_ref_score=refs.random_ref_score,
        expert_ref_score=refs.expert_ref_score,
        generator_seed=seed,
    )
    return Dataset(header, records)
