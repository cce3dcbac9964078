"""Ensemble actor-critic agent with switchable conservatism and exploration.

One agent owns a tanh-Gaussian policy, N critics with Polyak-averaged target
copies, per-network Adam state, and an auto-tuned entropy temperature. The
pieces that distinguish the offline and online phases are all configuration:

* ``cql_alpha`` > 0 adds a conservative penalty (logsumexp over out-of-sample
  actions minus data-action Q) to each critic loss — offline phase only.
* ``target_strategy`` picks how the N target Q-values collapse to one number:
  MinQ, MeanQ, REM, RandomMinPair, or WeightedMinPair.
* ``sunrise_temperature`` > 0 down-weights TD errors on transitions whose
  target ensemble disagrees (w = sigmoid(-std*T) + 0.5).
* ``exploration`` selects the online action-sampling mechanism.

The actor objective reduces the ensemble with min offline and mean online.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from . import nets, policy as pol
from .dataset import Dataset, TransitionBatch
from .errors import ConfigError, DiagnosticError
from .nets import AdamState, Mlp
from .policy import SquashedGaussianPolicy

TARGET_STRATEGIES = ("MinQ", "MeanQ", "REM", "RandomMinPair", "WeightedMinPair")
EXPLORATION_MODES = ("None", "BootstrappedHeads", "OAC", "SUNRISE_UCB")

DISTANCE_HIST_BINS = 50


@dataclass
class AgentConfig:
    obs_dim: int
    act_dim: int
    hidden_dims: tuple[int, ...] = (256, 256)
    ensemble_size: int = 10
    gamma: float = 0.99
    tau: float = 0.005
    policy_lr: float = 3e-5
    critic_lr: float = 3e-4
    alpha_lr: float = 1e-4
    batch_size: int = 256
    target_entropy: float | None = None  # -act_dim when unset
    init_alpha: float = 0.2
    cql_alpha: float = 0.0
    cql_num_sampled_actions: int = 10
    target_strategy: str = "MinQ"
    exploration: str = "None"
    sunrise_temperature: float = 0.0
    ucb_lambda: float = 1.0
    ucb_num_candidates: int = 10
    oac_delta: float = 2.0
    updates_per_env_step: int = 1
    grad_clip: float = 0.0  # 0 disables clipping
    reward_scale: float = 1.0  # rewards are multiplied by this inside TD targets only

    def __post_init__(self) -> None:
        self.hidden_dims = tuple(int(h) for h in self.hidden_dims)
        if self.obs_dim < 1 or self.act_dim < 1:
            raise ConfigError("obs_dim and act_dim must be positive")
        if self.ensemble_size < 2:
            raise ConfigError(f"ensemble_size must be >= 2, got {self.ensemble_size}")
        if not (0.0 < self.gamma < 1.0):
            raise ConfigError(f"gamma must lie in (0,1), got {self.gamma}")
        if not (0.0 < self.tau <= 1.0):
            raise ConfigError(f"tau must lie in (0,1], got {self.tau}")
        for name in ("policy_lr", "critic_lr", "alpha_lr", "init_alpha", "reward_scale"):
            if not (getattr(self, name) > 0):
                raise ConfigError(f"{name} must be positive")
        if self.batch_size < 1 or self.cql_num_sampled_actions < 1:
            raise ConfigError("batch_size and cql_num_sampled_actions must be positive")
        if self.cql_alpha < 0 or self.sunrise_temperature < 0 or self.ucb_lambda < 0:
            raise ConfigError("cql_alpha, sunrise_temperature and ucb_lambda must be >= 0")
        if self.oac_delta < 0:
            raise ConfigError("oac_delta must be >= 0")
        if self.ucb_num_candidates < 1 or self.updates_per_env_step < 1:
            raise ConfigError("ucb_num_candidates and updates_per_env_step must be positive")
        if self.target_strategy not in TARGET_STRATEGIES:
            raise ConfigError(
                f"unknown target_strategy {self.target_strategy!r}, "
                f"expected one of {TARGET_STRATEGIES}"
            )
        if self.exploration not in EXPLORATION_MODES:
            raise ConfigError(
                f"unknown exploration {self.exploration!r}, expected one of {EXPLORATION_MODES}"
            )

    @property
    def resolved_target_entropy(self) -> float:
        return float(-self.act_dim) if self.target_entropy is None else float(self.target_entropy)


def structural_hash(config: AgentConfig) -> bytes:
    """Hash of the fields that must match for a checkpoint to be loadable."""
    text = (
        f"obs_dim={config.obs_dim};act_dim={config.act_dim};"
        f"hidden_dims={config.hidden_dims};ensemble_size={config.ensemble_size}"
    )
    return hashlib.sha256(text.encode()).digest()


@dataclass
class QEnsemble:
    """N critics mapping (obs ⊕ action) -> scalar, plus N target copies."""

    online_nets: list[Mlp]
    target_nets: list[Mlp]

    def __post_init__(self) -> None:
        if len(self.online_nets) != len(self.target_nets):
            raise ConfigError("online and target ensembles must have equal size")
        for on, tn in zip(self.online_nets, self.target_nets):
            if on.layer_dims != tn.layer_dims:
                raise ConfigError("online/target network shapes differ")

    @property
    def size(self) -> int:
        return len(self.online_nets)


def ensemble_init(obs_dim: int, act_dim: int, hidden_dims, n: int,
                  rng: np.random.Generator) -> QEnsemble:
    dims = (obs_dim + act_dim, *hidden_dims, 1)
    online = [nets.mlp_init(dims, rng) for _ in range(n)]
    target = [nets.clone_mlp(net) for net in online]
    return QEnsemble(online, target)


def ensemble_q(net_list, obs: np.ndarray, actions: np.ndarray, params_list=None) -> np.ndarray:
    """Stacked Q-values, shape (N, B); evaluation order fixed by critic index."""
    x = np.concatenate([obs, actions], axis=1)
    out = [
        nets.forward(net, x, None if params_list is None else params_list[k])[:, 0]
        for k, net in enumerate(net_list)
    ]
    return np.stack(out, axis=0)


# --- target reduction --------------------------------------------------------


def _check_reducible(q: np.ndarray, strategy: str) -> None:
    if strategy not in TARGET_STRATEGIES:
        raise ConfigError(f"unknown target_strategy {strategy!r}")
    if q.shape[0] < 2:
        raise ConfigError(f"target reduction needs an ensemble of >= 2, got {q.shape[0]}")
    if not np.all(np.isfinite(q)):
        raise DiagnosticError("non-finite Q-values passed to reduce_target")


def weighted_min_pair(q: np.ndarray) -> np.ndarray:
    """Average of min(q_i, q_j) over all unordered pairs, in fixed (i<j) order."""
    n = q.shape[0]
    acc = np.zeros_like(q[0])
    for i in range(n):
        for j in range(i + 1, n):
            acc = acc + np.minimum(q[i], q[j])
    return acc / (n * (n - 1) // 2)


def reduce_target_batch(q: np.ndarray, strategy: str, rng: np.random.Generator | None = None) -> np.ndarray:
    """Collapse (N, B) ensemble values to (B,) targets.

    REM draws one convex-combination weight vector per call and RandomMinPair
    one critic pair per call, i.e. per update step.
    """
    _check_reducible(q, strategy)
    n = q.shape[0]
    if strategy == "MinQ":
        return q.min(axis=0)
    if strategy == "MeanQ":
        return q.mean(axis=0)
    if strategy == "WeightedMinPair":
        return weighted_min_pair(q)
    if rng is None:
        raise ConfigError(f"{strategy} requires an rng")
    if strategy == "REM":
        w = rng.uniform(0.0, 1.0, size=n)
        w = (w / w.sum()).astype(q.dtype)
        return w @ q
    # RandomMinPair: uniform unordered pair
    i = int(rng.integers(n))
    j = int(rng.integers(n - 1))
    if j >= i:
        j += 1
    return np.minimum(q[i], q[j])


def reduce_target(q_values, strategy: str, rng: np.random.Generator | None = None) -> float:
    """Scalar form of :func:`reduce_target_batch` for a single q-vector."""
    q = np.asarray(q_values)
    return float(reduce_target_batch(q[:, None], strategy, rng)[0])


def td_target(reward: float, done: float, gamma: float, reduced_next_q: float,
              alpha: float, next_log_prob: float) -> float:
    """reward + (1-done) * gamma * (reduced_next_q - alpha * next_log_prob)."""
    return float(reward + (1.0 - done) * gamma * (reduced_next_q - alpha * next_log_prob))


def sunrise_weight(next_q_std, temperature: float):
    """Uncertainty weight in (0.5, 1.0], monotone non-increasing in the std."""
    std = np.asarray(next_q_std, dtype=np.float64)
    if np.any(std < 0):
        raise ConfigError("next_q_std must be >= 0")
    if temperature < 0:
        raise ConfigError("sunrise temperature must be >= 0")
    with np.errstate(over="ignore"):
        w = 1.0 / (1.0 + np.exp(std * temperature)) + 0.5
    return float(w) if w.ndim == 0 else w


# --- conservative penalty -----------------------------------------------------


def _logsumexp(z: np.ndarray, axis: int):
    """Max-subtracted logsumexp plus the softmax it implies."""
    zmax = z.max(axis=axis, keepdims=True)
    ez = np.exp(z - zmax)
    sez = ez.sum(axis=axis, keepdims=True)
    lse = np.squeeze(zmax + np.log(sez), axis=axis)
    return lse, ez / sez


def cql_proposals(policy: SquashedGaussianPolicy, obs: np.ndarray, m: int,
                  rng: np.random.Generator, include_policy: bool = True):
    """Out-of-sample action proposals and their log-densities.

    Uniform proposals have density 2^(-act_dim) on the action box; when
    ``include_policy`` is set, m actions sampled from the current policy (with
    their exact log-densities) are appended, for 2m proposals per state.
    """
    b, a = obs.shape[0], policy.act_dim
    unif = rng.uniform(-1.0, 1.0, size=(b, m, a)).astype(np.float32)
    log_unif = np.full((b, m), -a * np.log(2.0), dtype=np.float32)
    if not include_policy:
        return unif, log_unif
    eps = rng.standard_normal((b * m, a)).astype(np.float32)
    res = pol.sample(policy, np.repeat(obs, m, axis=0), eps)
    actions = np.concatenate([unif, res.action.reshape(b, m, a)], axis=1)
    log_q = np.concatenate([log_unif, res.log_prob.reshape(b, m).astype(np.float32)], axis=1)
    return actions, log_q


def cql_penalty(ensemble: QEnsemble, policy: SquashedGaussianPolicy, batch_obs: np.ndarray,
                batch_actions: np.ndarray, m: int, rng: np.random.Generator,
                include_policy: bool = True) -> np.ndarray:
    """Per-critic value of the conservative term (importance-sampled
    logsumexp over proposals minus mean data-action Q)."""
    if m < 1:
        raise ConfigError("cql_num_sampled_actions must be >= 1")
    prop_actions, prop_log_q = cql_proposals(policy, batch_obs, m, rng, include_policy)
    b, p, a = prop_actions.shape
    flat_obs = np.repeat(batch_obs, p, axis=0)
    flat_actions = prop_actions.reshape(b * p, a)
    out = np.zeros(ensemble.size)
    for k, net in enumerate(ensemble.online_nets):
        q_prop = nets.forward(net, np.concatenate([flat_obs, flat_actions], axis=1))[:, 0]
        q_data = nets.forward(net, np.concatenate([batch_obs, batch_actions], axis=1))[:, 0]
        z = q_prop.reshape(b, p) - prop_log_q
        lse, _ = _logsumexp(z, axis=1)
        lse = lse - np.log(p)
        if not np.all(np.isfinite(lse)):
            raise DiagnosticError("non-finite conservative penalty")
        out[k] = lse.mean() - q_data.mean()
    return out


# --- loss functions (shared by updates and gradient oracles) ------------------


class CriticLossResult(NamedTuple):
    loss: float
    grads: np.ndarray
    q_pred: np.ndarray
    cql_term: float


def critic_loss_and_grad(net: Mlp, obs, actions, targets, weights, mask,
                         cql_weight: float = 0.0, prop_actions=None, prop_log_q=None,
                         params: np.ndarray | None = None) -> CriticLossResult:
    """Weighted, masked squared TD error plus optional conservative penalty.

    All stochastic inputs (targets, weights, proposals) are taken as frozen
    arrays so the same function serves the Adam update and the
    finite-difference gradient oracle (pass a float64 ``params`` vector for
    the double-precision path).
    """
    dtype = np.float32 if params is None else params.dtype
    b = obs.shape[0]
    obs = obs.astype(dtype, copy=False)
    x = np.concatenate([obs, actions.astype(dtype, copy=False)], axis=1)
    n_prop = 0
    if cql_weight > 0.0:
        bp, p, a = prop_actions.shape
        n_prop = bp * p
        x_prop = np.concatenate(
            [np.repeat(obs, p, axis=0), prop_actions.reshape(n_prop, a).astype(dtype, copy=False)],
            axis=1,
        )
        x = np.concatenate([x, x_prop], axis=0)
    q_all, cache = nets.forward_cached(net, x, params)
    q_all = q_all[:, 0]
    q_pred = q_all[:b]
    diff = q_pred - targets.astype(dtype, copy=False)
    wm = (weights * mask).astype(dtype, copy=False)
    loss = float(np.mean(wm * diff * diff))
    upstream = np.empty((b + n_prop, 1), dtype=dtype)
    upstream[:b, 0] = 2.0 * wm * diff / b
    cql_term = 0.0
    if cql_weight > 0.0:
        z = q_all[b:].reshape(bp, p) - prop_log_q.astype(dtype, copy=False)
        lse, softmax = _logsumexp(z, axis=1)
        cql_term = float(np.mean(lse - np.log(p)) - q_pred.mean())
        loss += cql_weight * cql_term
        upstream[:b, 0] += -cql_weight / b
        upstream[b:, 0] = (cql_weight / b) * softmax.reshape(n_prop)
    if not np.isfinite(loss):
        raise DiagnosticError(
            f"non-finite critic loss (q_pred range [{q_pred.min()}, {q_pred.max()}])"
        )
    grads, _ = nets.backward_from_cache(net, cache, upstream, params)
    return CriticLossResult(loss, grads, q_pred, cql_term)


class ActorLossResult(NamedTuple):
    loss: float
    grads: np.ndarray
    mean_log_prob: float


def actor_loss_and_grad(policy: SquashedGaussianPolicy, critic_nets, obs, eps,
                        alpha: float, rho: str, params: np.ndarray | None = None,
                        critic_params=None) -> ActorLossResult:
    """mean(alpha * log_pi - rho(Q_1..Q_N)) under frozen reparameterization noise.

    ``rho`` is "min" (pessimistic, offline) or "mean" (online). Critic
    parameters are constants; gradients flow through the sampled action and
    the log-density only.
    """
    if rho not in ("min", "mean"):
        raise ConfigError(f"unknown actor reduction {rho!r}")
    dtype = np.float32 if params is None else params.dtype
    b = obs.shape[0]
    obs = obs.astype(dtype, copy=False)
    res = pol.sample(policy, obs, eps, params)
    x = np.concatenate([obs, res.action], axis=1)
    n = len(critic_nets)
    q = np.empty((n, b), dtype=dtype)
    caches = []
    for k, net in enumerate(critic_nets):
        cp = None if critic_params is None else critic_params[k]
        out, cache = nets.forward_cached(net, x, cp)
        q[k] = out[:, 0]
        caches.append(cache)
    if rho == "min":
        sel = q.argmin(axis=0)
        q_hat = q[sel, np.arange(b)]
    else:
        q_hat = q.mean(axis=0)
    loss = float(np.mean(alpha * res.log_prob - q_hat))
    obs_dim = obs.shape[1]
    d_action = np.zeros_like(res.action)
    for k, net in enumerate(critic_nets):
        upstream = np.zeros((b, 1), dtype=dtype)
        if rho == "min":
            rows = sel == k
            if not rows.any():
                continue
            upstream[rows, 0] = -1.0 / b
        else:
            upstream[:, 0] = -1.0 / (n * b)
        cp = None if critic_params is None else critic_params[k]
        in_grad = nets.input_backward_from_cache(net, caches[k], upstream, cp)
        d_action += in_grad[:, obs_dim:]
    d_log_prob = np.full(b, alpha / b, dtype=dtype)
    grads = pol.sample_backward(policy, res.cache, d_action, d_log_prob, params)
    return ActorLossResult(loss, grads, float(res.log_prob.mean()))


# --- the agent -----------------------------------------------------------------


class CriticStats(NamedTuple):
    loss_per_critic: np.ndarray
    q_mean: float
    q_std_mean: float
    q_min: float
    q_max: float
    cql_penalty_mean: float


class Agent:
    """Bundles policy, critic ensemble, optimizers and temperature for one phase."""

    def __init__(self, config: AgentConfig, seed: int, phase: str = "offline"):
        if phase not in ("offline", "online"):
            raise ConfigError(f"phase must be offline or online, got {phase!r}")
        self.config = config
        self.phase = phase
        ss = np.random.SeedSequence(seed)
        init_rng, self.rng_policy, self.rng_reduce, self.rng_cql, self.rng_explore = [
            np.random.default_rng(c) for c in ss.spawn(5)
        ]
        self.policy = pol.policy_init(config.obs_dim, config.act_dim, config.hidden_dims, init_rng)
        self.ensemble = ensemble_init(
            config.obs_dim, config.act_dim, config.hidden_dims, config.ensemble_size, init_rng
        )
        self.log_alpha = float(np.log(config.init_alpha))
        self.policy_opt = nets.adam_init(nets.param_count(self.policy.trunk), config.policy_lr)
        self.critic_opts = [
            nets.adam_init(nets.param_count(net), config.critic_lr)
            for net in self.ensemble.online_nets
        ]
        self.alpha_opt = nets.adam_init(1, config.alpha_lr)

    @property
    def alpha(self) -> float:
        return float(np.exp(self.log_alpha))

    @property
    def actor_reduction(self) -> str:
        return "min" if self.phase == "offline" else "mean"

    def reset_temperature(self) -> None:
        self.log_alpha = float(np.log(self.config.init_alpha))
        self.alpha_opt = nets.adam_init(1, self.config.alpha_lr)

    # -- updates ---------------------------------------------------------------

    def update_critics(self, batch: TransitionBatch, masks: np.ndarray | None = None,
                       rng: np.random.Generator | None = None) -> CriticStats:
        """One gradient step per critic toward the reduced ensemble target,
        then a Polyak update of every target copy."""
        cfg = self.config
        b = len(batch)
        if b < 1:
            raise ConfigError("batch must be nonempty")
        rng_policy = rng or self.rng_policy
        rng_reduce = rng or self.rng_reduce
        rng_cql = rng or self.rng_cql
        eps = rng_policy.standard_normal((b, cfg.act_dim)).astype(np.float32)
        nxt = pol.sample(self.policy, batch.next_obs, eps)
        q_next = ensemble_q(self.ensemble.target_nets, batch.next_obs, nxt.action)
        reduced = reduce_target_batch(q_next, cfg.target_strategy, rng_reduce)
        dones = batch.dones.astype(np.float32)
        y = cfg.reward_scale * batch.rewards + (1.0 - dones) * cfg.gamma * (
            reduced - self.alpha * nxt.log_prob
        )
        if cfg.sunrise_temperature > 0:
            weights = sunrise_weight(q_next.std(axis=0), cfg.sunrise_temperature).astype(np.float32)
        else:
            weights = np.ones(b, dtype=np.float32)
        if masks is None:
            masks = np.ones((b, cfg.ensemble_size), dtype=np.float32)
        use_cql = self.phase == "offline" and cfg.cql_alpha > 0
        prop_actions = prop_log_q = None
        if use_cql:
            prop_actions, prop_log_q = cql_proposals(
                self.policy, batch.obs, cfg.cql_num_sampled_actions, rng_cql
            )
        losses = np.zeros(cfg.ensemble_size)
        cql_terms = np.zeros(cfg.ensemble_size)
        q_preds = np.zeros((cfg.ensemble_size, b), dtype=np.float32)
        for k, net in enumerate(self.ensemble.online_nets):
            result = critic_loss_and_grad(
                net, batch.obs, batch.actions, y, weights, masks[:, k],
                cfg.cql_alpha if use_cql else 0.0, prop_actions, prop_log_q,
            )
            grads = result.grads
            if cfg.grad_clip > 0:
                grads = nets.clip_grad_norm(grads, cfg.grad_clip)
            new_params, self.critic_opts[k] = nets.adam_step(
                nets.get_params(net), grads, self.critic_opts[k]
            )
            nets.set_params(net, new_params)
            losses[k] = result.loss
            cql_terms[k] = result.cql_term
            q_preds[k] = result.q_pred
        for online, target in zip(self.ensemble.online_nets, self.ensemble.target_nets):
            nets.set_params(
                target, nets.polyak_update(nets.get_params(target), nets.get_params(online), cfg.tau)
            )
        return CriticStats(
            losses,
            float(q_preds.mean()),
            float(q_preds.std(axis=0).mean()),
            float(q_preds.min()),
            float(q_preds.max()),
            float(cql_terms.mean()),
        )

    def update_actor(self, batch_obs: np.ndarray, rng: np.random.Generator | None = None):
        """One policy gradient step; returns (actor_loss, mean log-prob)."""
        cfg = self.config
        rng = rng or self.rng_policy
        eps = rng.standard_normal((batch_obs.shape[0], cfg.act_dim)).astype(np.float32)
        result = actor_loss_and_grad(
            self.policy, self.ensemble.online_nets, batch_obs, eps, self.alpha,
            self.actor_reduction,
        )
        grads = result.grads
        if cfg.grad_clip > 0:
            grads = nets.clip_grad_norm(grads, cfg.grad_clip)
        new_params, self.policy_opt = nets.adam_step(
            nets.get_params(self.policy.trunk), grads, self.policy_opt
        )
        nets.set_params(self.policy.trunk, new_params)
        return result.loss, result.mean_log_prob

    def update_temperature(self, mean_log_prob: float) -> float:
        """Gradient step on log(alpha) toward the entropy target; returns alpha."""
        grad = np.array([-(mean_log_prob + self.config.resolved_target_entropy)], np.float32)
        new_log_alpha, self.alpha_opt = nets.adam_step(
            np.array([self.log_alpha], np.float32), grad, self.alpha_opt
        )
        self.log_alpha = float(new_log_alpha[0])
        return self.alpha

    # -- acting ------------------------------------------------------------------

    def eval_action(self, obs: np.ndarray) -> np.ndarray:
        return pol.deterministic_action(self.policy, obs)

    def select_exploration_action(self, obs: np.ndarray,
                                  rng: np.random.Generator | None = None,
                                  bootstrap_head: int | None = None) -> np.ndarray:
        """Online-phase action choice per the configured exploration mode."""
        cfg = self.config
        rng = rng or self.rng_explore
        mode = cfg.exploration
        if mode == "None":
            action, _ = pol.sample_action(self.policy, obs, rng)
            return action
        if mode == "SUNRISE_UCB":
            return self._ucb_action(obs, rng, cfg.ucb_lambda)
        if mode == "BootstrappedHeads":
            if bootstrap_head is None:
                raise ConfigError("BootstrappedHeads exploration needs a per-episode head index")
            return self._head_greedy_action(obs, rng, bootstrap_head)
        return self._oac_action(obs, rng)

    def _candidates(self, obs: np.ndarray, rng: np.random.Generator, k: int):
        if k < 1:
            raise ConfigError("ucb_num_candidates must be >= 1")
        tiled = np.tile(np.asarray(obs, np.float32), (k, 1))
        eps = rng.standard_normal((k, self.config.act_dim)).astype(np.float32)
        res = pol.sample(self.policy, tiled, eps)
        return tiled, res.action

    def _ucb_action(self, obs, rng, lam: float) -> np.ndarray:
        tiled, cand = self._candidates(obs, rng, self.config.ucb_num_candidates)
        q = ensemble_q(self.ensemble.online_nets, tiled, cand)
        score = q.mean(axis=0) + lam * q.std(axis=0)
        return cand[int(np.argmax(score))]  # argmax takes the lowest index on ties

    def _head_greedy_action(self, obs, rng, head: int) -> np.ndarray:
        tiled, cand = self._candidates(obs, rng, self.config.ucb_num_candidates)
        net = self.ensemble.online_nets[head % self.config.ensemble_size]
        q = nets.forward(net, np.concatenate([tiled, cand], axis=1))[:, 0]
        return cand[int(np.argmax(q))]

    def _oac_action(self, obs, rng) -> np.ndarray:
        """Shift the pre-squash mean along the upper-confidence-bound gradient,
        scaled so the KL from the unshifted Gaussian stays within oac_delta."""
        cfg = self.config
        obs2 = np.asarray(obs, np.float32)[None, :]
        mean, _, _, std, _ = pol.dist_params(self.policy, obs2)
        a0 = np.tanh(mean)
        x = np.concatenate([obs2, a0], axis=1)
        n = cfg.ensemble_size
        q = np.zeros(n)
        grads_a = np.zeros((n, cfg.act_dim))
        upstream = np.ones((1, 1), np.float32)
        for k, net in enumerate(self.ensemble.online_nets):
            out, cache = nets.forward_cached(net, x)
            q[k] = out[0, 0]
            g = nets.input_backward_from_cache(net, cache, upstream)
            grads_a[k] = g[0, cfg.obs_dim:]
        g_mean = grads_a.mean(axis=0)
        q_bar = q.mean()
        q_std = q.std()
        g_std = ((q[:, None] * grads_a).mean(axis=0) - q_bar * g_mean) / (q_std + 1e-8)
        g = g_mean + cfg.ucb_lambda * g_std
        var = std[0].astype(np.float64) ** 2
        denom = float(np.sqrt(np.sum(var * g * g)))
        shift = np.zeros(cfg.act_dim) if denom < 1e-12 else np.sqrt(2.0 * cfg.oac_delta) * var * g / denom
        eps = rng.standard_normal(cfg.act_dim)
        u = mean[0] + shift + std[0] * eps
        return np.tanh(u).astype(np.float32)


# --- dataset-vs-policy action distance ----------------------------------------


def distance_histogram(sq_dists: np.ndarray, act_dim: int):
    """Histogram over the fixed [0, 4*act_dim] squared-distance range."""
    edges = np.linspace(0.0, 4.0 * act_dim, DISTANCE_HIST_BINS + 1)
    counts, _ = np.histogram(sq_dists, bins=edges)
    return counts, edges


def action_distance(policy: SquashedGaussianPolicy | None, ds: Dataset, sample_size: int,
                    rng: np.random.Generator):
    """Mean squared distance between policy samples and dataset actions.

    ``policy=None`` uses a uniform-random reference policy. Returns
    (mean_sq_dist, (histogram counts, bin edges)).
    """
    rec = ds.records
    act_dim = rec.actions.shape[1]
    idx = rng.integers(0, len(rec), size=sample_size)
    obs = rec.obs[idx]
    a_data = rec.actions[idx]
    if policy is None:
        a_hat = rng.uniform(-1.0, 1.0, size=(sample_size, act_dim)).astype(np.float32)
    else:
        if policy.obs_dim != obs.shape[1] or policy.act_dim != act_dim:
            raise ConfigError("policy dims do not match dataset dims")
        eps = rng.standard_normal((sample_size, act_dim)).astype(np.float32)
        a_hat = pol.sample(policy, obs, eps).action
    sq = ((a_hat.astype(np.float64) - a_data) ** 2).sum(axis=1)
    counts, edges = distance_histogram(sq, act_dim)
    return float(sq.mean()), (counts, edges)
