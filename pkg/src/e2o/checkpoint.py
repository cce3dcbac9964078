"""Agent checkpoint container ("E2OC").

Bundles per-network weight snapshots, optimizer moments, the entropy
temperature, the full agent configuration (as key = value text), a structural
config hash, and a phase tag. Sections are written in a fixed order so
save -> load -> save is byte-identical.
"""

from __future__ import annotations

import struct
from dataclasses import fields

import numpy as np

from . import nets
from .agent import Agent, AgentConfig, structural_hash
from .envs import ENV_CODES, ENV_IDS
from .errors import ConfigError, FormatError

CHECKPOINT_MAGIC = b"E2OC"
CHECKPOINT_VERSION = 1

PHASE_CODES = {"offline": 0, "online": 1}
PHASE_NAMES = {v: k for k, v in PHASE_CODES.items()}

_ADAM_FMT = "<ddddQQ"  # lr, beta1, beta2, epsilon, step_count, n_params


def agent_config_to_text(config: AgentConfig) -> str:
    lines = []
    for f in fields(AgentConfig):
        v = getattr(config, f.name)
        if f.name == "hidden_dims":
            v = ",".join(str(h) for h in v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


def agent_config_from_text(text: str) -> AgentConfig:
    kwargs = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        kwargs[key] = value
    types = {f.name: f.type for f in fields(AgentConfig)}
    out = {}
    for key, value in kwargs.items():
        if key not in types:
            raise ConfigError(f"unknown agent config key {key!r}")
        if key == "hidden_dims":
            out[key] = tuple(int(x) for x in value.split(",") if x)
        elif key == "target_entropy":
            out[key] = None if value == "None" else float(value)
        elif key in ("obs_dim", "act_dim", "ensemble_size", "batch_size",
                     "cql_num_sampled_actions", "ucb_num_candidates", "updates_per_env_step"):
            out[key] = int(value)
        elif key in ("target_strategy", "exploration"):
            out[key] = value
        else:
            out[key] = float(value)
    return AgentConfig(**out)


def _adam_to_bytes(state: nets.AdamState) -> bytes:
    head = struct.pack(
        _ADAM_FMT, state.learning_rate, state.beta1, state.beta2, state.epsilon,
        state.step_count, state.first_moment.size,
    )
    return head + state.first_moment.astype("<f4").tobytes() + state.second_moment.astype("<f4").tobytes()


def _adam_from_bytes(buf: bytes) -> nets.AdamState:
    lr, b1, b2, eps, step, n = struct.unpack_from(_ADAM_FMT, buf, 0)
    off = struct.calcsize(_ADAM_FMT)
    if len(buf) != off + 8 * n:
        raise FormatError("optimizer section has wrong length")
    m = np.frombuffer(buf, "<f4", count=n, offset=off).copy()
    v = np.frombuffer(buf, "<f4", count=n, offset=off + 4 * n).copy()
    return nets.AdamState(m, v, int(step), lr, b1, b2, eps)


def _sections(agent: Agent):
    """Fixed-order (name, payload) list."""
    out = [("config", agent_config_to_text(agent.config).encode())]
    out.append(("policy", nets.weights_to_bytes(agent.policy.trunk)))
    for k, net in enumerate(agent.ensemble.online_nets):
        out.append((f"critic_{k}", nets.weights_to_bytes(net)))
    for k, net in enumerate(agent.ensemble.target_nets):
        out.append((f"target_{k}", nets.weights_to_bytes(net)))
    out.append(("opt_policy", _adam_to_bytes(agent.policy_opt)))
    for k, opt in enumerate(agent.critic_opts):
        out.append((f"opt_critic_{k}", _adam_to_bytes(opt)))
    out.append(("opt_alpha", _adam_to_bytes(agent.alpha_opt)))
    return out


def checkpoint_to_bytes(agent: Agent, env_id: str) -> bytes:
    if env_id not in ENV_IDS:
        raise ConfigError(f"unknown env_id {env_id!r}")
    sections = _sections(agent)
    parts = [
        CHECKPOINT_MAGIC,
        struct.pack(
            "<IBIId", CHECKPOINT_VERSION, PHASE_CODES[agent.phase], ENV_CODES[env_id],
            agent.config.ensemble_size, agent.log_alpha,
        ),
        structural_hash(agent.config),
        struct.pack("<I", len(sections)),
    ]
    for name, payload in sections:
        raw = name.encode()
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<Q", len(payload)))
        parts.append(payload)
    return b"".join(parts)


def save_checkpoint(agent: Agent, path, env_id: str) -> None:
    with open(path, "wb") as f:
        f.write(checkpoint_to_bytes(agent, env_id))


def _parse_container(buf: bytes):
    if buf[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"bad magic {buf[:4]!r}, expected {CHECKPOINT_MAGIC!r}")
    version, phase_code, env_code, n_critics, log_alpha = struct.unpack_from("<IBIId", buf, 4)
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    if phase_code not in PHASE_NAMES or env_code >= len(ENV_IDS):
        raise FormatError("unknown phase or env code")
    off = 4 + struct.calcsize("<IBIId")
    config_hash = buf[off : off + 32]
    off += 32
    (n_sections,) = struct.unpack_from("<I", buf, off)
    off += 4
    sections = {}
    for _ in range(n_sections):
        (name_len,) = struct.unpack_from("<H", buf, off)
        off += 2
        name = buf[off : off + name_len].decode()
        off += name_len
        (payload_len,) = struct.unpack_from("<Q", buf, off)
        off += 8
        sections[name] = buf[off : off + payload_len]
        off += payload_len
    if off != len(buf):
        raise FormatError("trailing bytes after last checkpoint section")
    return PHASE_NAMES[phase_code], ENV_IDS[env_code], n_critics, log_alpha, config_hash, sections


def peek_phase(path) -> str:
    with open(path, "rb") as f:
        buf = f.read(4 + struct.calcsize("<IBIId"))
    if buf[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"bad magic {buf[:4]!r}, expected {CHECKPOINT_MAGIC!r}")
    _, phase_code, _, _, _ = struct.unpack_from("<IBIId", buf, 4)
    if phase_code not in PHASE_NAMES:
        raise FormatError(f"unknown phase code {phase_code}")
    return PHASE_NAMES[phase_code]


def load_checkpoint(path, expected_config: AgentConfig | None = None, seed: int = 0):
    """Rebuild an Agent from a checkpoint; returns (agent, env_id).

    When ``expected_config`` is given it must match the stored structural
    hash; a differing ensemble size is refused with a specific message.
    """
    with open(path, "rb") as f:
        buf = f.read()
    phase, env_id, n_critics, log_alpha, config_hash, sections = _parse_container(buf)
    config = agent_config_from_text(sections["config"].decode())
    if expected_config is not None:
        if expected_config.ensemble_size != n_critics:
            raise ConfigError(
                f"checkpoint has ensemble_size {n_critics}, "
                f"config expects {expected_config.ensemble_size}"
            )
        if structural_hash(expected_config) != config_hash:
            raise ConfigError("checkpoint config hash does not match the provided config")
        config = expected_config
    agent = Agent(config, seed, phase)
    agent.log_alpha = float(log_alpha)
    nets_and_names = [("policy", agent.policy.trunk)]
    nets_and_names += [(f"critic_{k}", n) for k, n in enumerate(agent.ensemble.online_nets)]
    nets_and_names += [(f"target_{k}", n) for k, n in enumerate(agent.ensemble.target_nets)]
    for name, net in nets_and_names:
        loaded = nets.mlp_from_bytes(sections[name], net.activations)
        if loaded.layer_dims != net.layer_dims:
            raise FormatError(f"section {name} has dims {loaded.layer_dims}, expected {net.layer_dims}")
        net.weights, net.biases = loaded.weights, loaded.biases
    agent.policy_opt = _adam_from_bytes(sections["opt_policy"])
    agent.critic_opts = [
        _adam_from_bytes(sections[f"opt_critic_{k}"]) for k in range(n_critics)
    ]
    agent.alpha_opt = _adam_from_bytes(sections["opt_alpha"])
    return agent, env_id
