"""Desk-scale offline-to-online reinforcement-learning laboratory.

Pessimistic Q-ensemble pre-training on fixed datasets, a conservative-term-
free handoff to online fine-tuning with loosened ensemble targets and
optimistic exploration, plus the diagnostics to analyze stability and
sample efficiency of the transition.
"""

from .agent import Agent, AgentConfig, QEnsemble, reduce_target, sunrise_weight, td_target
from .dataset import Dataset, DatasetHeader, TransitionRecord, load_dataset, normalized_score, save_dataset
from .datagen import generate_dataset, train_reference_policies
from .envs import EnvSpec, env_reset, env_step, make_spec, observe
from .nets import AdamState, Mlp, adam_step, backward, forward, grad_check, polyak_update
from .pipeline import RunConfig, evaluate, run_experiment, train_offline, train_online
from .policy import SquashedGaussianPolicy, sample_action
from .replay import ReplayBuffer

__version__ = "0.1.0"

__all__ = [
    "Agent", "AgentConfig", "QEnsemble", "reduce_target", "sunrise_weight", "td_target",
    "Dataset", "DatasetHeader", "TransitionRecord", "load_dataset", "normalized_score",
    "save_dataset", "generate_dataset", "train_reference_policies",
    "EnvSpec", "env_reset", "env_step", "make_spec", "observe",
    "AdamState", "Mlp", "adam_step", "backward", "forward", "grad_check", "polyak_update",
    "RunConfig", "evaluate", "run_experiment", "train_offline", "train_online",
    "SquashedGaussianPolicy", "sample_action", "ReplayBuffer",
    "__version__",
]
