"""Observation builders, numpy actor-critic, PPO and the training curriculum."""

from .curriculum import (
    Agent,
    MissingCheckpoint,
    PolicyPair,
    TrainingLog,
    ValidationConfig,
    collect_rollout,
    greedy_decision,
    load_checkpoint,
    run_curriculum,
    save_checkpoint,
    train_power_only,
    validate,
)
from .nn import Adam, PolicyNet, ShapeMismatch
from .ppo import NonFiniteLoss, PpoConfig, Rollout, gae_advantages, ppo_loss_and_grads, ppo_update


def build_obs_prb(env):
    """PRB-agent observation for the env's current slot."""
    return env.obs_prb()


def build_obs_pow(env, x):
    """Power-agent observation, built after the PRB map ``x`` is resolved."""
    return env.obs_pow(x)


__all__ = [
    "Adam",
    "Agent",
    "MissingCheckpoint",
    "NonFiniteLoss",
    "PolicyNet",
    "PolicyPair",
    "PpoConfig",
    "Rollout",
    "ShapeMismatch",
    "TrainingLog",
    "ValidationConfig",
    "build_obs_pow",
    "build_obs_prb",
    "collect_rollout",
    "gae_advantages",
    "greedy_decision",
    "load_checkpoint",
    "ppo_loss_and_grads",
    "ppo_update",
    "run_curriculum",
    "save_checkpoint",
    "train_power_only",
    "validate",
]
