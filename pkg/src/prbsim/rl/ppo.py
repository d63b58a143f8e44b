"""PPO with GAE for the numpy actor-critic."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import NumericError
from .nn import Adam, PolicyNet, gaussian_entropy, gaussian_log_prob

__all__ = ["PpoConfig", "Rollout", "NonFiniteLoss", "gae_advantages", "ppo_loss_and_grads", "ppo_update"]


class NonFiniteLoss(NumericError):
    pass


@dataclass(frozen=True)
class PpoConfig:
    gamma: float = 0.99
    lam: float = 0.95
    clip: float = 0.2
    epochs: int = 4
    minibatch: int = 64
    lr: float = 3e-4
    ent_coef: float = 0.01
    vf_coef: float = 0.5
    max_grad_norm: float = 0.5
    target_kl: float = 0.03
    horizon: int = 256
    episode_len: int = 512
    iterations: int = 100
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lam must lie in [0, 1]")
        if not self.clip > 0:
            raise ValueError("clip must be positive")
        if self.epochs < 1 or self.minibatch < 1 or self.horizon < 1 or self.episode_len < 1:
            raise ValueError("epochs, minibatch, horizon and episode_len must be >= 1")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if not self.lr > 0:
            raise ValueError("lr must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Rollout:
    obs: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray

    def __len__(self):
        return self.obs.shape[0]


def gae_advantages(rewards, values, gamma: float, lam: float, dones=None, next_values=None):
    """Generalized advantage estimation.

    ``values`` has one more entry than ``rewards``: the value of the state
    after the last step. ``dones[t]`` cuts the trace after step ``t``; for such
    steps the bootstrap value is ``next_values[t]`` when given (time-limit
    truncation) and zero otherwise. Returns ``(advantages, returns)``.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    n = rewards.size
    if values.size != n + 1:
        raise ValueError("values must have len(rewards) + 1 entries")
    dones = np.zeros(n, dtype=bool) if dones is None else np.asarray(dones, dtype=bool)
    boot = values[1:].copy()
    if next_values is not None:
        nv = np.asarray(next_values, dtype=np.float64)
        boot[dones] = nv[dones]
    elif dones.any():
        boot[dones] = 0.0
    adv = np.zeros(n)
    last = 0.0
    for t in range(n - 1, -1, -1):
        delta = rewards[t] + gamma * boot[t] - values[t]
        carry = 0.0 if dones[t] else last
        last = delta + gamma * lam * carry
        adv[t] = last
    return adv, adv + values[:n]


def ppo_loss_and_grads(net: PolicyNet, obs, actions, logp_old, adv, returns, cfg: PpoConfig):
    """Clipped-surrogate PPO loss on one minibatch and its parameter gradients."""
    n = obs.shape[0]
    mean, log_std, value, cache = net.forward(obs)
    std_inv = np.exp(-log_std)
    logp = gaussian_log_prob(actions, mean, log_std)
    ratio = np.exp(logp - logp_old)
    clipped = np.clip(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip)
    surr = np.minimum(ratio * adv, clipped * adv)
    policy_loss = -surr.mean()
    value_err = value - returns
    value_loss = 0.5 * np.mean(value_err**2)
    entropy = gaussian_entropy(log_std)
    loss = policy_loss + cfg.vf_coef * value_loss - cfg.ent_coef * entropy

    # the surrogate has zero slope where the clipped branch is selected and clipping is active
    active = ~(((adv > 0) & (ratio > 1.0 + cfg.clip)) | ((adv < 0) & (ratio < 1.0 - cfg.clip)))
    d_logp = -(adv * ratio * active) / n
    z = (actions - mean) * std_inv
    d_mean = d_logp[:, None] * z * std_inv
    d_log_std = (d_logp[:, None] * (z * z - 1.0)).sum(axis=0) - cfg.ent_coef
    d_value = cfg.vf_coef * value_err / n
    grads = net.backward(cache, d_mean, d_value, d_log_std)
    log_ratio = logp - logp_old
    stats = {
        "loss": float(loss),
        "policy_loss": float(policy_loss),
        "value_loss": float(value_loss),
        "entropy": float(entropy),
        "kl": float(np.mean(ratio - 1.0 - log_ratio)),
        "clipfrac": float(np.mean(np.abs(ratio - 1.0) > cfg.clip)),
    }
    return loss, grads, stats


def _clip_grads(grads: dict, max_norm: float) -> float:
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if max_norm and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for k in grads:
            grads[k] = grads[k] * scale
    return norm


def ppo_update(net: PolicyNet, opt: Adam, rollout: Rollout, cfg: PpoConfig, rng: np.random.Generator) -> dict:
    """Run the PPO epochs on one rollout; returns averaged statistics.

    Stops early once the approximate KL of a minibatch exceeds
    ``cfg.target_kl``. On a non-finite loss the network and optimizer are
    restored and ``NonFiniteLoss`` is raised.
    """
    n = len(rollout)
    if n == 0:
        raise ValueError("empty rollout")
    adv = rollout.advantages
    if n > 1:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    backup = net.copy_params()
    opt_backup = opt.state()
    acc = {"policy_loss": [], "value_loss": [], "entropy": [], "kl": [], "clipfrac": []}
    epochs_run = 0
    stop = False
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, cfg.minibatch):
            idx = perm[start : start + cfg.minibatch]
            loss, grads, st = ppo_loss_and_grads(
                net, rollout.obs[idx], rollout.actions[idx], rollout.log_probs[idx],
                adv[idx], rollout.returns[idx], cfg,
            )
            if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                net.load_params(backup)
                opt.load_state(opt_backup)
                raise NonFiniteLoss("non-finite PPO loss; update rolled back")
            _clip_grads(grads, cfg.max_grad_norm)
            opt.step(net.params, grads)
            for k in acc:
                acc[k].append(st[k])
            if cfg.target_kl and st["kl"] > cfg.target_kl:
                stop = True
                break
        epochs_run += 1
        if stop:
            break
    out = {k: float(np.mean(v)) for k, v in acc.items()}
    out["epochs"] = epochs_run
    return out
