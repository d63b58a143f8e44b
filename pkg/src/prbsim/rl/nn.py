"""Small numpy actor-critic MLP with hand-written reverse-mode gradients.

Architecture: ``obs -> tanh(128) -> tanh(128)`` shared trunk, a linear
Gaussian mean head, a state-independent log-std vector, and a linear value
head on the same trunk.
"""

from __future__ import annotations

import hashlib
import math

import numpy as np

__all__ = ["PolicyNet", "Adam", "ShapeMismatch", "gaussian_log_prob", "gaussian_entropy"]

_LOG_2PI = math.log(2.0 * math.pi)


class ShapeMismatch(ValueError):
    pass


def gaussian_log_prob(actions, mean, log_std):
    z = (actions - mean) * np.exp(-log_std)
    return -0.5 * np.sum(z * z, axis=-1) - np.sum(log_std) - 0.5 * mean.shape[-1] * _LOG_2PI


def gaussian_entropy(log_std) -> float:
    return float(np.sum(log_std) + 0.5 * log_std.size * (1.0 + _LOG_2PI))


class PolicyNet:
    """Gaussian policy and value function sharing one tanh trunk.

    Parameters live in ``self.params`` (name -> float64 array) so optimizers
    and checkpoints can treat them uniformly.
    """

    PARAM_NAMES = ("W1", "b1", "W2", "b2", "Wmu", "bmu", "Wv", "bv", "log_std")

    def __init__(
        self,
        obs_dim: int,
        act_dim: int,
        hidden: int = 128,
        rng: np.random.Generator | None = None,
        init_log_std: float = -1.0,
        mean_bias=None,
        zero: bool = False,
    ):
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.hidden = hidden
        rng = rng if rng is not None else np.random.default_rng(0)

        def dense(n_in, n_out, gain):
            if zero:
                return np.zeros((n_in, n_out))
            # orthogonal init, as usual for PPO
            a = rng.standard_normal((max(n_in, n_out), min(n_in, n_out)))
            q, r = np.linalg.qr(a)
            q = q * np.sign(np.diag(r))
            w = q if n_in >= n_out else q.T
            return gain * w[:n_in, :n_out]

        self.params = {
            "W1": dense(obs_dim, hidden, math.sqrt(2.0)),
            "b1": np.zeros(hidden),
            "W2": dense(hidden, hidden, math.sqrt(2.0)),
            "b2": np.zeros(hidden),
            "Wmu": dense(hidden, act_dim, 0.01),
            "bmu": np.zeros(act_dim) if mean_bias is None else np.asarray(mean_bias, dtype=np.float64).copy(),
            "Wv": dense(hidden, 1, 1.0),
            "bv": np.zeros(1),
            "log_std": np.full(act_dim, 0.0 if zero else float(init_log_std)),
        }

    # -- forward/backward -------------------------------------------------
    def forward(self, obs):
        """Return ``(mean, log_std, value, cache)`` for a batch or single obs."""
        obs = np.asarray(obs, dtype=np.float64)
        single = obs.ndim == 1
        if single:
            obs = obs[None, :]
        if obs.ndim != 2 or obs.shape[1] != self.obs_dim:
            raise ShapeMismatch(f"expected obs dim {self.obs_dim}, got shape {obs.shape}")
        P = self.params
        h1 = np.tanh(obs @ P["W1"] + P["b1"])
        h2 = np.tanh(h1 @ P["W2"] + P["b2"])
        mean = h2 @ P["Wmu"] + P["bmu"]
        value = (h2 @ P["Wv"] + P["bv"])[:, 0]
        cache = (obs, h1, h2)
        if single:
            return mean[0], P["log_std"], float(value[0]), cache
        return mean, P["log_std"], value, cache

    def backward(self, cache, d_mean, d_value, d_log_std=None) -> dict:
        """Gradients of a scalar loss given its partials wrt the outputs."""
        obs, h1, h2 = cache
        P = self.params
        d_mean = np.atleast_2d(d_mean)
        d_value = np.asarray(d_value, dtype=np.float64).reshape(-1, 1)
        grads = {
            "Wmu": h2.T @ d_mean,
            "bmu": d_mean.sum(axis=0),
            "Wv": h2.T @ d_value,
            "bv": d_value.sum(axis=0),
            "log_std": np.zeros(self.act_dim) if d_log_std is None else np.asarray(d_log_std, dtype=np.float64),
        }
        dh2 = d_mean @ P["Wmu"].T + d_value @ P["Wv"].T
        dz2 = dh2 * (1.0 - h2 * h2)
        grads["W2"] = h1.T @ dz2
        grads["b2"] = dz2.sum(axis=0)
        dh1 = dz2 @ P["W2"].T
        dz1 = dh1 * (1.0 - h1 * h1)
        grads["W1"] = obs.T @ dz1
        grads["b1"] = dz1.sum(axis=0)
        return grads

    # -- acting -----------------------------------------------------------
    def act(self, obs, rng: np.random.Generator, deterministic: bool = False):
        """Sample (or take the mean) action; returns ``(action, log_prob, value)``."""
        mean, log_std, value, _ = self.forward(obs)
        if deterministic:
            action = mean.copy()
        else:
            action = mean + np.exp(log_std) * rng.standard_normal(self.act_dim)
        logp = float(gaussian_log_prob(action, mean, log_std))
        return action, logp, value

    # -- parameter utilities ---------------------------------------------
    def get_flat(self) -> np.ndarray:
        return np.concatenate([self.params[k].ravel() for k in self.PARAM_NAMES])

    def set_flat(self, flat: np.ndarray) -> None:
        i = 0
        for k in self.PARAM_NAMES:
            n = self.params[k].size
            self.params[k] = flat[i : i + n].reshape(self.params[k].shape).copy()
            i += n

    def copy_params(self) -> dict:
        return {k: v.copy() for k, v in self.params.items()}

    def load_params(self, params: dict) -> None:
        for k in self.PARAM_NAMES:
            if params[k].shape != self.params[k].shape:
                raise ShapeMismatch(f"parameter {k}: {params[k].shape} != {self.params[k].shape}")
            self.params[k] = np.array(params[k], dtype=np.float64)

    def checksum(self) -> str:
        return hashlib.sha256(self.get_flat().tobytes()).hexdigest()


class Adam:
    def __init__(self, params: dict, lr: float = 3e-4, betas=(0.9, 0.999), eps: float = 1e-8):
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, g in grads.items():
            self.m[k] = self.b1 * self.m[k] + (1.0 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1.0 - self.b2) * g * g
            params[k] -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)

    def state(self) -> dict:
        out = {"t": np.array(self.t), "lr": np.array(self.lr)}
        for k in self.m:
            out[f"m.{k}"] = self.m[k].copy()
            out[f"v.{k}"] = self.v[k].copy()
        return out

    def load_state(self, state: dict) -> None:
        self.t = int(state["t"])
        self.lr = float(state["lr"])
        for k in self.m:
            self.m[k] = np.array(state[f"m.{k}"], dtype=np.float64)
            self.v[k] = np.array(state[f"v.{k}"], dtype=np.float64)
