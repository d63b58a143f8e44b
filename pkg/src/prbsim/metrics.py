"""Smoothed throughput, Jain's fairness index and the shared reward."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["FairnessTracker", "MetricsConfig", "jain_index", "normalized_throughput", "slot_reward"]


@dataclass(frozen=True)
class MetricsConfig:
    alpha: float = 0.5
    beta: float = 0.1
    eps: float = 1e-9
    # "pf" calibrates T_norm per trace from a PF warmup; a number fixes it
    t_norm: float | str = "pf"
    t_norm_warmup_slots: int = 200
    t_norm_scale: float = 1.5

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if not 0.0 < self.beta <= 1.0:
            raise ValueError("beta must lie in (0, 1]")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if isinstance(self.t_norm, str):
            if self.t_norm != "pf":
                raise ValueError("t_norm must be a positive number or 'pf'")
        elif not self.t_norm > 0:
            raise ValueError("t_norm must be positive")


def jain_index(T, eps: float = 1e-9) -> float:
    """``(sum T)^2 / (U sum T^2 + eps)``; an all-zero vector counts as perfectly fair.

    The result is clamped to ``[1/U, 1]``: rounding on equal entries, or the
    ``eps`` regularizer on very small throughputs, would otherwise leave it.
    """
    T = np.asarray(T, dtype=np.float64)
    s = T.sum()
    if s == 0.0:
        return 1.0
    return float(np.clip(s * s / (T.size * np.dot(T, T) + eps), 1.0 / T.size, 1.0))


def normalized_throughput(T, t_norm: float) -> float:
    return float(np.clip(np.sum(T) / t_norm, 0.0, 1.0))


def slot_reward(T, t_norm: float, alpha: float, eps: float) -> float:
    return (1.0 - alpha) * normalized_throughput(T, t_norm) + alpha * jain_index(T, eps)


@dataclass
class FairnessTracker:
    """Per-user exponentially smoothed throughput in bits/s."""

    num_users: int
    t_norm: float
    beta: float = 0.1
    eps: float = 1e-9
    alpha: float = 0.5
    T: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.T is None:
            self.T = np.zeros(self.num_users)
        if not self.t_norm > 0:
            raise ValueError("t_norm must be positive")

    def reset(self) -> None:
        self.T = np.zeros(self.num_users)

    def update(self, R) -> np.ndarray:
        R = np.asarray(R, dtype=np.float64)
        if np.any(R < 0):
            raise ValueError("throughput must be nonnegative")
        self.T = (1.0 - self.beta) * self.T + self.beta * R
        return self.T

    def jain(self) -> float:
        return jain_index(self.T, self.eps)

    def reward(self) -> float:
        return slot_reward(self.T, self.t_norm, self.alpha, self.eps)
