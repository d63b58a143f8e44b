"""Power-side decisions: inter-user shares, intra-user shaping, equal power."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import PrbsimError
from .scheduler import softmax

__all__ = [
    "KAPPA_MAX",
    "PowerBudget",
    "UnscheduledUserWithPower",
    "user_budgets",
    "squash_kappa",
    "shaping_weights",
    "shape_user_power",
    "assemble_power_tensor",
    "equal_power",
]

KAPPA_MAX = 8.0


class UnscheduledUserWithPower(PrbsimError):
    pass


@dataclass(frozen=True)
class PowerBudget:
    shares: np.ndarray
    per_user: np.ndarray


def user_budgets(w, p_max: float) -> PowerBudget:
    eta = softmax(w)
    return PowerBudget(eta, eta * p_max)


def squash_kappa(raw, kappa_max: float = KAPPA_MAX) -> np.ndarray:
    """Map unbounded policy outputs onto ``[0, kappa_max]``."""
    raw = np.asarray(raw, dtype=np.float64)
    return kappa_max * expit(raw)


def shaping_weights(g_user: np.ndarray, kappa: float) -> np.ndarray:
    """Exponential rank weights for one user's scheduled resources.

    ``g_user`` has shape ``(L, n)``: the user's channel gains on its ``n``
    scheduled PRBs (in ascending PRB order). Within each symbol, the PRB with
    the m-th strongest gain (ties to the lower PRB) gets ``exp(-kappa (m-1))``.
    """
    L, n = g_user.shape
    order = np.argsort(-g_user, axis=1, kind="stable")
    ranks = np.empty((L, n), dtype=np.float64)
    np.put_along_axis(ranks, order, np.broadcast_to(np.arange(n, dtype=np.float64), (L, n)), axis=1)
    return np.exp(-kappa * ranks)


def shape_user_power(u: int, p_tot: float, kappa: float, x: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Distribute ``p_tot`` watts over user ``u``'s scheduled (symbol, PRB) pairs.

    Returns an ``(L, B)`` array, zero on PRBs not assigned to ``u``, summing
    to ``p_tot``.
    """
    prbs = np.flatnonzero(x[:, u])
    L = g.shape[0]
    out = np.zeros((L, x.shape[0]))
    if prbs.size == 0:
        if p_tot > 0:
            raise UnscheduledUserWithPower(f"user {u} has power {p_tot!r} W but no PRBs")
        return out
    omega = shaping_weights(g[:, prbs, u], kappa)
    out[:, prbs] = p_tot * omega / omega.sum()
    return out


def assemble_power_tensor(budget: PowerBudget, kappa, x: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Full ``(L, B, U)`` power tensor from user budgets and shaping coefficients.

    The budget of a user without PRBs is handed to the scheduled users in
    proportion to their own shares, so the slot budget stays fully used.
    """
    x = np.asarray(x)
    L = g.shape[0]
    B, U = x.shape
    p = np.zeros((L, B, U))
    scheduled = x.any(axis=0)
    if not scheduled.any():
        return p
    p_max = float(budget.per_user.sum())
    eta = np.where(scheduled, budget.shares, 0.0)
    eta = eta / eta.sum()
    kappa = np.broadcast_to(np.asarray(kappa, dtype=np.float64), (U,))
    for u in np.flatnonzero(scheduled):
        p[:, :, u] = shape_user_power(int(u), eta[u] * p_max, float(kappa[u]), x, g)
    return p


def equal_power(x: np.ndarray, p_max: float, num_symbols: int) -> np.ndarray:
    """Uniform power over every scheduled (symbol, PRB) pair."""
    x = np.asarray(x)
    n = int(np.count_nonzero(x))
    p = np.zeros((num_symbols,) + x.shape)
    if n == 0:
        return p
    p[:] = (x != 0) * (p_max / (n * num_symbols))
    return p
