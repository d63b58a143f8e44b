"""PRB-side decisions: integer quotas, the channel-aware resolver and PF.

All tie-breaks go to the lowest index (user or PRB) so that every schedule
is reproducible on replay.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "QuotaVector",
    "softmax",
    "largest_remainder",
    "quotas_from_logits",
    "channel_score",
    "resolve_prbs",
    "pf_schedule",
    "max_score_schedule",
]


def softmax(z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max())
    return e / e.sum()


def largest_remainder(shares: np.ndarray, total: int) -> np.ndarray:
    """Integerize ``shares * total`` keeping the sum equal to ``total``.

    Floors first, then hands the leftover units to the largest fractional
    remainders; equal remainders go to the lower index.
    """
    ideal = np.asarray(shares, dtype=np.float64) * total
    base = np.floor(ideal).astype(np.int64)
    # guard against shares summing a hair above 1
    base = np.minimum(base, total)
    leftover = total - int(base.sum())
    if leftover > 0:
        rem = ideal - base
        # stable sort on -rem keeps lower indices first among ties
        order = np.argsort(-rem, kind="stable")
        base[order[:leftover]] += 1
    elif leftover < 0:
        # only reachable through float rounding of the shares
        order = np.argsort(ideal - base, kind="stable")
        for i in order:
            if leftover == 0:
                break
            if base[i] > 0:
                base[i] -= 1
                leftover += 1
    return base


@dataclass(frozen=True)
class QuotaVector:
    logits: np.ndarray
    shares: np.ndarray
    counts: np.ndarray

    @property
    def ideal(self) -> np.ndarray:
        return self.shares * int(self.counts.sum())


def quotas_from_logits(z, num_prbs: int) -> QuotaVector:
    z = np.asarray(z, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise ValueError("quota logits must be finite")
    q = softmax(z)
    return QuotaVector(z, q, largest_remainder(q, num_prbs))


def channel_score(g: np.ndarray) -> np.ndarray:
    """Per-(PRB, user) channel score: channel power gain summed over symbols."""
    return np.asarray(g, dtype=np.float64).sum(axis=0)


def resolve_prbs(counts, psi: np.ndarray) -> np.ndarray:
    """Turn integer per-user PRB counts into an exact PRB map.

    Users with remaining quota take turns in ascending index order; on its
    turn a user takes its best still-available PRB by ``psi``.
    """
    counts = np.asarray(counts, dtype=np.int64).copy()
    psi = np.asarray(psi, dtype=np.float64)
    B, U = psi.shape
    if counts.shape != (U,) or np.any(counts < 0) or counts.sum() > B:
        raise ValueError("quota counts must be nonnegative and sum to at most B")
    x = np.zeros((B, U), dtype=np.int8)
    # taken PRBs are masked to -inf so argmax (first max) skips them
    scores = psi.T.copy()
    active = [u for u in range(U) if counts[u] > 0]
    while active:
        still = []
        for u in active:
            b = int(np.argmax(scores[u]))
            x[b, u] = 1
            scores[:, b] = -np.inf
            counts[u] -= 1
            if counts[u] > 0:
                still.append(u)
        active = still
    return x


def pf_schedule(psi: np.ndarray, T, eps: float = 1e-9) -> np.ndarray:
    """Proportional fair: PRB ``b`` goes to ``argmax_u psi[b, u] / (T[u] + eps)``."""
    psi = np.asarray(psi, dtype=np.float64)
    metric = psi / (np.asarray(T, dtype=np.float64) + eps)[None, :]
    winner = np.argmax(metric, axis=1)
    x = np.zeros(psi.shape, dtype=np.int8)
    x[np.arange(psi.shape[0]), winner] = 1
    return x


def max_score_schedule(psi: np.ndarray) -> np.ndarray:
    """Each PRB to the user with the highest channel score."""
    psi = np.asarray(psi, dtype=np.float64)
    x = np.zeros(psi.shape, dtype=np.int8)
    x[np.arange(psi.shape[0]), np.argmax(psi, axis=1)] = 1
    return x
