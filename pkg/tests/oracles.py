"""Slow, obviously-correct reference implementations used by the tests."""

from fractions import Fraction
from itertools import product

import numpy as np


def largest_remainder_bruteforce(shares, total):
    """Enumerate every integer vector summing to ``total``.

    Keeps the vectors with minimal L1 distance to ``shares * total`` (exact
    rational arithmetic on the float ideals) and returns the lexicographically
    largest, which hands tied remainders to the lower index.
    """
    ideal = [Fraction(float(s) * total) for s in np.asarray(shares, dtype=np.float64)]
    U = len(ideal)
    best, best_cost = None, None
    for head in product(range(total + 1), repeat=U - 1):
        last = total - sum(head)
        if last < 0:
            continue
        n = (*head, last)
        cost = sum(abs(Fraction(k) - i) for k, i in zip(n, ideal))
        if best_cost is None or cost < best_cost or (cost == best_cost and n > best):
            best, best_cost = n, cost
    return np.array(best)


def resolve_replay(counts, psi):
    """Plain-Python replay of the round-robin greedy cycle."""
    B = len(psi)
    U = len(psi[0])
    left = list(int(c) for c in counts)
    free = list(range(B))
    owner = [None] * B
    while any(left):
        for u in range(U):
            if left[u] == 0:
                continue
            best_b = None
            for b in free:  # free stays in ascending order: first max wins ties
                if best_b is None or psi[b][u] > psi[best_b][u]:
                    best_b = b
            owner[best_b] = u
            free.remove(best_b)
            left[u] -= 1
    x = np.zeros((B, U), dtype=np.int8)
    for b, u in enumerate(owner):
        if u is not None:
            x[b, u] = 1
    return x


def shaping_bruteforce(g_user, kappa):
    """Rank weights via an explicit sort per symbol (ties to the lower PRB)."""
    L, n = g_user.shape
    w = np.zeros((L, n))
    for l in range(L):
        order = sorted(range(n), key=lambda b: (-g_user[l, b], b))
        for m, b in enumerate(order):
            w[l, b] = np.exp(-kappa * m)
    return w


def gae_direct(rewards, values, gamma, lam):
    """GAE by explicit double sum over future TD residuals."""
    n = len(rewards)
    deltas = [rewards[t] + gamma * values[t + 1] - values[t] for t in range(n)]
    adv = np.zeros(n)
    for t in range(n):
        adv[t] = sum((gamma * lam) ** k * deltas[t + k] for k in range(n - t))
    return adv
