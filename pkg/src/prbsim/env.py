"""Slot-level environment shared by training and evaluation.

Each slot runs PRB decision -> resolved map -> power decision -> PHY/MAC
execution -> tracker update, replaying channel gains from a cached trace.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import ChannelTrace
from .grid import CellConfig
from .metrics import FairnessTracker, MetricsConfig
from .phymac import LinkConfig, LinkState, McsTable, SlotOutcome, default_mcs_table, step_slot
from .power import KAPPA_MAX, assemble_power_tensor, equal_power, squash_kappa, user_budgets
from .scheduler import channel_score, pf_schedule, quotas_from_logits, resolve_prbs

__all__ = [
    "SlotEnv",
    "StepResult",
    "PRB_FEATURES",
    "POW_FEATURES",
    "calibrate_t_norm",
]

PRB_FEATURES = 8
POW_FEATURES = 9


@dataclass
class StepResult:
    outcome: SlotOutcome
    reward: float
    cell_throughput: float  # bits/s delivered this slot
    jain: float
    rate: np.ndarray  # per-user bits/s this slot
    smoothed: np.ndarray  # per-user T_u after the update


class SlotEnv:
    """Single-cell downlink environment replaying a channel trace.

    The trace cursor wraps around at the end of the trace. ``reset`` clears
    HARQ/OLLA state, smoothed throughputs and allocation history.
    """

    def __init__(
        self,
        trace: ChannelTrace,
        cell: CellConfig,
        t_norm: float,
        metrics: MetricsConfig | None = None,
        link: LinkConfig | None = None,
        table: McsTable | None = None,
        seed: int | np.random.SeedSequence = 0,
    ):
        U, B, L = trace.dims
        if (U, B, L) != (cell.num_users, cell.num_prbs, cell.data_symbols):
            raise ValueError(f"trace dims {(U, B, L)} do not match cell config")
        self.trace = trace
        self.cell = cell
        self.metrics = metrics or MetricsConfig()
        self.link = link or LinkConfig()
        self.table = table or default_mcs_table()
        self.t_norm = float(t_norm)
        self.rng = np.random.default_rng(seed)
        self.tracker = FairnessTracker(
            U, self.t_norm, beta=self.metrics.beta, eps=self.metrics.eps, alpha=self.metrics.alpha
        )
        self.reset(0)

    # -- state -----------------------------------------------------------
    def reset(self, start_slot: int = 0, seed=None) -> None:
        """Clear all per-episode state and jump to ``start_slot``.

        A non-None ``seed`` also restarts the PHY random stream.
        """
        U = self.cell.num_users
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        self.cursor = int(start_slot) % self.trace.num_slots
        self.t = 0
        self.states = [LinkState.fresh(self.link) for _ in range(U)]
        self.tracker.reset()
        self.prev_prb_share = np.zeros(U)
        self.prev_power_share = np.zeros(U)
        self._load_slot()

    def _load_slot(self) -> None:
        self.g = self.trace.slot(self.cursor)
        self.psi = channel_score(self.g)

    # -- observations ----------------------------------------------------
    def _user_features(self) -> np.ndarray:
        psi = self.psi
        cell_mean = float(psi.mean())
        scale = 1.0 / cell_mean if cell_mean > 0 else 0.0
        cap = self.link.olla_cap_db
        feats = np.column_stack(
            [
                psi.mean(axis=0) * scale,
                psi.max(axis=0) * scale,
                self.prev_prb_share,
                self.prev_power_share,
                self.tracker.T / self.t_norm,
                [s.ack_rate() for s in self.states],
                [s.olla_offset / cap for s in self.states],
                [s.last_mcs / self.table.max_index for s in self.states],
            ]
        )
        return feats

    def obs_prb(self) -> np.ndarray:
        return self._user_features().ravel()

    def obs_pow(self, x: np.ndarray) -> np.ndarray:
        counts = np.asarray(x).sum(axis=0) / self.cell.num_prbs
        return np.column_stack([self._user_features(), counts]).ravel()

    @property
    def obs_prb_dim(self) -> int:
        return PRB_FEATURES * self.cell.num_users

    @property
    def obs_pow_dim(self) -> int:
        return POW_FEATURES * self.cell.num_users

    # -- actions ---------------------------------------------------------
    def prb_from_action(self, z: np.ndarray) -> np.ndarray:
        quotas = quotas_from_logits(z, self.cell.num_prbs)
        return resolve_prbs(quotas.counts, self.psi)

    def pf_assignment(self) -> np.ndarray:
        return pf_schedule(self.psi, self.tracker.T, self.metrics.eps)

    def power_from_action(self, a: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Power tensor from a power-agent action ``[w_residual (U), raw_kappa (U)]``.

        The user weight logits are offset by the log of each user's PRB
        count, so a zero residual reproduces uniform power per resource.
        """
        U = self.cell.num_users
        a = np.asarray(a, dtype=np.float64)
        counts = np.asarray(x).sum(axis=0)
        w = a[:U] + np.log(np.maximum(counts, 1))
        kappa = squash_kappa(a[U:], KAPPA_MAX)
        budget = user_budgets(w, self.cell.p_max)
        return assemble_power_tensor(budget, kappa, x, self.g)

    def equal_power(self, x: np.ndarray) -> np.ndarray:
        return equal_power(x, self.cell.p_max, self.cell.data_symbols)

    # -- execution -------------------------------------------------------
    def step(self, x: np.ndarray, p: np.ndarray) -> StepResult:
        cell = self.cell
        out = step_slot(x, p, self.g, self.states, self.rng, cell, self.table, self.link)
        rate = out.delivered_bits / cell.slot_duration
        T = self.tracker.update(rate)
        reward = self.tracker.reward()
        jain = self.tracker.jain()
        self.prev_prb_share = np.asarray(x).sum(axis=0) / cell.num_prbs
        total = float(p.sum())
        self.prev_power_share = p.sum(axis=(0, 1)) / total if total > 0 else np.zeros(cell.num_users)
        self.t += 1
        self.cursor = (self.cursor + 1) % self.trace.num_slots
        self._load_slot()
        return StepResult(out, reward, float(rate.sum()), jain, rate, T.copy())


def calibrate_t_norm(
    trace: ChannelTrace,
    cell: CellConfig,
    metrics: MetricsConfig | None = None,
    link: LinkConfig | None = None,
    table: McsTable | None = None,
    seed: int = 0,
) -> float:
    """Normalization throughput for the reward.

    Mean cell throughput of PF with equal power over a warmup from slot 0,
    times a headroom factor. A numeric ``metrics.t_norm`` is returned as is.
    """
    metrics = metrics or MetricsConfig()
    if not isinstance(metrics.t_norm, str):
        return float(metrics.t_norm)
    env = SlotEnv(trace, cell, 1.0, metrics, link, table, seed=seed)
    n = min(metrics.t_norm_warmup_slots, trace.num_slots)
    total = 0.0
    for _ in range(n):
        x = env.pf_assignment()
        total += env.step(x, env.equal_power(x)).cell_throughput
    mean = total / n
    if not mean > 0 or not math.isfinite(mean):
        raise ValueError("PF warmup delivered no throughput; cannot calibrate T_norm")
    return metrics.t_norm_scale * mean
