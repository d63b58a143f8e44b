"""Cross-layer slot execution: SINR, effective SINR, AMC, HARQ and OLLA.

The PHY abstraction works on RE-level SINR. A power tensor entry
``p[l, b, u]`` is the power of a whole PRB on one symbol; each of its
subcarriers carries ``p / subcarriers_per_prb``.
"""

from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, PrbsimError
from .grid import CellConfig

__all__ = [
    "McsTable",
    "LinkConfig",
    "LinkState",
    "SlotOutcome",
    "NoScheduledResources",
    "default_mcs_table",
    "sinr_per_re",
    "rate_proxy",
    "effective_sinr",
    "select_mcs",
    "bler",
    "transmit_and_harq",
    "olla_update",
    "step_slot",
    "lin_to_db",
    "db_to_lin",
]

# 3GPP 38.214 CQI ladder (256QAM table) with the lowest entry taken from the 64QAM table.
_DEFAULT_EFFICIENCIES = (
    0.2344, 0.3770, 0.8770, 1.4766, 1.9141, 2.4063, 2.7305, 3.3223,
    3.9023, 4.5234, 5.1152, 5.5547, 6.2266, 6.9141, 7.4063,
)
_SINR_FLOOR_DB = -100.0


class NoScheduledResources(PrbsimError):
    pass


def lin_to_db(x):
    return 10.0 * np.log10(np.maximum(x, 10.0 ** (_SINR_FLOOR_DB / 10.0)))


def db_to_lin(x):
    return 10.0 ** (np.asarray(x, dtype=np.float64) / 10.0)


@dataclass(frozen=True)
class McsTable:
    efficiencies: np.ndarray
    thresholds_db: np.ndarray

    def __post_init__(self):
        eff = np.asarray(self.efficiencies, dtype=np.float64)
        thr = np.asarray(self.thresholds_db, dtype=np.float64)
        if eff.ndim != 1 or eff.shape != thr.shape or eff.size == 0:
            raise ValueError("MCS table needs matching nonempty 1-D columns")
        if np.any(np.diff(eff) <= 0) or np.any(np.diff(thr) <= 0):
            raise ValueError("MCS efficiencies and thresholds must be strictly increasing")
        object.__setattr__(self, "efficiencies", eff)
        object.__setattr__(self, "thresholds_db", thr)

    def __len__(self):
        return self.efficiencies.size

    @property
    def max_index(self) -> int:
        return self.efficiencies.size - 1

    @classmethod
    def from_efficiencies(cls, efficiencies, margin_db: float = 1.0) -> "McsTable":
        """Thresholds from the inverse Shannon bound minus an implementation margin."""
        eff = np.asarray(efficiencies, dtype=np.float64)
        thr = 10.0 * np.log10(2.0 ** eff - 1.0) - margin_db
        return cls(eff, thr)

    @classmethod
    def from_csv(cls, path) -> "McsTable":
        """Read ``index,efficiency,threshold_db`` rows (header optional)."""
        rows = []
        with open(Path(path), newline="") as fh:
            for rec in csv.reader(fh):
                if not rec or rec[0].strip().startswith("#"):
                    continue
                try:
                    rows.append((int(rec[0]), float(rec[1]), float(rec[2])))
                except ValueError:
                    if rows:
                        raise DataError(f"bad MCS row {rec!r} in {path}")
                    continue  # header
        if not rows:
            raise DataError(f"no MCS rows in {path}")
        rows.sort()
        if [r[0] for r in rows] != list(range(len(rows))):
            raise DataError("MCS indices must be 0..N-1")
        return cls(np.array([r[1] for r in rows]), np.array([r[2] for r in rows]))

    def to_csv(self, path) -> None:
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "efficiency", "threshold_db"])
            for i, (e, t) in enumerate(zip(self.efficiencies, self.thresholds_db)):
                w.writerow([i, repr(float(e)), repr(float(t))])


def default_mcs_table() -> McsTable:
    return McsTable.from_efficiencies(_DEFAULT_EFFICIENCIES, margin_db=1.0)


@dataclass(frozen=True)
class LinkConfig:
    """Link-adaptation constants."""

    bler_slope_db: float = 1.0
    max_retx: int = 3
    target_bler: float = 0.1
    olla_step_up_db: float = 0.5
    olla_cap_db: float = 5.0
    ack_window: int = 20

    def __post_init__(self):
        if not 0.0 < self.target_bler < 1.0:
            raise ValueError("target_bler must lie in (0, 1)")
        if self.bler_slope_db <= 0 or self.olla_step_up_db <= 0 or self.olla_cap_db <= 0:
            raise ValueError("slope, OLLA step and cap must be positive")
        if self.max_retx < 0 or self.ack_window < 1:
            raise ValueError("max_retx >= 0 and ack_window >= 1 required")

    @property
    def olla_step_down_db(self) -> float:
        return self.olla_step_up_db * self.target_bler / (1.0 - self.target_bler)


@dataclass
class LinkState:
    """Per-user link-adaptation and HARQ state."""

    olla_offset: float = 0.0
    harq_pending: bool = False
    remaining_retx: int = 0
    accumulated_sinr: float = 0.0
    tbs_pending: float = 0.0
    re_pending: int = 0
    mcs_pending: int = 0
    ack_history: deque = field(default_factory=lambda: deque(maxlen=20))
    last_mcs: int = 0

    @classmethod
    def fresh(cls, link: LinkConfig) -> "LinkState":
        return cls(ack_history=deque(maxlen=link.ack_window))

    def ack_rate(self) -> float:
        if not self.ack_history:
            return 0.0
        return sum(self.ack_history) / len(self.ack_history)

    def copy(self) -> "LinkState":
        new = LinkState(**{k: v for k, v in self.__dict__.items() if k != "ack_history"})
        new.ack_history = deque(self.ack_history, maxlen=self.ack_history.maxlen)
        return new


@dataclass
class SlotOutcome:
    delivered_bits: np.ndarray
    ack: np.ndarray
    eff_sinr_db: np.ndarray
    mcs: np.ndarray
    scheduled: np.ndarray
    retransmission: np.ndarray


def sinr_per_re(p_re: np.ndarray, g: np.ndarray, noise_power: float) -> np.ndarray:
    """Noise-limited SINR ``p * g / N0`` per resource element."""
    return np.asarray(p_re) * np.asarray(g) / noise_power


def rate_proxy(sinr):
    return np.log2(1.0 + np.asarray(sinr, dtype=np.float64))


def effective_sinr(sinr) -> float:
    """Capacity-equivalent effective SINR in dB.

    Returns ``10 log10(2 ** mean(log2(1 + sinr)) - 1)`` over the given REs.
    """
    sinr = np.asarray(sinr, dtype=np.float64).ravel()
    if sinr.size == 0:
        raise NoScheduledResources("effective SINR needs at least one RE")
    mean_cap = float(np.mean(np.log2(1.0 + sinr)))
    return float(lin_to_db(np.expm1(mean_cap * math.log(2.0))))


def select_mcs(eff_sinr_db: float, olla_offset: float, table: McsTable) -> int:
    """Highest MCS whose threshold is at or below ``eff_sinr_db + olla_offset``."""
    k = int(np.searchsorted(table.thresholds_db, eff_sinr_db + olla_offset, side="right")) - 1
    return max(k, 0)


def bler(sinr_db: float, threshold_db: float, slope_db: float) -> float:
    """Logistic waterfall; 0.5 at the MCS threshold."""
    z = (threshold_db - sinr_db) / slope_db
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def olla_update(state: LinkState, ack: bool, link: LinkConfig) -> LinkState:
    """Move the OLLA offset after an initial transmission.

    A NACK backs the offset off by ``olla_step_up_db`` (more conservative MCS),
    an ACK raises it by ``olla_step_down_db``. The ratio of the two steps puts
    the fixed point at the target BLER.
    """
    if ack:
        off = state.olla_offset + link.olla_step_down_db
    else:
        off = state.olla_offset - link.olla_step_up_db
    state.olla_offset = min(max(off, -link.olla_cap_db), link.olla_cap_db)
    return state


def transmit_and_harq(
    mcs: int,
    eff_sinr_db: float,
    scheduled_re_count: int,
    state: LinkState,
    rng: np.random.Generator,
    table: McsTable,
    link: LinkConfig,
) -> tuple[bool, float, bool]:
    """Transmit one transport block (or a pending retransmission).

    Returns ``(ack, delivered_bits, was_retransmission)`` and mutates
    ``state``. A pending HARQ block is sent before new data and its SINR is
    Chase-combined with the previous attempts; ``mcs`` is ignored then. A
    pending block too large for the current allocation at the top MCS is
    dropped and new data goes out instead.
    """
    if scheduled_re_count < 1:
        raise NoScheduledResources("transmission needs at least one scheduled RE")
    gamma = float(db_to_lin(eff_sinr_db))
    if state.harq_pending and state.tbs_pending > table.efficiencies[-1] * scheduled_re_count:
        # block cannot fit this allocation even at the top MCS: drop it, send new data
        _clear_harq(state)
    if state.harq_pending:
        # energy of a retransmission on fewer REs than the original is diluted
        state.accumulated_sinr += gamma * min(1.0, scheduled_re_count / state.re_pending)
        used_mcs = state.mcs_pending
        p_err = bler(
            float(lin_to_db(state.accumulated_sinr)),
            table.thresholds_db[used_mcs],
            link.bler_slope_db,
        )
        ack = bool(rng.random() >= p_err)
        delivered = 0.0
        if ack:
            delivered = state.tbs_pending
            _clear_harq(state)
        else:
            state.remaining_retx -= 1
            if state.remaining_retx <= 0:
                _clear_harq(state)  # dropped
        state.last_mcs = used_mcs
        state.ack_history.append(ack)
        return ack, delivered, True

    tbs = float(table.efficiencies[mcs]) * scheduled_re_count
    p_err = bler(eff_sinr_db, table.thresholds_db[mcs], link.bler_slope_db)
    ack = bool(rng.random() >= p_err)
    delivered = tbs if ack else 0.0
    if not ack and link.max_retx > 0:
        state.harq_pending = True
        state.remaining_retx = link.max_retx
        state.accumulated_sinr = gamma
        state.tbs_pending = tbs
        state.re_pending = scheduled_re_count
        state.mcs_pending = mcs
    state.last_mcs = mcs
    state.ack_history.append(ack)
    return ack, delivered, False


def _clear_harq(state: LinkState) -> None:
    state.harq_pending = False
    state.remaining_retx = 0
    state.accumulated_sinr = 0.0
    state.tbs_pending = 0.0
    state.re_pending = 0
    state.mcs_pending = 0


def step_slot(
    x: np.ndarray,
    p: np.ndarray,
    g: np.ndarray,
    states: list[LinkState],
    rng: np.random.Generator,
    cell: CellConfig,
    table: McsTable,
    link: LinkConfig,
) -> SlotOutcome:
    """Execute one slot for all users.

    ``x`` is the ``(B, U)`` PRB map, ``p`` the ``(L, B, U)`` per-PRB power and
    ``g`` the ``(L, B, U)`` channel gains. Users are processed in ascending
    index order so rng consumption is deterministic.
    """
    U = cell.num_users
    delivered = np.zeros(U)
    acks = np.zeros(U, dtype=bool)
    eff_db = np.full(U, np.nan)
    mcs_out = np.full(U, -1, dtype=np.int64)
    scheduled = np.zeros(U, dtype=bool)
    retx = np.zeros(U, dtype=bool)
    re_power = p / cell.subcarriers_per_prb
    for u in range(U):
        prbs = np.flatnonzero(x[:, u])
        if prbs.size == 0:
            continue
        scheduled[u] = True
        sinr = sinr_per_re(re_power[:, prbs, u], g[:, prbs, u], cell.noise_power)
        # every subcarrier of a PRB shares the same SINR, so the mean over
        # (symbol, prb) pairs equals the mean over REs
        gamma_db = effective_sinr(sinr)
        st = states[u]
        mcs = select_mcs(gamma_db, st.olla_offset, table)
        n_re = prbs.size * cell.res_per_prb
        ack, bits, was_retx = transmit_and_harq(mcs, gamma_db, n_re, st, rng, table, link)
        if not was_retx:
            olla_update(st, ack, link)
        delivered[u] = bits
        acks[u] = ack
        eff_db[u] = gamma_db
        mcs_out[u] = st.last_mcs
        retx[u] = was_retx
    return SlotOutcome(delivered, acks, eff_db, mcs_out, scheduled, retx)
