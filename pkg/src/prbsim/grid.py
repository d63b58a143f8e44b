"""Resource grid dimensions, slot decision variables and feasibility checks.

A slot decision is a binary PRB map ``x`` of shape ``(B, U)`` shared by all
data symbols, and a power tensor ``p`` of shape ``(L, B, U)`` in watts, where
``p[l, b, u]`` is the total power of PRB ``b`` on symbol ``l`` (before the
uniform split over its subcarriers).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, PrbsimError

__all__ = [
    "CellConfig",
    "ConstraintViolation",
    "BudgetExceeded",
    "PowerOnUnscheduled",
    "dbm_to_watt",
    "watt_to_dbm",
    "thermal_noise_per_re",
    "validate_assignment",
    "validate_power",
    "POWER_ZERO_ATOL",
    "BUDGET_RTOL",
]

# Absolute tolerance for "zero power" on unscheduled resources, in watts.
POWER_ZERO_ATOL = 1e-15
BUDGET_RTOL = 1e-9


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watt_to_dbm(watt: float) -> float:
    return 10.0 * math.log10(watt) + 30.0


def thermal_noise_per_re(subcarrier_spacing_hz: float, noise_figure_db: float) -> float:
    """Noise power in watts over one subcarrier (-174 dBm/Hz + NF)."""
    return dbm_to_watt(-174.0 + 10.0 * math.log10(subcarrier_spacing_hz) + noise_figure_db)


@dataclass(frozen=True)
class CellConfig:
    """Single-cell downlink grid and radio constants.

    Defaults follow the evaluated deployment: 4 users, 51 PRBs of 12
    subcarriers at 30 kHz spacing, 12 data symbols per 0.5 ms slot, 40 dBm
    base-station power and a 7 dB UE noise figure.
    """

    num_users: int = 4
    num_prbs: int = 51
    data_symbols: int = 12
    subcarriers_per_prb: int = 12
    p_max: float = field(default_factory=lambda: dbm_to_watt(40.0))
    noise_power: float = field(default_factory=lambda: thermal_noise_per_re(30e3, 7.0))
    slot_duration: float = 0.5e-3
    seed: int = 0
    # metadata only
    carrier_frequency_hz: float = 3.5e9
    subcarrier_spacing_hz: float = 30e3

    def __post_init__(self):
        if self.num_users < 1 or self.num_prbs < 1 or self.data_symbols < 1:
            raise ConfigError("num_users, num_prbs and data_symbols must be >= 1")
        if self.subcarriers_per_prb < 1:
            raise ConfigError("subcarriers_per_prb must be >= 1")
        if not self.p_max > 0:
            raise ConfigError("p_max must be positive")
        if not self.noise_power > 0:
            raise ConfigError("noise_power must be positive")
        if not self.slot_duration > 0:
            raise ConfigError("slot_duration must be positive")

    @property
    def assignment_shape(self) -> tuple[int, int]:
        return (self.num_prbs, self.num_users)

    @property
    def power_shape(self) -> tuple[int, int, int]:
        return (self.data_symbols, self.num_prbs, self.num_users)

    @property
    def res_per_prb(self) -> int:
        """Resource elements of one PRB over all data symbols of a slot."""
        return self.data_symbols * self.subcarriers_per_prb


class ConstraintViolation(PrbsimError):
    """A PRB is assigned to more than one user, or ``x`` is not binary."""

    def __init__(self, prb: int, users: list[int], message: str | None = None):
        self.prb = prb
        self.users = users
        super().__init__(message or f"PRB {prb} assigned to users {users}")


class BudgetExceeded(PrbsimError):
    def __init__(self, total: float, p_max: float):
        self.total = total
        super().__init__(f"total power {total!r} W exceeds P_max {p_max!r} W")


class PowerOnUnscheduled(PrbsimError):
    def __init__(self, symbol: int, prb: int, user: int, value: float):
        self.symbol = symbol
        self.prb = prb
        self.user = user
        super().__init__(
            f"power {value!r} W on unscheduled RE group (symbol={symbol}, prb={prb}, user={user})"
        )


def validate_assignment(x: np.ndarray, cfg: CellConfig) -> None:
    """Raise ``ConstraintViolation`` unless ``x`` is a binary, PRB-exclusive map."""
    x = np.asarray(x)
    if x.shape != cfg.assignment_shape:
        raise ValueError(f"assignment shape {x.shape} != {cfg.assignment_shape}")
    nonbinary = np.argwhere((x != 0) & (x != 1))
    if nonbinary.size:
        b, u = (int(i) for i in nonbinary[0])
        raise ConstraintViolation(b, [u], f"non-binary entry x[{b},{u}]={x[b, u]!r}")
    row_sums = x.sum(axis=1)
    bad = np.flatnonzero(row_sums > 1)
    if bad.size:
        b = int(bad[0])
        raise ConstraintViolation(b, [int(u) for u in np.flatnonzero(x[b])])


def validate_power(
    p: np.ndarray,
    x: np.ndarray,
    cfg: CellConfig,
    tol: float = BUDGET_RTOL,
    atol_zero: float = POWER_ZERO_ATOL,
) -> None:
    """Check the slot budget and that power only sits on scheduled PRBs."""
    p = np.asarray(p)
    x = np.asarray(x)
    if p.shape != cfg.power_shape:
        raise ValueError(f"power shape {p.shape} != {cfg.power_shape}")
    if x.shape != cfg.assignment_shape:
        raise ValueError(f"assignment shape {x.shape} != {cfg.assignment_shape}")
    if not np.all(np.isfinite(p)):
        raise ValueError("power tensor contains non-finite entries")
    negative = np.argwhere(p < 0)
    if negative.size:
        l, b, u = (int(i) for i in negative[0])
        raise ValueError(f"negative power at (symbol={l}, prb={b}, user={u})")
    off = (x[None, :, :] == 0) & (p > atol_zero)
    if off.any():
        l, b, u = (int(i) for i in np.argwhere(off)[0])
        raise PowerOnUnscheduled(l, b, u, float(p[l, b, u]))
    total = float(p.sum())
    if total > cfg.p_max * (1.0 + tol):
        raise BudgetExceeded(total, cfg.p_max)
