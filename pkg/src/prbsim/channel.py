"""Synthetic mobility-aware channel gains and the cached trace format.

Small-scale fading is a complex Gauss-Markov (AR(1)) process, correlated
across PRBs with coefficient ``rho_f`` and across time with coefficient
``rho_t`` per slot. Time evolution runs at symbol granularity with
coefficient ``rho_t ** (1 / L)`` so that the lag-one-slot correlation of the
complex amplitude equals ``rho_t``. Only ``|h|^2`` is stored.

Trace file layout (little endian)::

    offset  size  field
    0       8     magic b"PRBTRACE"
    8       4     version (u32)
    12      4     U (u32)
    16      4     B (u32)
    20      4     L (u32)
    24      8     H, number of slots (u64)
    32      8     seed (i64)
    40      16    generator params hash (first 16 bytes of sha256)
    56      8     reserved, zero
    64      ...   fp32 gains in (slot, symbol, prb, user) order

A ``<path>.json`` sidecar records the generator parameters.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .errors import ConfigError, DataError
from .grid import CellConfig

__all__ = [
    "ChannelGenConfig",
    "ChannelTrace",
    "FormatError",
    "generate_trace",
    "save_trace",
    "load_trace",
    "TRACE_MAGIC",
    "TRACE_VERSION",
    "HEADER_SIZE",
]

TRACE_MAGIC = b"PRBTRACE"
TRACE_VERSION = 1
HEADER_SIZE = 64
_HEADER = struct.Struct("<8sIIIIQq16s8x")
assert _HEADER.size == HEADER_SIZE

# slots generated per chunk; part of the determinism contract
_CHUNK_SLOTS = 256


class FormatError(DataError):
    def __init__(self, offset: int, message: str):
        self.offset = offset
        super().__init__(f"{message} (at byte offset {offset})")


@dataclass(frozen=True)
class ChannelGenConfig:
    """Parameters of the synthetic channel generator.

    ``pathloss_db`` holds one mean large-scale gain per user in dB (negative
    numbers). When ``speeds_mps`` is given, per-user time correlation is
    ``exp(-v / v_ref_mps)`` and overrides ``rho_t``.
    """

    pathloss_db: tuple[float, ...] = (-104.0, -105.0, -106.0, -107.0)
    shadowing_std_db: float = 0.0
    shadowing_corr: float = 0.999
    rho_t: tuple[float, ...] | float = 0.9
    rho_f: float = 0.8
    speeds_mps: tuple[float, ...] | None = (3.0, 10.0, 20.0, 30.0)
    v_ref_mps: float = 100.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "pathloss_db", tuple(float(v) for v in self.pathloss_db))
        if isinstance(self.rho_t, (list, tuple)):
            object.__setattr__(self, "rho_t", tuple(float(v) for v in self.rho_t))
        if self.speeds_mps is not None:
            object.__setattr__(self, "speeds_mps", tuple(float(v) for v in self.speeds_mps))
            if any(v < 0 for v in self.speeds_mps):
                raise ConfigError("speeds must be nonnegative")
            if not self.v_ref_mps > 0:
                raise ConfigError("v_ref_mps must be positive")
        for rho in self._rho_values():
            if not 0.0 <= rho < 1.0:
                raise ConfigError(f"rho_t must lie in [0, 1), got {rho}")
        if not 0.0 <= self.rho_f < 1.0:
            raise ConfigError(f"rho_f must lie in [0, 1), got {self.rho_f}")
        if not 0.0 <= self.shadowing_corr < 1.0:
            raise ConfigError("shadowing_corr must lie in [0, 1)")
        if self.shadowing_std_db < 0:
            raise ConfigError("shadowing_std_db must be nonnegative")
        if not all(math.isfinite(v) for v in self.pathloss_db):
            raise ConfigError("pathloss gains must be finite")

    def _rho_values(self):
        if isinstance(self.rho_t, tuple):
            return self.rho_t
        return (self.rho_t,)

    def time_correlation(self, num_users: int) -> np.ndarray:
        """Per-user lag-one-slot amplitude correlation."""
        if self.speeds_mps is not None:
            speeds = _per_user(self.speeds_mps, num_users, "speeds_mps")
            return np.exp(-speeds / self.v_ref_mps)
        return _per_user(self.rho_t, num_users, "rho_t")

    def pathloss_gain(self, num_users: int) -> np.ndarray:
        return 10.0 ** (_per_user(self.pathloss_db, num_users, "pathloss_db") / 10.0)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    def params_hash(self) -> bytes:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).digest()[:16]


def _per_user(values, num_users: int, name: str) -> np.ndarray:
    if isinstance(values, (int, float)):
        return np.full(num_users, float(values))
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 1:
        return np.full(num_users, float(arr[0]))
    if arr.size != num_users:
        raise ConfigError(f"{name} has {arr.size} entries, expected {num_users}")
    return arr


@dataclass(frozen=True, eq=False)
class ChannelTrace:
    """Cached sequence of per-slot channel power gains, shape ``(H, L, B, U)``."""

    gains: np.ndarray
    seed: int
    params_hash: bytes = field(default=b"\x00" * 16)
    params: dict | None = None

    def __post_init__(self):
        g = self.gains
        if g.ndim != 4:
            raise ValueError("gains must have shape (H, L, B, U)")
        if g.dtype != np.float32:
            raise ValueError("gains must be float32")
        if g.flags.writeable:
            g = g.view()
            g.flags.writeable = False
            object.__setattr__(self, "gains", g)

    @property
    def num_slots(self) -> int:
        return self.gains.shape[0]

    @property
    def dims(self) -> tuple[int, int, int]:
        """(U, B, L)"""
        _, L, B, U = self.gains.shape
        return U, B, L

    def slot(self, t: int) -> np.ndarray:
        """Channel gains of slot ``t`` as float64, shape ``(L, B, U)``."""
        return self.gains[t].astype(np.float64)

    def header_bytes(self) -> bytes:
        U, B, L = self.dims
        return _HEADER.pack(
            TRACE_MAGIC, TRACE_VERSION, U, B, L, self.num_slots, self.seed, self.params_hash
        )

    def __eq__(self, other):
        if not isinstance(other, ChannelTrace):
            return NotImplemented
        return (
            self.header_bytes() == other.header_bytes()
            and self.gains.tobytes() == other.gains.tobytes()
        )

    def __hash__(self):
        return hash((self.header_bytes(), hashlib.sha256(self.gains.tobytes()).digest()))


def generate_trace(cfg: ChannelGenConfig, cell: CellConfig, num_slots: int) -> ChannelTrace:
    """Generate ``num_slots`` slots of channel power gains.

    Identical ``cfg`` (including its seed) yields a bit-identical trace.
    """
    if num_slots < 1:
        raise ConfigError("num_slots must be >= 1")
    U, B, L = cell.num_users, cell.num_prbs, cell.data_symbols
    rho_slot = cfg.time_correlation(U)
    for rho in rho_slot:
        if not 0.0 <= rho < 1.0:
            raise ConfigError(f"time correlation {rho} outside [0, 1)")
    rho_sym = rho_slot ** (1.0 / L)
    pathloss = cfg.pathloss_gain(U)
    rng = np.random.default_rng(cfg.seed)

    # Frequency shaping: AR(1) across PRBs via its Cholesky factor.
    idx = np.arange(B)
    toeplitz = cfg.rho_f ** np.abs(idx[:, None] - idx[None, :])
    chol = np.linalg.cholesky(toeplitz)

    # shadowing in dB, one AR(1) per user evolving per slot, unit mean in linear
    sh_sigma = cfg.shadowing_std_db
    sh_norm = math.exp(0.5 * (sh_sigma * math.log(10.0) / 10.0) ** 2)
    sh_state = rng.standard_normal(U) * sh_sigma

    out = np.empty((num_slots, L, B, U), dtype=np.float32)
    zi = None
    done = 0
    while done < num_slots:
        n = min(_CHUNK_SLOTS, num_slots - done)
        steps = n * L
        noise = (rng.standard_normal((steps, B, U)) + 1j * rng.standard_normal((steps, B, U)))
        noise *= math.sqrt(0.5)
        w = np.matmul(chol, noise)
        h = np.empty_like(w)
        if zi is None:
            zi = np.empty((U, B), dtype=np.complex128)
            for u in range(U):
                # start in the stationary distribution: h[0] = w[0]
                zi[u] = (1.0 - math.sqrt(1.0 - rho_sym[u] ** 2)) * w[0, :, u]
        for u in range(U):
            a = rho_sym[u]
            y, zf = lfilter(
                [math.sqrt(1.0 - a * a)], [1.0, -a], w[:, :, u], axis=0, zi=zi[u][None, :]
            )
            h[:, :, u] = y
            zi[u] = zf[0]
        power = (h.real ** 2 + h.imag ** 2).reshape(n, L, B, U)

        if sh_sigma > 0:
            shadow = np.empty((n, U))
            c = cfg.shadowing_corr
            innov = rng.standard_normal((n, U)) * sh_sigma * math.sqrt(1.0 - c * c)
            for k in range(n):
                sh_state = c * sh_state + innov[k]
                shadow[k] = sh_state
            large = pathloss[None, :] * 10.0 ** (shadow / 10.0) / sh_norm
        else:
            large = np.broadcast_to(pathloss[None, :], (n, U))
        out[done : done + n] = power * large[:, None, None, :]
        done += n

    return ChannelTrace(
        gains=out, seed=int(cfg.seed), params_hash=cfg.params_hash(), params=cfg.to_dict()
    )


def _sidecar(path: Path) -> Path:
    return path.with_name(path.name + ".json")


def save_trace(trace: ChannelTrace, path) -> None:
    path = Path(path)
    body = np.ascontiguousarray(trace.gains, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(trace.header_bytes())
        fh.write(body.tobytes())
    U, B, L = trace.dims
    meta = {
        "num_users": U,
        "num_prbs": B,
        "data_symbols": L,
        "num_slots": trace.num_slots,
        "seed": trace.seed,
        "params_hash": trace.params_hash.hex(),
        "params": trace.params,
    }
    _sidecar(path).write_text(json.dumps(meta, indent=2, sort_keys=True))


def load_trace(path) -> ChannelTrace:
    """Load a trace written by :func:`save_trace`.

    The returned gains are a read-only memory map of the file body.
    """
    path = Path(path)
    try:
        size = path.stat().st_size
    except OSError as exc:
        raise DataError(f"cannot read trace {path}: {exc.strerror}") from None
    if size < HEADER_SIZE:
        raise FormatError(size, "file shorter than header")
    with open(path, "rb") as fh:
        raw = fh.read(HEADER_SIZE)
    magic, version, U, B, L, H, seed, phash = _HEADER.unpack(raw)
    if magic != TRACE_MAGIC:
        raise FormatError(0, f"bad magic {magic!r}")
    if version != TRACE_VERSION:
        raise FormatError(8, f"unsupported version {version}")
    if min(U, B, L, H) < 1:
        raise FormatError(12, "zero dimension in header")
    expected = HEADER_SIZE + 4 * H * L * B * U
    if size != expected:
        raise FormatError(min(size, expected), f"body length {size - HEADER_SIZE} != {expected - HEADER_SIZE} implied by header")
    gains = np.memmap(path, dtype="<f4", mode="r", offset=HEADER_SIZE, shape=(H, L, B, U))
    params = None
    side = _sidecar(path)
    if side.exists():
        params = json.loads(side.read_text()).get("params")
    return ChannelTrace(gains=gains, seed=int(seed), params_hash=bytes(phash), params=params)
