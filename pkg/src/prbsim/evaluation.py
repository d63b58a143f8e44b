"""Matched-channel evaluation of the PF baseline and the learned schemes.

Every scheme replays the same immutable trace from slot 0 with freshly reset
link state and smoothed throughputs, so differences between schemes come from
the decisions and not from the channel.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .channel import ChannelTrace
from .env import SlotEnv, calibrate_t_norm
from .errors import ConfigError, DataError
from .grid import CellConfig
from .metrics import MetricsConfig
from .phymac import LinkConfig, McsTable
from .rl.curriculum import MissingCheckpoint, PolicyPair, greedy_decision, load_checkpoint

__all__ = [
    "Scheme",
    "SchemeRun",
    "EvalReport",
    "Summary",
    "TraceTooShort",
    "parse_schemes",
    "run_matched_eval",
    "summarize",
    "empirical_cdf",
    "lower_median",
    "nearest_rank",
    "write_per_slot_csv",
    "read_per_slot_csv",
    "write_summary_json",
    "write_cdf_csv",
]


class TraceTooShort(DataError):
    pass


class Scheme(str, Enum):
    """Evaluated control schemes.

    ``PRB`` uses the phase-1 PRB policy with equal power, ``POWER`` the
    power-only policy on the PF schedule, ``JOINT`` both curriculum policies.
    """

    PF = "pf"
    PRB = "prb"
    POWER = "power"
    JOINT = "joint"

    @property
    def code(self) -> int:
        """Stable integer identity, used to key the PHY random stream."""
        return list(Scheme).index(self)

    @property
    def mode(self) -> str:
        return {"pf": "pf", "prb": "prb", "power": "pow_pf", "joint": "joint"}[self.value]

    @property
    def needs(self) -> tuple[str, ...]:
        """Policies (``"prb"``/``"pow"``) the scheme requires."""
        return {"pf": (), "prb": ("prb",), "power": ("pow",), "joint": ("prb", "pow")}[self.value]

    @property
    def checkpoint_name(self) -> str | None:
        return {"pf": None, "prb": "phase1", "power": "power_only", "joint": "phase3"}[self.value]


def parse_schemes(text: str) -> list[Scheme]:
    """``"pf,prb"`` -> ``[Scheme.PF, Scheme.PRB]``; raises ConfigError on unknown names."""
    out = []
    for name in (t.strip() for t in text.split(",")):
        if not name:
            continue
        try:
            out.append(Scheme(name))
        except ValueError:
            valid = ", ".join(s.value for s in Scheme)
            raise ConfigError(f"unknown scheme {name!r} (valid: {valid})") from None
    if not out:
        raise ConfigError("no schemes given")
    return out


@dataclass
class SchemeRun:
    """Per-slot metrics of one scheme over the evaluation window."""

    scheme: Scheme
    label: str
    throughput: np.ndarray  # (n,) cell throughput, bits/s
    jain: np.ndarray  # (n,)
    reward: np.ndarray  # (n,)
    rate: np.ndarray  # (n, U) delivered bits/s per user
    smoothed: np.ndarray  # (n, U) T_u after each slot
    channel_digest: str = ""

    @property
    def num_slots(self) -> int:
        return self.throughput.shape[0]


@dataclass
class EvalReport:
    runs: list[SchemeRun] = field(default_factory=list)
    t_norm: float = float("nan")

    def by_label(self, label: str) -> SchemeRun:
        for r in self.runs:
            if r.label == label:
                return r
        raise KeyError(label)


def _labels(schemes) -> list[str]:
    seen: dict[str, int] = {}
    labels = []
    for s in schemes:
        seen[s.value] = seen.get(s.value, 0) + 1
        labels.append(s.value if seen[s.value] == 1 else f"{s.value}_{seen[s.value]}")
    return labels


def _resolve_policies(schemes, checkpoints) -> dict:
    checkpoints = checkpoints or {}
    out = {}
    for s in schemes:
        if not s.needs:
            out[s] = None
            continue
        pair = checkpoints.get(s, checkpoints.get(s.value))
        if pair is None:
            raise MissingCheckpoint(f"scheme {s.value!r} needs a {s.checkpoint_name} checkpoint")
        if isinstance(pair, (str, Path)):
            pair, _ = load_checkpoint(pair)
        for name in s.needs:
            if getattr(pair, name) is None:
                raise MissingCheckpoint(f"checkpoint for scheme {s.value!r} has no {name} policy")
        out[s] = pair
    return out


def run_matched_eval(
    trace: ChannelTrace,
    schemes,
    checkpoints: dict | None = None,
    slots: int | None = None,
    seed: int = 0,
    cell: CellConfig | None = None,
    metrics: MetricsConfig | None = None,
    link: LinkConfig | None = None,
    table: McsTable | None = None,
    t_norm: float | None = None,
) -> EvalReport:
    """Evaluate ``schemes`` on the first ``slots`` slots of ``trace``.

    ``checkpoints`` maps a scheme (or its name) to a :class:`PolicyPair` or a
    checkpoint path. Each scheme starts from reset link and tracker state and
    draws BLER outcomes from a stream seeded by ``(seed, scheme identity)``,
    so a scheme listed twice reproduces itself exactly. Policies act at their
    mean.
    """
    schemes = [Scheme(s) for s in schemes]
    if not schemes:
        raise ConfigError("no schemes to evaluate")
    slots = trace.num_slots if slots is None else int(slots)
    if slots < 1:
        raise ConfigError("slots must be >= 1")
    if slots > trace.num_slots:
        raise TraceTooShort(f"trace has {trace.num_slots} slots, evaluation needs {slots}")
    U, B, L = trace.dims
    cell = cell or CellConfig(num_users=U, num_prbs=B, data_symbols=L)
    metrics = metrics or MetricsConfig()
    policies = _resolve_policies(schemes, checkpoints)
    if t_norm is None:
        t_norm = calibrate_t_norm(trace, cell, metrics, link, table, seed=seed)

    report = EvalReport(t_norm=float(t_norm))
    for scheme, label in zip(schemes, _labels(schemes)):
        env = SlotEnv(trace, cell, t_norm, metrics, link, table, seed=np.random.SeedSequence([seed, scheme.code]))
        pair = policies[scheme]
        thr = np.zeros(slots)
        jain = np.zeros(slots)
        reward = np.zeros(slots)
        rate = np.zeros((slots, U))
        smoothed = np.zeros((slots, U))
        digest = hashlib.sha256()
        for t in range(slots):
            digest.update(env.g.tobytes())
            x, p = greedy_decision(env, scheme.mode, pair)
            res = env.step(x, p)
            thr[t] = res.cell_throughput
            jain[t] = res.jain
            reward[t] = res.reward
            rate[t] = res.rate
            smoothed[t] = res.smoothed
        report.runs.append(SchemeRun(scheme, label, thr, jain, reward, rate, smoothed, digest.hexdigest()))
    return report


# -- summaries ----------------------------------------------------------------


def nearest_rank(values, q: float) -> float:
    """Nearest-rank quantile: the ``ceil(q n)``-th smallest value (1-based)."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    if v.size == 0:
        raise ValueError("empty sample")
    k = max(1, math.ceil(q * v.size))
    return float(v[k - 1])


def lower_median(values) -> float:
    v = np.sort(np.asarray(values, dtype=np.float64))
    if v.size == 0:
        raise ValueError("empty sample")
    return float(v[(v.size - 1) // 2])


def empirical_cdf(values) -> tuple[np.ndarray, np.ndarray]:
    """Sorted values and their cumulative probabilities ``i/n``, i = 1..n."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    return v, np.arange(1, v.size + 1) / v.size


@dataclass(frozen=True)
class Summary:
    mean: float
    median: float
    p10: float
    jain_mean: float
    jain_median: float
    delta_vs_pf_pct: float | None

    def to_dict(self) -> dict:
        return {
            "mean_throughput_bps": self.mean,
            "median_throughput_bps": self.median,
            "p10_throughput_bps": self.p10,
            "jain_mean": self.jain_mean,
            "jain_median": self.jain_median,
            "delta_vs_pf_pct": self.delta_vs_pf_pct,
        }


def summarize(report: EvalReport) -> tuple[dict, dict]:
    """Per-scheme :class:`Summary` and CDF tables, both keyed by run label.

    The throughput gain is relative to the first PF run in the report, and
    ``None`` when PF was not evaluated.
    """
    if not report.runs or any(r.num_slots == 0 for r in report.runs):
        raise ValueError("cannot summarize an empty report")
    pf = next((r for r in report.runs if r.scheme is Scheme.PF), None)
    pf_mean = float(np.mean(pf.throughput)) if pf is not None else None
    summaries, cdfs = {}, {}
    for r in report.runs:
        mean = float(np.mean(r.throughput))
        delta = None
        if pf_mean is not None and pf_mean > 0:
            delta = 100.0 * (mean - pf_mean) / pf_mean
        summaries[r.label] = Summary(
            mean=mean,
            median=lower_median(r.throughput),
            p10=nearest_rank(r.throughput, 0.1),
            jain_mean=float(np.mean(r.jain)),
            jain_median=lower_median(r.jain),
            delta_vs_pf_pct=delta,
        )
        cdfs[r.label] = empirical_cdf(r.throughput)
    return summaries, cdfs


# -- files --------------------------------------------------------------------


def _per_slot_header(U: int) -> list[str]:
    return (
        ["slot", "scheme", "cell_throughput_bps", "jain", "reward"]
        + [f"R_{u}" for u in range(U)]
        + [f"T_{u}" for u in range(U)]
    )


def write_per_slot_csv(report: EvalReport, path) -> None:
    """One row per (scheme, slot); floats use ``repr`` so they round-trip exactly."""
    U = report.runs[0].rate.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(_per_slot_header(U))
        for r in report.runs:
            for t in range(r.num_slots):
                w.writerow(
                    [t, r.label, repr(float(r.throughput[t])), repr(float(r.jain[t])), repr(float(r.reward[t]))]
                    + [repr(float(v)) for v in r.rate[t]]
                    + [repr(float(v)) for v in r.smoothed[t]]
                )


def read_per_slot_csv(path) -> EvalReport:
    """Rebuild an :class:`EvalReport` (without channel digests) from a per-slot CSV."""
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if len(rows) < 2:
        raise DataError(f"{path} has no data rows")
    header = rows[0]
    U = sum(1 for h in header if h.startswith("R_"))
    if U == 0 or header != _per_slot_header(U):
        raise DataError(f"{path} does not look like a per-slot evaluation CSV")
    grouped: dict[str, list] = {}
    try:
        for i, row in enumerate(rows[1:], start=2):
            if len(row) != len(header):
                raise ValueError(f"line {i} has {len(row)} fields, expected {len(header)}")
            Scheme(row[1].split("_")[0])
            grouped.setdefault(row[1], []).append([float(v) for v in row[2:]])
    except ValueError as exc:
        raise DataError(f"malformed row in {path}: {exc}") from exc
    report = EvalReport()
    for label, data in grouped.items():
        a = np.asarray(data, dtype=np.float64)
        scheme = Scheme(label.split("_")[0])
        report.runs.append(SchemeRun(scheme, label, a[:, 0], a[:, 1], a[:, 2], a[:, 3 : 3 + U], a[:, 3 + U :]))
    return report


def write_summary_json(summaries: dict, path, extra: dict | None = None) -> None:
    doc = {"schemes": {k: v.to_dict() for k, v in summaries.items()}}
    if extra:
        doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_cdf_csv(cdfs: dict, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scheme", "cell_throughput_bps", "cumulative_probability"])
        for label, (v, p) in cdfs.items():
            for a, b in zip(v, p):
                w.writerow([label, repr(float(a)), repr(float(b))])
