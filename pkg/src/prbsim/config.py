"""Run configuration: strict JSON loading and hashing.

Example file (every section and key is optional)::

    {
      "seed": 0,
      "cell": {"num_prbs": 51},
      "channel": {"pathloss_db": [-104, -105, -106, -107]},
      "metrics": {"alpha": 0.5},
      "link": {"target_bler": 0.1},
      "mcs_table": null,
      "ppo": {"phase1": {"iterations": 150}, "phase3": {"lr": 1e-4}},
      "validation": {"every": 10, "slots": 800},
      "paths": {"trace": "trace.bin", "checkpoints": "checkpoints", "reports": "reports"}
    }

Unknown keys are rejected at every level.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .channel import ChannelGenConfig
from .errors import ConfigError
from .grid import CellConfig, dbm_to_watt
from .metrics import MetricsConfig
from .phymac import LinkConfig, McsTable, default_mcs_table
from .rl.curriculum import ValidationConfig
from .rl.ppo import PpoConfig

__all__ = ["Paths", "RunConfig", "load_run_config", "run_config_from_dict", "PHASE_KEYS"]

PHASE_KEYS = ("phase1", "phase2", "phase3", "power_only")
# added to the run seed when a phase section does not set its own seed
_PHASE_SEED_OFFSET = {"phase1": 0, "phase2": 1, "phase3": 2, "power_only": 3}
_PHASE_DEFAULTS = {
    "phase1": {"iterations": 150},
    "phase2": {"iterations": 150},
    "phase3": {"iterations": 100, "lr": 1e-4},
    "power_only": {"iterations": 150},
}


@dataclass(frozen=True)
class Paths:
    trace: str = "trace.bin"
    checkpoints: str = "checkpoints"
    reports: str = "reports"


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    cell: CellConfig = field(default_factory=CellConfig)
    channel: ChannelGenConfig = field(default_factory=ChannelGenConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    link: LinkConfig = field(default_factory=LinkConfig)
    mcs_table: str | None = None
    # per-phase overrides of the PpoConfig defaults, without seeds resolved
    ppo: dict = field(default_factory=lambda: {k: dict(v) for k, v in _PHASE_DEFAULTS.items()})
    validation: ValidationConfig | None = field(default_factory=lambda: ValidationConfig(every=10, slots=800))
    paths: Paths = field(default_factory=Paths)

    def phase_config(self, key: str, seed: int | None = None) -> PpoConfig:
        """PpoConfig of one phase; unset seeds derive from the run seed."""
        if key not in PHASE_KEYS:
            raise ConfigError(f"unknown phase {key!r}")
        values = dict(self.ppo.get(key, {}))
        base = self.seed if seed is None else seed
        values.setdefault("seed", base + _PHASE_SEED_OFFSET[key])
        return _build(PpoConfig, values, f"ppo.{key}")

    def table(self) -> McsTable:
        return McsTable.from_csv(self.mcs_table) if self.mcs_table else default_mcs_table()

    def to_dict(self) -> dict:
        def plain(obj):
            if dataclasses.is_dataclass(obj):
                return {f.name: plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
            if isinstance(obj, dict):
                return {k: plain(v) for k, v in obj.items()}
            if isinstance(obj, (list, tuple)):
                return [plain(v) for v in obj]
            return obj

        return plain(self)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _build(cls, values: dict, where: str):
    if not isinstance(values, dict):
        raise ConfigError(f"{where}: expected an object, got {type(values).__name__}")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    try:
        return cls(**values)
    except ConfigError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _cell(values: dict) -> CellConfig:
    values = dict(values)
    # the file states the physical quantities in the units people quote them in
    if "p_max_dbm" in values:
        values["p_max"] = dbm_to_watt(float(values.pop("p_max_dbm")))
    return _build(CellConfig, values, "cell")


def run_config_from_dict(doc: dict, base_dir: Path | None = None) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    allowed = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise ConfigError(f"unknown top-level key(s) {', '.join(unknown)}")
    kw = {}
    if "seed" in doc:
        if not isinstance(doc["seed"], int) or isinstance(doc["seed"], bool):
            raise ConfigError("seed must be an integer")
        kw["seed"] = doc["seed"]
    if "cell" in doc:
        kw["cell"] = _cell(doc["cell"])
    if "channel" in doc:
        kw["channel"] = _build(ChannelGenConfig, doc["channel"], "channel")
    if "metrics" in doc:
        kw["metrics"] = _build(MetricsConfig, doc["metrics"], "metrics")
    if "link" in doc:
        kw["link"] = _build(LinkConfig, doc["link"], "link")
    if doc.get("mcs_table") is not None:
        path = Path(doc["mcs_table"])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        if not path.is_file():
            raise ConfigError(f"mcs_table file not found: {path}")
        kw["mcs_table"] = str(path)
    if "ppo" in doc:
        ppo = doc["ppo"]
        if not isinstance(ppo, dict):
            raise ConfigError("ppo must be an object keyed by phase")
        bad = sorted(set(ppo) - set(PHASE_KEYS))
        if bad:
            raise ConfigError(f"ppo: unknown phase key(s) {', '.join(bad)}")
        merged = {k: dict(v) for k, v in _PHASE_DEFAULTS.items()}
        for k, v in ppo.items():
            if not isinstance(v, dict):
                raise ConfigError(f"ppo.{k}: expected an object")
            # validate eagerly so errors surface at load time
            _build(PpoConfig, {**merged[k], **v}, f"ppo.{k}")
            merged[k].update(v)
        kw["ppo"] = merged
    if "validation" in doc:
        v = doc["validation"]
        kw["validation"] = None if v is None else _build(ValidationConfig, v, "validation")
    if "paths" in doc:
        kw["paths"] = _build(Paths, doc["paths"], "paths")
    return RunConfig(**kw)


def load_run_config(path) -> RunConfig:
    """Parse and validate a JSON run config; raises ConfigError on any problem."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return run_config_from_dict(doc, base_dir=path.parent)
