"""Rollout collection, the three-phase curriculum and the power-only ablation.

Training modes:

``prb``      PRB agent samples quotas, equal power (phase 1)
``pow``      frozen PRB agent at its mean action, power agent samples (phase 2)
``joint``    both agents sample and learn from the same reward (phase 3)
``pow_pf``   PF schedule, power agent samples (power-only ablation)

Greedy (mean-action) decisions additionally accept ``pf``: PF schedule with
equal power.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from ..env import POW_FEATURES, PRB_FEATURES, SlotEnv
from ..errors import ConfigError, DataError
from ..power import KAPPA_MAX
from .nn import Adam, PolicyNet
from .ppo import PpoConfig, Rollout, gae_advantages, ppo_update

__all__ = [
    "Agent",
    "PolicyPair",
    "TrainingLog",
    "collect_rollout",
    "run_curriculum",
    "train_power_only",
    "save_checkpoint",
    "load_checkpoint",
    "MissingCheckpoint",
    "CHECKPOINT_VERSION",
    "KAPPA_INIT_BIAS",
    "ValidationConfig",
    "greedy_decision",
    "validate",
]

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
# raw shaping output bias at init: kappa = 8 * sigmoid(-8) ~ 0.003, i.e. practically
# uniform shaping; rank shaping costs throughput at the SNRs of interest
KAPPA_INIT_BIAS = -8.0

EnvFactory = Callable[[np.random.SeedSequence], SlotEnv]

LOG_FIELDS = [
    "iteration", "phase", "mean_reward", "mean_throughput_mbps", "mean_jain",
    "prb_policy_loss", "prb_value_loss", "prb_kl", "prb_entropy",
    "pow_policy_loss", "pow_value_loss", "pow_kl", "pow_entropy",
    "val_reward", "env_slots",
]


class MissingCheckpoint(DataError):
    pass


@dataclass
class Agent:
    net: PolicyNet
    opt: Adam

    @classmethod
    def create(cls, obs_dim: int, act_dim: int, lr: float, rng, mean_bias=None, hidden: int = 128):
        net = PolicyNet(obs_dim, act_dim, hidden=hidden, rng=rng, mean_bias=mean_bias)
        return cls(net, Adam(net.params, lr=lr))


def new_prb_agent(num_users: int, lr: float, rng, hidden: int = 128) -> Agent:
    return Agent.create(PRB_FEATURES * num_users, num_users, lr, rng, hidden=hidden)


def new_pow_agent(num_users: int, lr: float, rng, hidden: int = 128) -> Agent:
    bias = np.concatenate([np.zeros(num_users), np.full(num_users, KAPPA_INIT_BIAS)])
    return Agent.create(POW_FEATURES * num_users, 2 * num_users, lr, rng, mean_bias=bias, hidden=hidden)


@dataclass(frozen=True)
class ValidationConfig:
    """Periodic greedy evaluation that keeps the best iterate of each phase.

    Every ``every`` iterations (and after the last one) the current policies
    act at their mean for ``slots`` slots from ``start_slot`` with a fixed PHY
    seed; the parameters with the highest mean reward, the starting point
    included, are restored when the phase ends.
    """

    every: int = 10
    slots: int = 1000
    start_slot: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.every < 1 or self.slots < 1:
            raise ValueError("every and slots must be >= 1")


@dataclass
class PolicyPair:
    prb: Agent | None = None
    pow: Agent | None = None
    phase: int = 0


@dataclass
class TrainingLog:
    rows: list = field(default_factory=list)
    # environment slots spent outside the per-row accounting (initial validations)
    extra_slots: int = 0

    @property
    def env_slots(self) -> int:
        """Total environment slots consumed by training and validation."""
        return self.extra_slots + sum(int(r["env_slots"] or 0) for r in self.rows)

    def append(self, row: dict) -> None:
        self.rows.append({k: row.get(k, "") for k in LOG_FIELDS})

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=LOG_FIELDS)
            w.writeheader()
            for r in self.rows:
                w.writerow(r)

    def __len__(self):
        return len(self.rows)


# -- rollouts -------------------------------------------------------------


class _Buffer:
    def __init__(self):
        self.obs, self.act, self.logp, self.val = [], [], [], []

    def add(self, obs, act, logp, val):
        self.obs.append(obs)
        self.act.append(act)
        self.logp.append(logp)
        self.val.append(val)


def _decide_x(env: SlotEnv, mode: str, pair: PolicyPair, rng, explore: bool):
    """PRB map for the current slot; returns ``(x, obs, action, logp, value)``."""
    if mode == "pow_pf":
        return env.pf_assignment(), None, None, 0.0, 0.0
    obs = env.obs_prb()
    stochastic = explore and mode in ("prb", "joint")
    a, logp, v = pair.prb.net.act(obs, rng, deterministic=not stochastic)
    return env.prb_from_action(a), obs, a, logp, v


def greedy_decision(env: SlotEnv, mode: str, pair: PolicyPair):
    """``(x, p)`` for the current slot with every policy acting at its mean."""
    if mode in ("pf", "pow_pf"):
        x = env.pf_assignment()
    else:
        x = env.prb_from_action(pair.prb.net.forward(env.obs_prb())[0])
    if mode in ("pf", "prb"):
        return x, env.equal_power(x)
    a = pair.pow.net.forward(env.obs_pow(x))[0]
    return x, env.power_from_action(a, x)


def validate(env: SlotEnv, mode: str, pair: PolicyPair, vcfg: ValidationConfig) -> float:
    """Mean reward of the greedy policies over a fixed, replayable window."""
    env.reset(vcfg.start_slot, seed=vcfg.seed)
    total = 0.0
    for _ in range(vcfg.slots):
        x, p = greedy_decision(env, mode, pair)
        total += env.step(x, p).reward
    return total / vcfg.slots


def _bootstrap_values(env: SlotEnv, mode: str, pair: PolicyPair):
    """Value estimates of the current (not yet acted on) slot for each learner."""
    x, obs, _, _, v_prb = _decide_x(env, mode, pair, None, explore=False)
    v_pow = 0.0
    if mode != "prb":
        _, _, v_pow, _ = pair.pow.net.forward(env.obs_pow(x))
    return v_prb, v_pow


def collect_rollout(env: SlotEnv, mode: str, pair: PolicyPair, cfg: PpoConfig, rng, episode: dict):
    """Run ``cfg.horizon`` slots and build per-learner PPO batches.

    ``episode`` carries ``{"step": int}`` across calls so that episodes span
    rollouts; an episode restarts at a random trace offset every
    ``cfg.episode_len`` slots. Returns ``(batches, info)``, where ``batches``
    maps ``"prb"``/``"pow"`` to a :class:`Rollout` for every learning agent.
    """
    learn_prb = mode in ("prb", "joint")
    learn_pow = mode in ("pow", "joint", "pow_pf")
    bufs = {"prb": _Buffer(), "pow": _Buffer()}
    H = cfg.horizon
    rewards = np.zeros(H)
    dones = np.zeros(H, dtype=bool)
    next_v = {"prb": np.zeros(H), "pow": np.zeros(H)}
    scale = 1.0 - cfg.gamma if cfg.gamma < 1.0 else 1.0 / cfg.episode_len
    thr = np.zeros(H)
    jain = np.zeros(H)

    for t in range(H):
        if episode.get("step", 0) == 0:
            env.reset(int(rng.integers(env.trace.num_slots)))
        x, obs_prb, a_prb, lp_prb, v_prb = _decide_x(env, mode, pair, rng, explore=True)
        if learn_prb:
            bufs["prb"].add(obs_prb, a_prb, lp_prb, v_prb)
        if mode == "prb":
            p = env.equal_power(x)
        else:
            obs_pow = env.obs_pow(x)
            a_pow, lp_pow, v_pow = pair.pow.net.act(obs_pow, rng)
            bufs["pow"].add(obs_pow, a_pow, lp_pow, v_pow)
            p = env.power_from_action(a_pow, x)
        res = env.step(x, p)
        rewards[t] = scale * res.reward
        thr[t] = res.cell_throughput
        jain[t] = res.jain
        episode["step"] = episode.get("step", 0) + 1
        if episode["step"] >= cfg.episode_len:
            dones[t] = True
            v1, v2 = _bootstrap_values(env, mode, pair)
            next_v["prb"][t], next_v["pow"][t] = v1, v2
            episode["step"] = 0

    if episode["step"] == 0:
        last = {"prb": 0.0, "pow": 0.0}  # final step already bootstrapped via next_v
    else:
        last = dict(zip(("prb", "pow"), _bootstrap_values(env, mode, pair)))
    batches = {}
    for name, learn in (("prb", learn_prb), ("pow", learn_pow)):
        if not learn:
            continue
        b = bufs[name]
        values = np.append(np.asarray(b.val), last[name])
        adv, ret = gae_advantages(rewards, values, cfg.gamma, cfg.lam, dones, next_v[name])
        batches[name] = Rollout(
            np.asarray(b.obs), np.asarray(b.act), np.asarray(b.logp), adv, ret
        )
    info = {
        "mean_reward": float(np.mean(rewards) / scale),
        "mean_throughput_mbps": float(thr.mean() / 1e6),
        "mean_jain": float(jain.mean()),
    }
    return batches, info


def _snapshot(pair: PolicyPair, names) -> dict:
    return {n: (getattr(pair, n).net.copy_params(), getattr(pair, n).opt.state()) for n in names}


def _restore(pair: PolicyPair, snap: dict) -> None:
    for n, (params, opt_state) in snap.items():
        getattr(pair, n).net.load_params(params)
        getattr(pair, n).opt.load_state(opt_state)


def _train(
    env: SlotEnv,
    mode: str,
    pair: PolicyPair,
    cfg: PpoConfig,
    phase: int,
    tlog: TrainingLog,
    validation: ValidationConfig | None = None,
    val_env: SlotEnv | None = None,
):
    ss = np.random.SeedSequence(cfg.seed)
    roll_rng, upd_rng = (np.random.default_rng(s) for s in ss.spawn(2))
    learners = [n for n, on in (("prb", mode in ("prb", "joint")), ("pow", mode in ("pow", "joint", "pow_pf"))) if on]
    for name in learners:
        getattr(pair, name).opt.lr = cfg.lr
    best = None
    if validation is not None:
        val_env = val_env if val_env is not None else env
        best = (validate(val_env, mode, pair, validation), _snapshot(pair, learners), 0)
        tlog.extra_slots += validation.slots
    episode = {"step": 0}
    for it in range(cfg.iterations):
        batches, info = collect_rollout(env, mode, pair, cfg, roll_rng, episode)
        row = {"iteration": len(tlog) + 1, "phase": phase, **info, "env_slots": cfg.horizon}
        for name, batch in batches.items():
            agent = getattr(pair, name)
            st = ppo_update(agent.net, agent.opt, batch, cfg, upd_rng)
            row.update({f"{name}_{k}": st[k] for k in ("policy_loss", "value_loss", "kl", "entropy")})
        if validation is not None and ((it + 1) % validation.every == 0 or it + 1 == cfg.iterations):
            score = validate(val_env, mode, pair, validation)
            row["val_reward"] = score
            row["env_slots"] += validation.slots
            if score > best[0]:
                best = (score, _snapshot(pair, learners), it + 1)
        tlog.append(row)
        if (it + 1) % 20 == 0 or it == 0:
            log.info(
                "phase %s iter %d/%d reward %.4f thr %.2f Mbps jain %.4f",
                phase, it + 1, cfg.iterations, info["mean_reward"],
                info["mean_throughput_mbps"], info["mean_jain"],
            )
    if best is not None:
        _restore(pair, best[1])
        log.info("phase %s keeps iterate %d (validation reward %.4f)", phase, best[2], best[0])


def run_curriculum(
    env_factory: EnvFactory,
    phase_cfgs: dict,
    phases=(1, 2, 3),
    init: PolicyPair | None = None,
    on_phase_end: Callable[[int, PolicyPair], None] | None = None,
    seed: int = 0,
    hidden: int = 128,
    validation: ValidationConfig | None = None,
) -> tuple[PolicyPair, TrainingLog]:
    """Train the PRB and power policies through the curriculum.

    Phase 1 trains the PRB agent with equal power, phase 2 trains the power
    agent with the PRB agent frozen at its mean action, phase 3 fine-tunes
    both. ``init`` resumes from a previous phase's checkpoint. With
    ``validation`` set, each phase ends on its best validated iterate.
    """
    phases = tuple(sorted(set(int(p) for p in phases)))
    if not phases or any(p not in (1, 2, 3) for p in phases):
        raise ConfigError(f"phases must be a nonempty subset of 1,2,3; got {phases}")
    for p in phases:
        if p not in phase_cfgs:
            raise ConfigError(f"missing PPO config for phase {p}")
    pair = init if init is not None else PolicyPair()
    ss = np.random.SeedSequence(seed)
    init_rngs = [np.random.default_rng(s) for s in ss.spawn(2)]
    env_seeds = ss.spawn(4)
    tlog = TrainingLog()
    probe = env_factory(env_seeds[0])
    val_env = env_factory(env_seeds[3]) if validation is not None else None
    U = probe.cell.num_users
    if pair.prb is None:
        if phases[0] != 1:
            raise ConfigError("phases 2 and 3 need a trained PRB policy (resume from phase 1)")
        pair.prb = new_prb_agent(U, phase_cfgs[1].lr, init_rngs[0], hidden)
    for phase in phases:
        cfg = phase_cfgs[phase]
        env = probe if phase == phases[0] else env_factory(env_seeds[phase - 1])
        if phase == 1:
            mode = "prb"
        elif phase == 2:
            if pair.pow is None:
                pair.pow = new_pow_agent(U, cfg.lr, init_rngs[1], hidden)
            mode = "pow"
        else:
            if pair.pow is None:
                raise ConfigError("phase 3 needs a trained power policy (run phase 2 first)")
            mode = "joint"
        _train(env, mode, pair, cfg, phase, tlog, validation, val_env)
        pair.phase = phase
        if on_phase_end is not None:
            on_phase_end(phase, pair)
    return pair, tlog


def train_power_only(
    env_factory: EnvFactory,
    cfg: PpoConfig,
    seed: int = 0,
    hidden: int = 128,
    validation: ValidationConfig | None = None,
):
    """Power policy trained on top of the PF scheduler (power-only ablation)."""
    ss = np.random.SeedSequence([seed, 4])
    env_seed, init_seed, val_seed = ss.spawn(3)
    env = env_factory(env_seed)
    pair = PolicyPair(pow=new_pow_agent(env.cell.num_users, cfg.lr, np.random.default_rng(init_seed), hidden))
    tlog = TrainingLog()
    val_env = env_factory(val_seed) if validation is not None else None
    _train(env, "pow_pf", pair, cfg, 0, tlog, validation, val_env)
    return pair, tlog


# -- checkpoints ------------------------------------------------------------


def config_hash(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()[:16]


def save_checkpoint(path, pair: PolicyPair, config: dict | None = None, kind: str = "curriculum") -> None:
    """Write all weights, optimizer states and metadata to one ``.npz`` file."""
    arrays = {}
    agents = {}
    for name in ("prb", "pow"):
        agent = getattr(pair, name)
        if agent is None:
            continue
        net = agent.net
        agents[name] = {"obs_dim": net.obs_dim, "act_dim": net.act_dim, "hidden": net.hidden}
        for k, v in net.params.items():
            arrays[f"{name}/{k}"] = v
        for k, v in agent.opt.state().items():
            arrays[f"{name}_opt/{k}"] = v
    meta = {
        "version": CHECKPOINT_VERSION,
        "kind": kind,
        "phase": pair.phase,
        "agents": agents,
        "config_hash": config_hash(config or {}),
        "kappa_max": KAPPA_MAX,
    }
    arrays["__meta__"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path) -> tuple[PolicyPair, dict]:
    path = Path(path)
    if not path.exists():
        raise MissingCheckpoint(f"checkpoint not found: {path}")
    try:
        data = np.load(path, allow_pickle=False)
        meta = json.loads(bytes(data["__meta__"]).decode())
    except Exception as exc:  # noqa: BLE001 - any parse failure is a data error
        raise DataError(f"unreadable checkpoint {path}: {exc}") from exc
    if meta.get("version") != CHECKPOINT_VERSION:
        raise DataError(f"unsupported checkpoint version {meta.get('version')}")
    pair = PolicyPair(phase=int(meta.get("phase", 0)))
    for name, dims in meta["agents"].items():
        net = PolicyNet(dims["obs_dim"], dims["act_dim"], hidden=dims["hidden"], zero=True)
        net.load_params({k: data[f"{name}/{k}"] for k in PolicyNet.PARAM_NAMES})
        opt = Adam(net.params)
        opt.load_state({k.split("/", 1)[1]: data[k] for k in data.files if k.startswith(f"{name}_opt/")})
        setattr(pair, name, Agent(net, opt))
    return pair, meta
