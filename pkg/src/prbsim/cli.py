"""Command-line entry points: ``gen-channels``, ``train``, ``eval`` and ``report``.

Exit codes: 0 success, 2 usage or configuration error, 3 data error
(missing/corrupt trace, checkpoint or report), 4 numeric failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from pathlib import Path

from .channel import generate_trace, load_trace, save_trace
from .config import RunConfig, load_run_config
from .env import SlotEnv, calibrate_t_norm
from .errors import ConfigError, DataError, NumericError
from .evaluation import (
    Scheme,
    parse_schemes,
    read_per_slot_csv,
    run_matched_eval,
    summarize,
    write_cdf_csv,
    write_per_slot_csv,
    write_summary_json,
)
from .rl.curriculum import load_checkpoint, run_curriculum, save_checkpoint, train_power_only

log = logging.getLogger("prbsim")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
SEED_ENV = "PRBSIM_SEED"


# -- helpers --------------------------------------------------------------------


def _resolve_config(args) -> RunConfig:
    cfg = load_run_config(args.config) if args.config else RunConfig()
    seed = args.seed
    if seed is None and os.environ.get(SEED_ENV, "").strip():
        try:
            seed = int(os.environ[SEED_ENV])
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {os.environ[SEED_ENV]!r}") from None
    if seed is not None:
        cfg = dataclasses.replace(cfg, seed=seed)
    print(f"config hash: {cfg.config_hash()}")
    return cfg


def _env_factory(cfg: RunConfig, trace_path):
    trace = load_trace(trace_path)
    table = cfg.table()
    t_norm = calibrate_t_norm(trace, cfg.cell, cfg.metrics, cfg.link, table, seed=cfg.seed)

    def factory(seed_seq):
        return SlotEnv(trace, cfg.cell, t_norm, cfg.metrics, cfg.link, table, seed=seed_seq)

    return factory, trace, t_norm


def _parse_phases(text: str) -> tuple[int, ...]:
    try:
        phases = tuple(sorted({int(t) for t in text.split(",") if t.strip()}))
    except ValueError:
        raise ConfigError(f"--phases must be a comma list drawn from 1,2,3; got {text!r}") from None
    if not phases or any(p not in (1, 2, 3) for p in phases):
        raise ConfigError(f"--phases must be a comma list drawn from 1,2,3; got {text!r}")
    return phases


def _with_iterations(cfg, iterations):
    return cfg if iterations is None else dataclasses.replace(cfg, iterations=iterations)


# -- commands ------------------------------------------------------------------


def cmd_gen_channels(args) -> int:
    cfg = _resolve_config(args)
    out = Path(args.out or cfg.paths.trace)
    gen = dataclasses.replace(cfg.channel, seed=cfg.seed)
    trace = generate_trace(gen, cfg.cell, args.slots)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_trace(trace, out)
    U, B, L = trace.dims
    print(f"wrote {out}: H={trace.num_slots} U={U} B={B} L={L} seed={trace.seed} params={trace.params_hash.hex()}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    out_dir = Path(args.out_dir or cfg.paths.checkpoints)
    out_dir.mkdir(parents=True, exist_ok=True)
    factory, _, t_norm = _env_factory(cfg, args.trace or cfg.paths.trace)
    print(f"T_norm: {t_norm:.6g} bit/s")
    meta_cfg = cfg.to_dict()

    if args.ablation == "power-only":
        if args.resume:
            raise ConfigError("--resume is not supported with --ablation power-only")
        pcfg = _with_iterations(cfg.phase_config("power_only"), args.iterations)
        pair, tlog = train_power_only(factory, pcfg, seed=cfg.seed, validation=cfg.validation)
        save_checkpoint(out_dir / "power_only.npz", pair, meta_cfg, kind="power_only")
        tlog.write_csv(out_dir / "training_log_power_only.csv")
        print(f"wrote {out_dir / 'power_only.npz'} ({len(tlog)} iterations, {tlog.env_slots} env slots)")
        return EXIT_OK

    phases = _parse_phases(args.phases)
    init = None
    if args.resume:
        init, meta = load_checkpoint(args.resume)
        if meta.get("kind") != "curriculum":
            raise DataError(f"{args.resume} is not a curriculum checkpoint")
        print(f"resuming from {args.resume} (phase {meta.get('phase')})")
    phase_cfgs = {p: _with_iterations(cfg.phase_config(f"phase{p}"), args.iterations) for p in phases}

    def on_phase_end(phase, pair):
        path = out_dir / f"phase{phase}.npz"
        save_checkpoint(path, pair, meta_cfg, kind="curriculum")
        print(f"wrote {path}")

    _, tlog = run_curriculum(
        factory, phase_cfgs, phases, init=init, on_phase_end=on_phase_end, seed=cfg.seed,
        validation=cfg.validation,
    )
    tlog.write_csv(out_dir / "training_log.csv")
    print(f"training log: {len(tlog)} iterations, {tlog.env_slots} env slots")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _resolve_config(args)
    schemes = parse_schemes(args.schemes)
    ckpt_dir = Path(args.checkpoints or cfg.paths.checkpoints)
    checkpoints = {s: ckpt_dir / f"{s.checkpoint_name}.npz" for s in schemes if s is not Scheme.PF}
    trace = load_trace(args.trace or cfg.paths.trace)
    report = run_matched_eval(
        trace, schemes, checkpoints, slots=args.slots, seed=cfg.seed,
        cell=cfg.cell, metrics=cfg.metrics, link=cfg.link, table=cfg.table(),
    )
    out = Path(args.out or cfg.paths.reports)
    out.mkdir(parents=True, exist_ok=True)
    write_per_slot_csv(report, out / "per_slot.csv")
    summaries, cdfs = summarize(report)
    write_summary_json(summaries, out / "summary.json", {"t_norm_bps": report.t_norm, "config_hash": cfg.config_hash()})
    write_cdf_csv(cdfs, out / "cdf.csv")
    _print_summary(summaries)
    print(f"reports in {out}")
    return EXIT_OK


def cmd_report(args) -> int:
    report = read_per_slot_csv(args.per_slot)
    summaries, cdfs = summarize(report)
    out = Path(args.out) if args.out else Path(args.per_slot).parent
    out.mkdir(parents=True, exist_ok=True)
    write_summary_json(summaries, out / "summary.json")
    write_cdf_csv(cdfs, out / "cdf.csv")
    _print_summary(summaries)
    return EXIT_OK


def _print_summary(summaries: dict) -> None:
    print(f"{'scheme':<10}{'mean Mbps':>11}{'median':>10}{'p10':>10}{'Jain':>8}{'J50':>8}{'dT %':>8}")
    for label, s in summaries.items():
        delta = "" if s.delta_vs_pf_pct is None else f"{s.delta_vs_pf_pct:+.2f}"
        print(
            f"{label:<10}{s.mean / 1e6:>11.2f}{s.median / 1e6:>10.2f}{s.p10 / 1e6:>10.2f}"
            f"{s.jain_mean:>8.4f}{s.jain_median:>8.4f}{delta:>8}"
        )


# -- parser ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="prbsim", description="Single-cell downlink PRB/power control simulator.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON run config (defaults are used when omitted)")
        p.add_argument("--seed", type=int, default=None, help=f"run seed (fallback: ${SEED_ENV}, then config)")

    p = sub.add_parser("gen-channels", help="generate and cache a channel trace")
    common(p)
    p.add_argument("--slots", type=int, required=True, help="number of slots H")
    p.add_argument("--out", help="trace path (default: config paths.trace)")
    p.set_defaults(func=cmd_gen_channels)

    p = sub.add_parser("train", help="run the training curriculum or the power-only ablation")
    common(p)
    p.add_argument("--trace", help="training trace (default: config paths.trace)")
    p.add_argument("--phases", default="1,2,3", help="comma list of curriculum phases (default 1,2,3)")
    p.add_argument("--ablation", choices=["power-only"], help="train the power policy on the PF schedule instead")
    p.add_argument("--resume", help="curriculum checkpoint to continue from")
    p.add_argument("--iterations", type=int, help="override the PPO iterations of every phase")
    p.add_argument("--out-dir", help="checkpoint directory (default: config paths.checkpoints)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="matched-channel evaluation of schemes")
    common(p)
    p.add_argument("--trace", help="evaluation trace (default: config paths.trace)")
    p.add_argument("--schemes", default="pf,prb,power,joint", help="comma list of pf, prb, power, joint")
    p.add_argument("--slots", type=int, help="slots to evaluate (default: whole trace)")
    p.add_argument("--checkpoints", help="directory holding phase1/phase3/power_only checkpoints")
    p.add_argument("--out", help="report directory (default: config paths.reports)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="re-summarize an existing per-slot CSV")
    p.add_argument("--per-slot", required=True, help="per-slot CSV written by eval")
    p.add_argument("--out", help="output directory (default: next to the CSV)")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
