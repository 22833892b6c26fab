"""Command-line entry point (``irs-ofdm``)."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import trainer
from .config import BASELINES, ExperimentConfig, apply_overrides, config_from_dict, load_config

log = logging.getLogger("irs_ofdm")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="INI file with [experiment]/[env]/[mdqn]/[ddpg] sections")
    p.add_argument("--seed", type=int, help="base seed (non-negative)")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--episodes", type=int, help="training episodes")
    p.add_argument("--baseline", choices=BASELINES, help="scheme to run")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override any config field, e.g. env.N=32 or mdqn.lr=0.001 (repeatable)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="irs-ofdm", description="IRS-assisted OFDM resource allocation with MDQN-DDPG")
    sub = parser.add_subparsers(dest="command", required=True)

    _common(sub.add_parser("train", help="train the learned scheme (or --baseline variant)"))
    p = sub.add_parser("evaluate", help="greedy rollouts of saved checkpoints")
    _common(p)
    p.add_argument("--checkpoint", type=Path, required=True, help="run directory or its checkpoints/ folder")
    p.add_argument("--eval-episodes", type=int)
    _common(sub.add_parser("baseline", help="run one baseline scheme"))
    for name, axis in (("sweep-power", "power"), ("sweep-elements", "elements")):
        p = sub.add_parser(name, help=f"sweep over the {axis} axis")
        _common(p)
        p.set_defaults(axis=axis)
        p.add_argument("--values", help="comma-separated axis values (default: full range)")
        p.add_argument("--schemes", default=",".join(BASELINES), help="comma-separated schemes")
        p.add_argument("--seeds", type=int, help="number of paired seeds")
        p.add_argument("--workers", type=int, help="parallel worker processes")
    p = sub.add_parser("oracle-check", help="MDQN vs exhaustive assignment on frozen tiny instances")
    _common(p)
    p.add_argument("--trials", type=int, default=20, help="number of seeds")
    p.add_argument("--steps", type=int, default=2000, help="MDQN training steps per seed")
    return parser


def resolve_config(args) -> ExperimentConfig:
    if args.seed is not None and args.seed < 0:
        raise ValueError("--seed must be non-negative")
    cfg = load_config(args.config, args.overrides)
    flags = {"seed": args.seed, "episodes": args.episodes, "baseline": args.baseline, "out_dir": str(args.out) if args.out else None}
    return cfg.replace(**{k: v for k, v in flags.items() if v is not None})


def _progress(row) -> None:
    log.info("episode %d  reward %.4g  sum-rate %.4g  violations %d", row.episode, row.mean_reward, row.sum_rate, row.violations)


def _out(cfg, default: str) -> Path:
    return Path(cfg.out_dir or default)


def cmd_train(args, cfg) -> int:
    out = _out(cfg, "runs/train")
    result = trainer.run_baseline(cfg.baseline, cfg, out_dir=out, progress=_progress)
    last = result.metrics[-1]
    print(f"{len(result.metrics)} episodes, final sum rate {last.sum_rate:.6g} bit/s -> {out}")
    return 0


def cmd_evaluate(args, cfg) -> int:
    ckpt = args.checkpoint
    if (ckpt / "checkpoints").is_dir():
        ckpt = ckpt / "checkpoints"
    manifest = ckpt.parent / "run.json"
    if args.config is None and manifest.exists():
        # reuse the training configuration; command-line flags still win
        cfg = config_from_dict(json.loads(manifest.read_text())["config"])
        cfg = apply_overrides(cfg, args.overrides)
        if args.seed is not None:
            cfg = cfg.replace(seed=args.seed)
    if cfg.baseline == "random":
        raise ValueError("the random baseline has no checkpoints to evaluate")
    cfg = trainer.scheme_config(cfg, cfg.baseline)
    agents = trainer.load_agents(cfg, ckpt)
    rows = trainer.evaluate(agents, cfg, args.eval_episodes)
    out = _out(cfg, "runs/evaluate") if args.out is None else args.out
    out.mkdir(parents=True, exist_ok=True)
    trainer.write_metrics(rows, out / "metrics.csv")
    trainer.write_manifest(cfg, out / "run.json", checkpoint=str(ckpt))
    mean = sum(r.sum_rate for r in rows) / len(rows)
    print(f"evaluated {len(rows)} episodes, mean sum rate {mean:.6g} bit/s -> {out}")
    return 0


def cmd_baseline(args, cfg) -> int:
    if args.baseline is None:
        raise ValueError("baseline needs --baseline KIND")
    return cmd_train(args, cfg)


def cmd_sweep(args, cfg) -> int:
    values = None
    if args.values:
        cast = float if args.axis == "power" else int
        values = tuple(cast(v) for v in args.values.split(","))
    schemes = tuple(s.strip() for s in args.schemes.split(","))
    bad = [s for s in schemes if s not in BASELINES]
    if bad:
        raise ValueError(f"unknown schemes {bad}")
    if args.seeds is not None:
        cfg = cfg.replace(n_seeds=args.seeds)
    if args.workers is not None:
        cfg = cfg.replace(workers=args.workers)
    out = _out(cfg, f"runs/sweep-{args.axis}")
    rows = trainer.sweep(cfg, args.axis, values, schemes, out_dir=out)
    trainer.write_manifest(cfg, out / "run.json", axis=args.axis, schemes=list(schemes))
    for r in rows:
        print(f"{args.axis}={r.axis_value:<6g} {r.scheme:<18} mean {r.mean:.6g}  std {r.std:.3g}  n={r.n_seeds}")
    return 0


def cmd_oracle(args, cfg) -> int:
    out = _out(cfg, "runs/oracle-check")
    out.mkdir(parents=True, exist_ok=True)
    outcomes = [trainer.oracle_check(cfg.seed + i, steps=args.steps) for i in range(args.trials)]
    with open(out / "oracle.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seed", "learned", "optimal", "learned_score", "optimal_score", "agrees"])
        for o in outcomes:
            w.writerow([o.seed, " ".join(map(str, o.learned)), " ".join(map(str, o.optimal)), repr(o.learned_score), repr(o.optimal_score), int(o.agrees)])
    hits = sum(o.agrees for o in outcomes)
    print(f"oracle agreement {hits}/{len(outcomes)} -> {out / 'oracle.csv'}")
    return 0


COMMANDS = {
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "baseline": cmd_baseline,
    "sweep-power": cmd_sweep,
    "sweep-elements": cmd_sweep,
    "oracle-check": cmd_oracle,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](args, cfg)
    except (ValueError, KeyError, TypeError, FileNotFoundError, trainer.TrainingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
