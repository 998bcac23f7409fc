"""Command-line entry point: ``ippo-uav {train,eval,ablate}``.

Exit status is 0 on success, 2 for configuration errors (bad flags, unreadable
or invalid scenario, checkpoint that does not match the network) and 3 when a
run aborts at runtime (non-finite loss, I/O failure while writing artifacts).
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .checkpoint import CheckpointError
from .experiment import ExperimentConfig, run_ablate, run_eval, run_train
from .mdp import RewardWeights
from .rollout import EnvConfig
from .trainer import TrainerConfig, TrainingAborted
from .world import ScenarioError, bundled_scenario, load_scenario_file

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

log = logging.getLogger("ippo_uav")


class ConfigError(Exception):
    pass


def resolve_scenario(ref: str):
    """A scenario file path, or the name of a bundled scenario."""
    path = Path(ref)
    if path.is_file():
        return load_scenario_file(path)
    if path.suffix or "/" in ref:
        raise ConfigError(f"scenario file not found: {ref}")
    try:
        return bundled_scenario(ref)
    except FileNotFoundError:
        raise ConfigError(f"no scenario file or bundled scenario named {ref!r}") from None


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scenario", action="append", required=True, metavar="PATH",
                   help="scenario file or bundled name (open, corridor5, slalom9, canyon); train accepts several")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--episodes", type=int, help="max training episodes")
    p.add_argument("--batch", type=int, help="transitions per update batch")
    p.add_argument("--minibatch", type=int, help="minibatch size within each epoch")
    p.add_argument("--entropy-mode", choices=("adaptive", "fixed"))
    p.add_argument("--entropy-coeff", type=float)
    p.add_argument("--reward-weights", metavar="C1,C2,C3,C4")
    p.add_argument("--track-mode", choices=("literal", "heading"))
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--eval-episodes", type=int, default=100)
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ippo-uav", description="Train and evaluate the waypoint policy.")
    sub = parser.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("train", help="pretrain the encoder, then run the training loop"))
    ev = sub.add_parser("eval", help="greedy evaluation of a checkpoint")
    _common(ev)
    ev.add_argument("--checkpoint", required=True, metavar="FILE")
    ab = sub.add_parser("ablate", help="reward or entropy ablation")
    _common(ab)
    ab.add_argument("--mode", choices=("reward", "entropy"), required=True)
    return parser


def build_config(args) -> ExperimentConfig:
    scenarios = [resolve_scenario(s) for s in args.scenario]
    overrides = {}
    for flag, name in (("episodes", "max_episodes"), ("batch", "batch_size"), ("minibatch", "minibatch_size"),
                       ("entropy_mode", "entropy_mode"), ("entropy_coeff", "entropy_coeff")):
        value = getattr(args, flag)
        if value is not None:
            overrides[name] = value
    trainer = replace(TrainerConfig(), seed=args.seed, **overrides)
    env = EnvConfig()
    if args.reward_weights is not None:
        env = replace(env, weights=RewardWeights.parse(args.reward_weights))
    if args.track_mode is not None:
        env = replace(env, track_mode=args.track_mode)
    if args.workers < 1 or args.eval_episodes < 1:
        raise ConfigError("--workers and --eval-episodes must be >= 1")
    trainer.validate()
    return ExperimentConfig(scenarios, trainer=trainer, env=env, seed=args.seed, out_dir=Path(args.out),
                            eval_episodes=args.eval_episodes, workers=args.workers)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on bad usage already; keep --help at 0
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        config = build_config(args)
    except (ConfigError, ScenarioError, ValueError, OSError) as exc:
        print(f"ippo-uav: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "train":
            result = run_train(config)
            print(f"trained {len(result.rows)} episodes; final-20 success {result.success_rate(20):.3f}; "
                  f"artifacts in {config.out_dir}")
        elif args.command == "eval":
            try:
                result = run_eval(config, args.checkpoint)
            except (CheckpointError, FileNotFoundError) as exc:
                print(f"ippo-uav: config error: {exc}", file=sys.stderr)
                return EXIT_CONFIG
            print(f"success rate {result.success_rate:.3f}; mean smoothness {result.mean_smoothness:.4f}")
        else:
            path = run_ablate(config, args.mode)
            print(f"wrote {path}")
    except TrainingAborted as exc:
        print(f"ippo-uav: aborted: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"ippo-uav: I/O failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
