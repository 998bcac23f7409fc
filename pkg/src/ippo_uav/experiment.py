"""Training, evaluation and ablation drivers plus their CSV/SVG artifacts."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .mdp import DISTANCE_ONLY, N_ACTIONS, RewardWeights
from .nets import NetConfig, NetworkParameters, OptimizerState, autoencoder_train_step, init_params
from .rollout import EnvConfig, UavEnv, collect_batch, collect_episode, episode_rng, normalize_advantages
from .trainer import LossReport, TrainerConfig, TrainingAborted, update
from .world import ScenarioSpec, SensorParams

log = logging.getLogger(__name__)

TRAIN_HEADER = ["episode", "steps", "return", "success", "smoothness", "L_clip", "L_vf", "L_ent",
                "L_inverse", "entropy_coeff", "ms_ratio", "grad_norm"]
EVAL_HEADER = ["episode", "steps", "return", "success", "smoothness"]
TRAJ_HEADER = ["step", "substep", "x", "y", "yaw", "action", "r_target", "r_collision", "r_dis",
               "r_track", "r_total"]


@dataclass
class ExperimentConfig:
    scenarios: list
    trainer: TrainerConfig = TrainerConfig()
    env: EnvConfig = EnvConfig()
    seed: int = 0
    out_dir: Path | None = None
    eval_episodes: int = 100
    workers: int = 1
    checkpoint_every: int = 500
    pretrain_episodes: int = 20
    pretrain_steps: int = 300
    pretrain_batch: int = 32
    pretrain_lr: float = 1e-3

    @property
    def net_config(self) -> NetConfig:
        s = self.env.sensor
        return NetConfig(height=s.height, width=s.width)


@dataclass
class MetricsRow:
    episode: int
    steps: int
    total_reward: float
    success: bool
    smoothness: float
    report: LossReport | None = None

    def csv_row(self) -> list:
        r = self.report
        losses = [r.L_clip, r.L_vf, r.L_ent, r.L_inverse, r.entropy_coeff, r.ms_ratio, r.grad_norm] if r else [math.nan] * 7
        return [self.episode, self.steps, _fmt(self.total_reward), int(self.success), _fmt(self.smoothness)] + [
            _fmt(v) for v in losses]


def _fmt(v: float) -> str:
    return repr(float(v))


@dataclass
class TrainResult:
    params: NetworkParameters
    rows: list = field(default_factory=list)
    reports: list = field(default_factory=list)
    pretrain_losses: list = field(default_factory=list)

    def success_rate(self, last: int) -> float:
        tail = self.rows[-last:]
        return sum(r.success for r in tail) / len(tail)

    def mean_return(self, last: int) -> float:
        tail = self.rows[-last:]
        return float(np.mean([r.total_reward for r in tail]))


class _EnvFactory:
    """Picks the scenario for global episode ``i`` (picklable for worker processes)."""

    def __init__(self, scenarios, env_config: EnvConfig, seed: int):
        self.scenarios = list(scenarios)
        self.env_config = env_config
        self.seed = seed

    def __call__(self, i: int) -> UavEnv:
        if len(self.scenarios) == 1:
            sc = self.scenarios[0]
        else:
            pick = np.random.default_rng(np.random.SeedSequence([self.seed, i, 7])).integers(len(self.scenarios))
            sc = self.scenarios[pick]
        return UavEnv(sc, self.env_config)


def pretrain_encoder(params: NetworkParameters, config: ExperimentConfig) -> list[float]:
    """Fit the depth autoencoder on maps seen by a uniform-random policy."""
    factory = _EnvFactory(config.scenarios, config.env, config.seed)
    uniform = np.full(N_ACTIONS, 1.0 / N_ACTIONS)
    maps = []
    for i in range(config.pretrain_episodes):
        env = factory(-1 - i)
        rng = np.random.default_rng(np.random.SeedSequence([config.seed, i, 3]))
        env.reset()
        maps.append(env.depth().normalized())
        while not env.done:
            env.step(int(rng.choice(N_ACTIONS, p=uniform)))
            maps.append(env.depth().normalized())
    maps = np.stack(maps)
    opt = OptimizerState(lr=config.pretrain_lr)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 5]))
    losses = []
    for _ in range(config.pretrain_steps):
        idx = rng.choice(len(maps), size=min(config.pretrain_batch, len(maps)), replace=False)
        losses.append(autoencoder_train_step(params, opt, maps[idx]))
    return losses


def train(config: ExperimentConfig, on_episode=None) -> TrainResult:
    """Pretrain the encoder, then alternate batch collection and updates."""
    tc = config.trainer
    tc.validate()
    params = init_params(config.net_config, seed=config.seed)
    result = TrainResult(params)
    if config.pretrain_steps > 0:
        result.pretrain_losses = pretrain_encoder(params, config)
    opt = OptimizerState(lr=tc.lr)
    update_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 11]))
    factory = _EnvFactory(config.scenarios, config.env, config.seed)
    episode = 0
    next_ckpt = config.checkpoint_every
    while episode < tc.max_episodes:
        buffer = collect_batch(factory, params, tc, config.seed, first_episode=episode,
                               max_episodes=tc.max_episodes - episode, workers=config.workers)
        if tc.normalize_advantages:
            normalize_advantages(buffer)
        try:
            reports = update(buffer, params, opt, tc, update_rng)
        except TrainingAborted as exc:
            log.error("update aborted after episode %d: %s", episode, exc)
            _append_rows(result, buffer, episode, exc.report, on_episode)
            exc.result = result
            raise
        result.reports.append(reports)
        _append_rows(result, buffer, episode, reports[-1], on_episode)
        episode += buffer.n_episodes
        if config.out_dir is not None and config.checkpoint_every and episode >= next_ckpt and episode < tc.max_episodes:
            save_checkpoint(params, Path(config.out_dir) / f"ckpt_ep{episode:05d}.ippo")
            next_ckpt += config.checkpoint_every
    return result


def _append_rows(result, buffer, first, report, on_episode):
    for k, ep in enumerate(buffer.episodes):
        row = MetricsRow(first + k, ep.steps, ep.total_reward, ep.success, ep.smoothness, report)
        result.rows.append(row)
        if on_episode is not None:
            on_episode(row)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def read_csv(path) -> list[dict]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def run_train(config: ExperimentConfig) -> TrainResult:
    """Train and write ``train.csv`` plus ``final.ippo`` into ``config.out_dir``."""
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        result = train(config)
    except TrainingAborted as exc:
        # keep what was trained so far for post-mortem
        partial = getattr(exc, "result", None)
        if partial is not None:
            write_csv(out / "train.csv", TRAIN_HEADER, [r.csv_row() for r in partial.rows])
            save_checkpoint(partial.params, out / "aborted.ippo")
        raise
    write_csv(out / "train.csv", TRAIN_HEADER, [r.csv_row() for r in result.rows])
    save_checkpoint(result.params, out / "final.ippo")
    return result


@dataclass
class EvalResult:
    episodes: list

    @property
    def success_rate(self) -> float:
        return sum(e.success for e in self.episodes) / len(self.episodes)

    @property
    def mean_smoothness(self) -> float:
        return float(np.mean([e.smoothness for e in self.episodes]))


def evaluate(params: NetworkParameters, scenario: ScenarioSpec, env_config: EnvConfig, n_episodes: int = 100,
             seed: int = 0, greedy: bool = True, policy=None) -> EvalResult:
    """Roll out ``n_episodes`` (greedy by default) without touching ``params``."""
    env = UavEnv(scenario, env_config)
    eps = [collect_episode(env, params, episode_rng(seed, 10_000_000 + i), greedy=greedy, policy=policy)
           for i in range(n_episodes)]
    return EvalResult(eps)


def run_eval(config: ExperimentConfig, checkpoint) -> EvalResult:
    """Greedy evaluation on the first scenario; writes eval CSV, trajectories and an SVG."""
    params = load_checkpoint(checkpoint, config.net_config)
    scenario = config.scenarios[0]
    result = evaluate(params, scenario, config.env, config.eval_episodes, config.seed)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "eval.csv", EVAL_HEADER,
              [[i, e.steps, _fmt(e.total_reward), int(e.success), _fmt(e.smoothness)]
               for i, e in enumerate(result.episodes)])
    traj_dir = out / "trajectories"
    traj_dir.mkdir(exist_ok=True)
    for i, e in enumerate(result.episodes):
        write_csv(traj_dir / f"episode_{i:04d}.csv", TRAJ_HEADER,
                  [list(r[:2]) + [_fmt(v) for v in r[2:5]] + [r[5]] + [_fmt(v) for v in r[6:]] for r in e.trajectory])
    from .svgplot import trajectory_svg

    (out / "trajectories.svg").write_text(
        trajectory_svg(scenario, [np.array([r[2:4] for r in e.trajectory]) for e in result.episodes]),
        encoding="utf-8")
    return result


def _variant(config: ExperimentConfig, out_sub: str | None = None, **changes) -> ExperimentConfig:
    env_changes = {k: changes.pop(k) for k in ("weights", "track_mode") if k in changes}
    cfg = replace(config, trainer=replace(config.trainer, **changes), env=replace(config.env, **env_changes))
    if out_sub is not None and config.out_dir is not None:
        cfg = replace(cfg, out_dir=Path(config.out_dir) / out_sub)
    return cfg


def reward_ablation(config: ExperimentConfig) -> dict:
    """Distance-only versus full reward on identical seeds.

    Returns ``{name: (TrainResult, EvalResult)}`` for ``distance`` and ``full``.
    """
    variants = {"distance": DISTANCE_ONLY, "full": config.env.weights}
    out = {}
    for name, weights in variants.items():
        cfg = _variant(config, name, weights=weights)
        res = train(cfg)
        out[name] = (res, evaluate(res.params, config.scenarios[0], cfg.env, config.eval_episodes, config.seed))
    return out


ENTROPY_VARIANTS = {
    "fixed_0.01": dict(entropy_mode="fixed", entropy_coeff=0.01),
    "fixed_0.001": dict(entropy_mode="fixed", entropy_coeff=0.001),
    "adaptive": dict(entropy_mode="adaptive"),
}


def entropy_ablation(config: ExperimentConfig) -> dict:
    """Fixed 0.01, fixed 0.001 and adaptive entropy under identical budgets."""
    return {name: train(_variant(config, name, **changes)) for name, changes in ENTROPY_VARIANTS.items()}


def run_ablate(config: ExperimentConfig, mode: str) -> Path:
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if mode == "reward":
        res = reward_ablation(config)
        names = list(res)
        rows = [
            ["eval_success_rate"] + [_fmt(res[n][1].success_rate) for n in names],
            ["eval_smoothness"] + [_fmt(res[n][1].mean_smoothness) for n in names],
            ["train_success_last100"] + [_fmt(res[n][0].success_rate(100)) for n in names],
        ]
        return write_csv(out / "ablation_reward.csv", ["metric"] + names, rows)
    if mode == "entropy":
        res = entropy_ablation(config)
        names = list(res)
        n = min(len(res[k].rows) for k in names)
        rows = [[i] + [_fmt(res[k].rows[i].total_reward) for k in names] for i in range(n)]
        return write_csv(out / "ablation_entropy.csv", ["episode"] + names, rows)
    raise ValueError(f"unknown ablation mode {mode!r}")
