"""Episode and batch collection under the current policy."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .mdp import (
    RewardBreakdown,
    RewardWeights,
    StepContext,
    action_to_waypoint,
    build_state,
    compute_reward,
    target_features,
)
from .nets import NetworkParameters, policy_forward, value_forward
from .trainer import TrainerConfig, inferring_advantage, returns_to_go
from .world import (
    KinematicParams,
    ScenarioSpec,
    SensorParams,
    StepEvents,
    UavKinematicState,
    check_termination,
    raycast_depth,
    step_to_waypoint,
    wrap_angle,
)


@dataclass(frozen=True)
class EnvConfig:
    kin: KinematicParams = KinematicParams()
    sensor: SensorParams = SensorParams()
    waypoint_distance: float = 50.0
    weights: RewardWeights = RewardWeights()
    track_mode: str = "literal"
    bearing_frame: str = "world"  # or "body"


class UavEnv:
    """One scenario wrapped as an episodic MDP."""

    def __init__(self, scenario: ScenarioSpec, config: EnvConfig = EnvConfig()):
        self.scenario = scenario
        self.config = config
        self.reset()

    def reset(self) -> UavKinematicState:
        self.state = self.scenario.start
        self.takeoff = (self.state.x, self.state.y)
        self.last_waypoint = None
        self.steps = 0
        self.done = False
        self._ctx = self._context(self.state)
        return self.state

    def _context(self, s: UavKinematicState) -> StepContext:
        tx, ty = self.scenario.target
        ox, oy = self.takeoff
        d = target_features((s.x, s.y), (tx, ty), self.scenario.d_max).d
        return StepContext(d, (s.x - ox, s.y - oy), (tx - ox, ty - oy))

    def depth(self):
        return raycast_depth(self.state, self.scenario.field, self.config.sensor)

    def observe(self, encoder: NetworkParameters) -> tuple[np.ndarray, np.ndarray]:
        """State vector and the normalized depth image it was built from."""
        depth = self.depth()
        yaw = self.state.yaw if self.config.bearing_frame == "body" else None
        tf = target_features((self.state.x, self.state.y), self.scenario.target, self.scenario.d_max, yaw)
        return build_state(depth, encoder, tf), depth.normalized()

    def step(self, action: int) -> tuple[RewardBreakdown, StepEvents]:
        if self.done:
            raise RuntimeError("step() on a finished episode")
        sc = self.scenario
        wp = action_to_waypoint(int(action), self.state, self.last_waypoint, self.config.waypoint_distance)
        new_state, ev = step_to_waypoint(self.state, wp, sc.field, sc.target, self.config.kin, sc.capture_radius)
        self.steps += 1
        term = check_termination(new_state, sc.field, sc.target, sc, self.steps)
        events = StepEvents(
            collided=ev.collided,
            reached_target=ev.reached_target and not ev.collided,
            exceeded_cap=term.exceeded_cap and not (ev.collided or ev.reached_target),
            out_of_bounds=ev.out_of_bounds,
            sub_path=ev.sub_path,
        )
        ctx = self._context(new_state)
        reward = compute_reward(self._ctx, ctx, events, self.config.weights, self.config.track_mode)
        self._ctx = ctx
        self.state = new_state
        self.last_waypoint = wp
        self.done = events.terminal
        return reward, events


@dataclass
class Transition:
    state: np.ndarray
    action: int
    log_prob_old: float
    reward: RewardBreakdown
    value_old: float
    done: bool
    success_episode: bool = False
    depth: np.ndarray | None = None


@dataclass
class Episode:
    transitions: list
    success: bool
    smoothness: float
    trajectory: list  # rows of (step, substep, x, y, yaw, action, *reward)

    @property
    def steps(self) -> int:
        return len(self.transitions)

    @property
    def total_reward(self) -> float:
        return float(sum(t.reward.r_total for t in self.transitions))


def sample_action(probs: np.ndarray, u: float) -> int:
    """Inverse-CDF draw from a categorical distribution given ``u`` in [0, 1)."""
    cdf = np.cumsum(probs)
    return int(min(np.searchsorted(cdf, u * cdf[-1], side="right"), len(probs) - 1))


def episode_rng(seed: int, episode_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, episode_index]))


def collect_episode(env: UavEnv, params: NetworkParameters, rng, encoder: NetworkParameters | None = None,
                    greedy: bool = False, policy=None, keep_depth: bool = False) -> Episode:
    """Run one episode from the scenario start.

    Actions are sampled by inverse CDF from ``rng`` (or argmax with
    ``greedy``). ``policy`` optionally overrides the action distribution with
    a callable ``state -> probs``.
    """
    encoder = params if encoder is None else encoder
    env.reset()
    transitions = []
    s0 = env.state
    trajectory = [(0, 0, s0.x, s0.y, s0.yaw, -1, 0.0, 0.0, 0.0, 0.0, 0.0)]
    turns = []
    success = False
    while not env.done:
        state, depth = env.observe(encoder)
        if policy is None:
            probs, logp = policy_forward(params, state)
        else:
            probs = np.asarray(policy(state), dtype=np.float64)
            with np.errstate(divide="ignore"):
                logp = np.log(probs)
        u = rng.random()
        action = int(np.argmax(probs)) if greedy else sample_action(probs, u)
        value = value_forward(params, state) if policy is None else 0.0
        yaw_before = env.state.yaw
        reward, events = env.step(action)
        turns.append(abs(wrap_angle(env.state.yaw - yaw_before)))
        for k, (x, y, yaw) in enumerate(events.sub_path[1:], start=1):
            trajectory.append((env.steps, k, x, y, yaw, action) + tuple(reward))
        transitions.append(Transition(state, action, float(logp[action]), reward, value, env.done,
                                      depth=depth if keep_depth else None))
        success = events.reached_target
    for t in transitions:
        t.success_episode = success
    return Episode(transitions, success, float(np.mean(turns)) if turns else 0.0, trajectory)


@dataclass
class RolloutBuffer:
    transitions: list = field(default_factory=list)
    bounds: list = field(default_factory=list)
    episodes: list = field(default_factory=list)
    n_success: int = 0
    returns: np.ndarray | None = None
    advantages: np.ndarray | None = None

    @property
    def n_episodes(self) -> int:
        return len(self.bounds)

    @property
    def n_transitions(self) -> int:
        return len(self.transitions)

    def add_episode(self, ep: Episode) -> None:
        start = len(self.transitions)
        self.transitions.extend(ep.transitions)
        self.bounds.append((start, len(self.transitions)))
        self.episodes.append(ep)
        self.n_success += int(ep.success)
        self._arrays = None

    def _array(self, key):
        if getattr(self, "_arrays", None) is None:
            tr = self.transitions
            self._arrays = {
                "states": np.stack([t.state for t in tr]),
                "actions": np.array([t.action for t in tr], dtype=np.intp),
                "log_probs": np.array([t.log_prob_old for t in tr]),
                "values": np.array([t.value_old for t in tr]),
                "rewards": np.array([t.reward.r_total for t in tr]),
            }
            if tr and tr[0].depth is not None:
                self._arrays["depths"] = np.stack([t.depth for t in tr])
        return self._arrays[key]

    states = property(lambda self: self._array("states"))
    actions = property(lambda self: self._array("actions"))
    log_probs = property(lambda self: self._array("log_probs"))
    values_old = property(lambda self: self._array("values"))
    rewards = property(lambda self: self._array("rewards"))
    depths = property(lambda self: self._array("depths"))

    def compute_advantages(self, config: TrainerConfig) -> None:
        rewards = self.rewards
        per_episode = [rewards[a:b] for a, b in self.bounds]
        self.returns = returns_to_go(per_episode, config.gamma)
        self.advantages = inferring_advantage(
            self.returns, self.values_old, config.advantage_mode,
            rewards=rewards, bounds=self.bounds, gamma=config.gamma, gae_lambda=config.gae_lambda,
        )


def normalize_advantages(buffer: RolloutBuffer) -> RolloutBuffer:
    """Shift/scale advantages to zero mean and unit (population) std."""
    a = buffer.advantages
    std = a.std()
    if std >= 1e-8:
        buffer.advantages = (a - a.mean()) / std
    return buffer


def collect_batch(env_factory, params: NetworkParameters, config: TrainerConfig, seed: int,
                  first_episode: int = 0, max_episodes: int | None = None, workers: int = 1) -> RolloutBuffer:
    """Collect whole episodes until at least ``config.batch_size`` transitions.

    Episode ``i`` (global index ``first_episode + i``) draws its actions from
    its own RNG substream, so results do not depend on batch boundaries.
    ``env_factory(i)`` returns the environment for global episode ``i``.
    """
    buffer = RolloutBuffer()
    keep_depth = config.finetune_encoder
    limit = math.inf if max_episodes is None else max_episodes
    idx = first_episode
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        snapshot = params.copy()
        with ProcessPoolExecutor(max_workers=workers) as pool:
            while buffer.n_transitions < config.batch_size and idx - first_episode < limit:
                n = int(min(workers, limit - (idx - first_episode)))
                jobs = [(env_factory, snapshot, seed, i, keep_depth) for i in range(idx, idx + n)]
                for ep in pool.map(_collect_job, jobs):
                    buffer.add_episode(ep)
                idx += n
    else:
        while buffer.n_transitions < config.batch_size and idx - first_episode < limit:
            ep = collect_episode(env_factory(idx), params, episode_rng(seed, idx), keep_depth=keep_depth)
            buffer.add_episode(ep)
            idx += 1
    buffer.compute_advantages(config)
    return buffer


def _collect_job(job):
    env_factory, params, seed, i, keep_depth = job
    return collect_episode(env_factory(i), params, episode_rng(seed, i), keep_depth=keep_depth)
