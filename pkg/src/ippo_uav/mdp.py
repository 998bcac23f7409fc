"""State assembly, target features, waypoint actions and the four-term reward."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .world import UavKinematicState, wrap_angle

LATENT_DIM = 254
STATE_DIM = LATENT_DIM + 2
N_ACTIONS = 8

# index 0 continues the previous waypoint
ACTION_DYAW = (
    None,
    0.0,
    math.pi / 6,
    -math.pi / 6,
    math.pi / 4,
    -math.pi / 4,
    math.pi / 3,
    -math.pi / 3,
)


class TargetFeatures(NamedTuple):
    d: float
    alpha: float


def target_features(p_ego, p_target, d_max: float, yaw: float | None = None) -> TargetFeatures:
    """Normalized distance in [0, 1] and bearing / pi in (-1, 1].

    The bearing is world-frame unless ``yaw`` is given, in which case it is
    measured from the vehicle's longitudinal axis.
    """
    if not d_max > 0:
        raise ValueError("d_max must be positive")
    dx = float(p_target[0]) - float(p_ego[0])
    dy = float(p_target[1]) - float(p_ego[1])
    dist = math.hypot(dx, dy)
    if dist == 0.0:
        return TargetFeatures(0.0, 0.0)
    d = min(max(dist / d_max, 0.0), 1.0)
    bearing = math.atan2(dy, dx)
    if yaw is not None:
        bearing = wrap_angle(bearing - yaw)
    return TargetFeatures(d, bearing / math.pi)


def action_to_waypoint(action: int, state: UavKinematicState, last_waypoint=None, lam: float = 50.0) -> np.ndarray:
    """World-frame waypoint for a discrete action.

    Actions 1-7 place a point ``lam`` metres away at the body-frame bearing
    ``ACTION_DYAW[action]``. Action 0 repeats ``last_waypoint``; with no previous
    waypoint it behaves like a zero yaw change.
    """
    if not (isinstance(action, (int, np.integer)) and 0 <= action < N_ACTIONS):
        raise ValueError(f"invalid action index {action!r}")
    if not lam > 0:
        raise ValueError("waypoint distance must be positive")
    if action == 0:
        if last_waypoint is not None:
            return np.asarray(last_waypoint, dtype=np.float64)
        dyaw = 0.0
    else:
        dyaw = ACTION_DYAW[action]
    bx = lam * math.cos(dyaw)
    by = lam * math.sin(dyaw)
    c, s = math.cos(state.yaw), math.sin(state.yaw)
    return np.array([state.x + c * bx - s * by, state.y + s * bx + c * by])


@dataclass(frozen=True)
class RewardWeights:
    c1: float = 30.0
    c2: float = -30.0
    c3: float = 0.5
    c4: float = 1.0

    @classmethod
    def parse(cls, text: str) -> "RewardWeights":
        parts = [float(p) for p in text.split(",")]
        if len(parts) != 4:
            raise ValueError("reward weights need four comma-separated values")
        return cls(*parts)


DISTANCE_ONLY = RewardWeights(0.0, 0.0, 1.0, 0.0)


class RewardBreakdown(NamedTuple):
    r_target: float
    r_collision: float
    r_dis: float
    r_track: float
    r_total: float


@dataclass(frozen=True)
class StepContext:
    """Normalized distance plus take-off-relative ego and target positions."""

    d: float
    position: tuple
    target: tuple


def _cosine(u, v) -> float:
    nu = math.hypot(u[0], u[1])
    nv = math.hypot(v[0], v[1])
    if nu == 0.0 or nv == 0.0:
        return 0.0
    c = (u[0] * v[0] + u[1] * v[1]) / (nu * nv)
    return min(max(c, -1.0), 1.0)


def compute_reward(prev: StepContext, curr: StepContext, events, weights: RewardWeights = RewardWeights(),
                   track_mode: str = "literal") -> RewardBreakdown:
    """Target bonus, collision penalty, distance progress and track alignment.

    ``literal`` tracking takes the cosine between the take-off-anchored target
    and ego vectors; ``heading`` uses the step displacement instead of the ego
    vector.
    """
    r_target = weights.c1 if events.reached_target else 0.0
    r_collision = weights.c2 if events.collided else 0.0
    r_dis = weights.c3 * (prev.d - curr.d)
    if track_mode == "literal":
        delta = _cosine(curr.target, curr.position)
    elif track_mode == "heading":
        step = (curr.position[0] - prev.position[0], curr.position[1] - prev.position[1])
        delta = _cosine(curr.target, step)
    else:
        raise ValueError(f"unknown track mode {track_mode!r}")
    r_track = weights.c4 * delta
    return RewardBreakdown(r_target, r_collision, r_dis, r_track, r_target + r_collision + r_dis + r_track)


def build_state(depth, encoder_params, tf: TargetFeatures) -> np.ndarray:
    """Concatenate the encoded depth map with ``(d, alpha)``."""
    from .nets import encoder_forward

    latent = encoder_forward(encoder_params, depth)
    if latent.shape != (LATENT_DIM,):
        raise ValueError(f"encoder produced shape {latent.shape}, expected ({LATENT_DIM},)")
    state = np.empty(STATE_DIM)
    state[:LATENT_DIM] = latent
    state[LATENT_DIM] = tf.d
    state[LATENT_DIM + 1] = tf.alpha
    if not np.all(np.isfinite(state)):
        raise ValueError("non-finite state vector")
    return state
