"""Inverse-PPO obstacle avoidance for a planar fixed-wing UAV."""

from .mdp import RewardWeights, action_to_waypoint, compute_reward, target_features
from .nets import NetConfig, NetworkParameters, init_params
from .rollout import EnvConfig, UavEnv, collect_batch, collect_episode
from .trainer import TrainerConfig, update
from .world import (
    KinematicParams,
    ScenarioSpec,
    SensorParams,
    UavKinematicState,
    bundled_scenario,
    load_scenario,
    raycast_depth,
    step_to_waypoint,
)

__version__ = "0.1.0"
