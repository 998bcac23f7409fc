import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ippo_uav.mdp import (
    ACTION_DYAW,
    DISTANCE_ONLY,
    LATENT_DIM,
    N_ACTIONS,
    STATE_DIM,
    RewardWeights,
    StepContext,
    action_to_waypoint,
    build_state,
    compute_reward,
    target_features,
)
from ippo_uav.nets import NetConfig, init_params
from ippo_uav.world import ObstacleField, SensorParams, StepEvents, UavKinematicState, raycast_depth

NO_EVENTS = StepEvents()


# target features


def test_features_at_cap_on_axis():
    tf = target_features((0, 0), (1300, 0), 1300)
    assert tf.d == 1.0 and tf.alpha == 0.0


def test_features_quadrants():
    assert target_features((0, 0), (100, 100), 1300).alpha == pytest.approx(0.25, abs=1e-12)
    assert target_features((0, 0), (0, -100), 1300).alpha == pytest.approx(-0.5, abs=1e-12)
    assert target_features((0, 0), (-100, 0), 1300).alpha == 1.0


def test_features_clip_and_coincident():
    assert target_features((0, 0), (5000, 0), 1300).d == 1.0
    assert target_features((3, 4), (3, 4), 1300) == (0.0, 0.0)
    with pytest.raises(ValueError):
        target_features((0, 0), (1, 0), 0.0)


def test_body_frame_bearing_is_relative_to_heading():
    tf = target_features((0, 0), (0, 100), 1300, yaw=math.pi / 2)
    assert tf.alpha == pytest.approx(0.0, abs=1e-12)
    tf = target_features((0, 0), (100, 0), 1300, yaw=math.pi / 2)
    assert tf.alpha == pytest.approx(-0.5, abs=1e-12)


coord = st.floats(-5000, 5000, allow_nan=False)


@settings(max_examples=300, deadline=None)
@given(ex=coord, ey=coord, tx=coord, ty=coord)
def test_feature_ranges_and_sign(ex, ey, tx, ty):
    tf = target_features((ex, ey), (tx, ty), 1300.0)
    assert 0.0 <= tf.d <= 1.0
    assert -1.0 <= tf.alpha <= 1.0
    if ty > ey and (tx, ty) != (ex, ey):
        assert tf.alpha > 0


# actions


def test_action_set():
    assert N_ACTIONS == 8
    assert ACTION_DYAW[1:] == (0.0, math.pi / 6, -math.pi / 6, math.pi / 4, -math.pi / 4, math.pi / 3, -math.pi / 3)


def test_waypoint_forty_five_degrees():
    wp = action_to_waypoint(4, UavKinematicState(0, 0, 0))
    assert wp == pytest.approx([35.35533905932738, 35.35533905932738], abs=1e-9)


def test_waypoint_rotates_with_heading():
    wp = action_to_waypoint(1, UavKinematicState(10, 10, math.pi / 2))
    assert wp == pytest.approx([10.0, 60.0], abs=1e-9)


def test_continue_repeats_previous_waypoint_exactly():
    s = UavKinematicState(0, 0, 0)
    prev = action_to_waypoint(2, s)
    moved = UavKinematicState(20, 7, 0.4)
    again = action_to_waypoint(0, moved, prev)
    assert again.tobytes() == prev.tobytes()
    assert action_to_waypoint(0, UavKinematicState(-3, 1, 2.0), again).tobytes() == prev.tobytes()


def test_continue_at_episode_start_flies_straight():
    s = UavKinematicState(5, 5, 1.0)
    assert np.array_equal(action_to_waypoint(0, s, None), action_to_waypoint(1, s))


@pytest.mark.parametrize("bad", [-1, 8, 2.0, "1"])
def test_invalid_action_rejected(bad):
    with pytest.raises(ValueError):
        action_to_waypoint(bad, UavKinematicState(0, 0, 0))


@settings(max_examples=200, deadline=None)
@given(a=st.integers(1, 7), x=coord, y=coord, yaw=st.floats(-4, 4), lam=st.floats(1, 500))
def test_waypoint_distance_is_lambda(a, x, y, yaw, lam):
    wp = action_to_waypoint(a, UavKinematicState(x, y, yaw), lam=lam)
    assert abs(math.hypot(wp[0] - x, wp[1] - y) - lam) <= 1e-9


# reward


def _ctx(d, pos, target=(1000.0, 0.0)):
    return StepContext(d, pos, target)


def test_reward_reached_on_line():
    r = compute_reward(_ctx(0.5, (100, 0)), _ctx(0.4, (200, 0)), StepEvents(reached_target=True))
    assert r.r_total == pytest.approx(31.05, abs=1e-9)
    assert (r.r_target, r.r_collision) == (30.0, 0.0)
    assert r.r_dis == pytest.approx(0.05, abs=1e-12) and r.r_track == 1.0


def test_reward_collision_on_line():
    r = compute_reward(_ctx(0.3, (100, 0)), _ctx(0.3, (200, 0)), StepEvents(collided=True))
    assert r.r_total == pytest.approx(-29.0, abs=1e-9)


def test_track_term_at_forty_five_degrees():
    r = compute_reward(_ctx(0.5, (0, 0)), _ctx(0.5, (100, 100), (100, 0)), NO_EVENTS)
    assert r.r_track == pytest.approx(math.sqrt(0.5), abs=1e-9)


def test_track_term_zero_at_takeoff():
    r = compute_reward(_ctx(0.5, (0, 0)), _ctx(0.5, (0, 0)), NO_EVENTS)
    assert r.r_track == 0.0


def test_heading_mode_uses_step_direction():
    prev, curr = _ctx(0.5, (0, 50)), _ctx(0.5, (30, 50))
    assert compute_reward(prev, curr, NO_EVENTS, track_mode="heading").r_track == pytest.approx(1.0)
    assert compute_reward(prev, curr, NO_EVENTS, track_mode="literal").r_track < 1.0
    with pytest.raises(ValueError):
        compute_reward(prev, curr, NO_EVENTS, track_mode="sideways")


def test_distance_only_weights():
    r = compute_reward(_ctx(0.5, (0, 0)), _ctx(0.45, (60, 40)), StepEvents(reached_target=True), DISTANCE_ONLY)
    assert r.r_total == pytest.approx(0.05, abs=1e-12)
    assert RewardWeights.parse("0,0,1,0") == DISTANCE_ONLY
    with pytest.raises(ValueError):
        RewardWeights.parse("1,2,3")


@settings(max_examples=300, deadline=None)
@given(d0=st.floats(0, 1), d1=st.floats(0, 1), px=coord, py=coord, qx=coord, qy=coord,
       reached=st.booleans(), collided=st.booleans(), mode=st.sampled_from(["literal", "heading"]))
def test_reward_composition(d0, d1, px, py, qx, qy, reached, collided, mode):
    w = RewardWeights()
    ev = StepEvents(reached_target=reached, collided=collided)
    r = compute_reward(_ctx(d0, (px, py)), _ctx(d1, (qx, qy)), ev, w, mode)
    assert r.r_total == r.r_target + r.r_collision + r.r_dis + r.r_track
    assert abs(r.r_track) <= w.c4
    assert r.r_target in (0.0, w.c1) and r.r_collision in (0.0, w.c2)
    swapped = compute_reward(_ctx(d1, (px, py)), _ctx(d0, (qx, qy)), ev, w, mode)
    assert swapped.r_dis == -r.r_dis


# state assembly


def test_zero_encoder_gives_bias_response():
    params = init_params(NetConfig(), zero=True)
    params["enc.fc.b"].data[:] = 0.25
    depth = raycast_depth(UavKinematicState(0, 0, 0), ObstacleField(), SensorParams())
    s = build_state(depth, params, target_features((0, 0), (650, 0), 1300))
    assert s.shape == (STATE_DIM,)
    assert np.allclose(s[:LATENT_DIM], np.tanh(0.25))
    assert tuple(s[LATENT_DIM:]) == (0.5, 0.0)


def test_depth_changes_only_latent_part():
    params = init_params(NetConfig(), seed=1)
    tf = target_features((0, 0), (300, 200), 1300)
    d1 = raycast_depth(UavKinematicState(0, 0, 0), ObstacleField(), SensorParams())
    near = ObstacleField(circles=[(60.0, 0.0, 20.0)], bounds=(-1e3, -1e3, 1e3, 1e3))
    d2 = raycast_depth(UavKinematicState(0, 0, 0), near, SensorParams())
    s1, s2 = build_state(d1, params, tf), build_state(d2, params, tf)
    assert np.any(s1[:LATENT_DIM] != s2[:LATENT_DIM])
    assert np.array_equal(s1[LATENT_DIM:], s2[LATENT_DIM:])


def test_depth_shape_mismatch_rejected():
    params = init_params(NetConfig(), seed=0)
    depth = raycast_depth(UavKinematicState(0, 0, 0), ObstacleField(), SensorParams(width=20))
    with pytest.raises(ValueError):
        build_state(depth, params, target_features((0, 0), (1, 0), 10))
