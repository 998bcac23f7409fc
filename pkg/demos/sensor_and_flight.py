"""
Sensor and flight walk-through
==============================

Fly a hand-picked action sequence through the ``corridor5`` scenario, print
the depth image the encoder would see at the start, and save the flown path
as an SVG next to this script.
"""

from pathlib import Path

import numpy as np

from ippo_uav.mdp import ACTION_DYAW
from ippo_uav.rollout import UavEnv
from ippo_uav.svgplot import trajectory_svg
from ippo_uav.world import bundled_scenario

sc = bundled_scenario("corridor5")
env = UavEnv(sc)

# one row of the depth image, nearest obstacle per column (metres)
depth = env.depth()
print("depth row 0:", np.round(depth.values[0], 1))

# weave left then right, then head straight
plan = [1, 1, 2, 2, 3, 3, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1]
path = [(env.state.x, env.state.y)]
for a in plan:
    if env.done:
        break
    reward, events = env.step(a)
    path.extend(map(tuple, events.sub_path[1:, :2]))
    print(f"action {a} (turn {np.degrees(ACTION_DYAW[a]):+5.1f} deg) -> "
          f"({env.state.x:7.1f}, {env.state.y:7.1f}) reward {reward.r_total:+.3f}")
print("collided" if events.collided else "reached" if events.reached_target else "stopped")

out = Path(__file__).with_name("sensor_and_flight.svg")
out.write_text(trajectory_svg(sc, [np.array(path)]))
print("wrote", out)
