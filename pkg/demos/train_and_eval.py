"""
Train on the obstacle-free scenario, then evaluate greedily
===========================================================

A few seconds of training is enough for the open scenario. Pass a bundled
scenario name to try another one (expect minutes for ``corridor5``).
"""

import sys
from dataclasses import replace

from ippo_uav.experiment import ExperimentConfig, evaluate, train
from ippo_uav.trainer import TrainerConfig
from ippo_uav.world import bundled_scenario

name = sys.argv[1] if len(sys.argv) > 1 else "open"
episodes = 200 if name == "open" else 3000
sc = bundled_scenario(name)
trainer = replace(TrainerConfig(), max_episodes=episodes, batch_size=64, minibatch_size=16) if name == "open" \
    else TrainerConfig()
cfg = ExperimentConfig([sc], trainer=trainer, seed=0)


def progress(row):
    if row.episode % 50 == 49:
        print(f"episode {row.episode + 1:5d}  return {row.total_reward:7.2f}  success {int(row.success)}")


result = train(cfg, on_episode=progress)
print(f"final-20 training success {result.success_rate(20):.2f}")

ev = evaluate(result.params, sc, cfg.env, n_episodes=10)
print(f"greedy eval: success {ev.success_rate:.2f}, mean |heading change| {ev.mean_smoothness:.3f} rad")
