"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The training-based criteria (4 to 7) take several minutes on one core and are
marked ``slow``; deselect them with ``-m "not slow"``.
"""

import math
import time

import numpy as np
import pytest

from ippo_uav import cli
from ippo_uav.experiment import ExperimentConfig, entropy_ablation, evaluate, read_csv, reward_ablation, train
from ippo_uav.knn import knn_entropy
from ippo_uav.mdp import RewardWeights, StepContext, action_to_waypoint, compute_reward, target_features
from ippo_uav.nets import NetConfig, OptimizerState, finite_diff_check, init_params, value_forward
from ippo_uav.rollout import EnvConfig, RolloutBuffer, normalize_advantages
from ippo_uav.trainer import (
    TrainerConfig,
    adaptive_entropy,
    clipped_surrogate,
    importance_ratio,
    inverse_objective,
    returns_to_go,
    total_objective,
    trainable_names,
    update,
)
from ippo_uav.world import StepEvents, UavKinematicState, bundled_scenario

import test_autodiff
import test_world
from toybuffer import make_buffer, small_params

# open scenario smoke config: 200 episodes in small batches so there are enough updates
SMOKE = ["--scenario", "open", "--episodes", "200", "--batch", "64", "--minibatch", "16", "--seed", "0"]
SEEDS = range(5)


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\nacceptance criterion {n}: {'PASS' if ok else 'FAIL'} ({detail})")
        assert ok, detail

    return emit


def _run(fn, *args):
    try:
        fn(*args)
        return True
    except AssertionError:
        return False


# 1


def _full_objective_worst(finetune):
    config = TrainerConfig(finetune_encoder=finetune)
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        params = small_params(seed)
        # ratios away from the clip edges, where the objective has kinks
        buf = make_buffer(params, rng, log_ratio=lambda r: math.log(r.choice([0.5, 1.0, 1.7]) * r.uniform(0.9, 1.1)),
                          with_depth=finetune)
        buf.compute_advantages(config)
        idx = np.arange(buf.n_transitions)
        sub = {n: params[n] for n in trainable_names(params, config)}
        worst = max(worst, finite_diff_check(lambda: inverse_objective(params, buf, idx, config)[0], sub,
                                             eps=1e-5, n_samples=24, rng=np.random.default_rng(seed)))
    return worst


def test_criterion_1_gradients(report):
    t0 = time.perf_counter()
    layers_ok = all(_run(test_autodiff.test_op_gradients, name) for name in test_autodiff.CASES)
    layers_ok &= all(_run(test_autodiff.test_conv2d_gradients, s, p) for s, p in [(2, 1), (1, 1), (2, 0)])
    layers_ok &= _run(test_autodiff.test_conv_transpose2d_gradients)
    worst = max(_full_objective_worst(False), _full_objective_worst(True))
    elapsed = time.perf_counter() - t0
    ok = layers_ok and worst < 1e-3 and elapsed < 60
    report(1, ok, f"layer checks {'ok' if layers_ok else 'failed'}; full objective max rel err {worst:.2e}; "
                  f"{elapsed:.1f} s")


# 2


def _analytic_checks():
    near = lambda a, b: abs(a - b) <= 1e-9  # noqa: E731
    out = {}
    tf = target_features((0, 0), (1300, 0), 1300)
    out["features on axis"] = tf.d == 1.0 and tf.alpha == 0.0
    out["features quadrant"] = near(target_features((0, 0), (100, 100), 1300).alpha, 0.25)
    wp = action_to_waypoint(4, UavKinematicState(0, 0, 0))
    out["waypoint 45 deg"] = near(wp[0], 50 * math.cos(math.pi / 4)) and near(wp[1], 50 * math.sin(math.pi / 4))
    out["waypoint heading"] = bool(np.allclose(action_to_waypoint(1, UavKinematicState(10, 10, math.pi / 2)),
                                               [10, 60], atol=1e-9))
    w = RewardWeights()
    out["table weights"] = (w.c1, w.c2, w.c3, w.c4) == (30.0, -30.0, 0.5, 1.0)
    r = compute_reward(StepContext(0.5, (100, 0), (1000, 0)), StepContext(0.4, (200, 0), (1000, 0)),
                       StepEvents(reached_target=True))
    out["reward reached"] = near(r.r_total, 31.05)
    r = compute_reward(StepContext(0.3, (100, 0), (1000, 0)), StepContext(0.3, (200, 0), (1000, 0)),
                       StepEvents(collided=True))
    out["reward collision"] = near(r.r_total, -29.0)
    out["clip ratio 2"] = near(clipped_surrogate([2.0], [1.0], 0.3).item(), 1.3)
    # the printed -0.5 for this case contradicts min(); the min gives -0.7
    out["clip ratio 0.5, A=-1"] = near(clipped_surrogate([0.5], [-1.0], 0.3).item(), -0.7)
    out["clip identity"] = near(clipped_surrogate([1.0], [0.37], 0.3).item(), 0.37)
    out["objective"] = near(total_objective(1.3, 1.0, 2.0794, 0.5, 0.1), 1.00794)
    uniform = np.full((4, 8), -math.log(8))
    out["entropy M_s=0"] = adaptive_entropy(uniform, 0, 4)[0].item() == 0.0
    out["entropy uniform"] = near(adaptive_entropy(uniform, 4, 4)[0].item(), math.log(8))
    out["ratio ln2"] = near(importance_ratio(math.log(2), 0.0).item(), 2.0)
    out["returns"] = bool(np.allclose(returns_to_go([1, 1, 1], 0.5), [1.75, 1.5, 1.0], atol=1e-9))
    buf = RolloutBuffer()
    buf.advantages = np.array([1.0, 2.0, 3.0])
    out["normalize"] = bool(np.allclose(normalize_advantages(buf).advantages, [-1.2247448714, 0, 1.2247448714],
                                        atol=1e-9))
    return out


def test_criterion_2_analytic(report):
    checks = _analytic_checks()
    failed = [k for k, v in checks.items() if not v]
    report(2, not failed, f"{len(checks) - len(failed)}/{len(checks)} examples exact"
                          + (f"; failed: {', '.join(failed)}" if failed else ""))


# 3


def test_criterion_3_geometry(report):
    rays = _run(test_world.test_raycast_matches_brute_force_intersections)
    flights = all(_run(test_world.test_sixty_second_flight_matches_fine_reference, wp)
                  for wp in [(-1500.0, 2500.0), (10.0, 60.0)])
    report(3, rays and flights, f"ray oracle >=1000 rays at 1e-6 m: {'ok' if rays else 'failed'}; "
                                f"60 s flights within 0.5 m: {'ok' if flights else 'failed'}")


# 4 and 5 (smoke)


@pytest.fixture(scope="module")
def smoke_runs(tmp_path_factory):
    base = tmp_path_factory.mktemp("smoke")
    times = []
    for name in ("a", "b"):
        t0 = time.perf_counter()
        assert cli.main(["train", "--out", str(base / name), "--workers", "1"] + SMOKE) == 0
        times.append(time.perf_counter() - t0)
    return base, times


@pytest.mark.slow
def test_criterion_4_determinism(report, smoke_runs):
    base, times = smoke_runs
    same = all((base / "a" / f).read_bytes() == (base / "b" / f).read_bytes() for f in ("train.csv", "final.ippo"))
    report(4, same and max(times) < 600, f"byte-identical CSV and checkpoint: {same}; smoke run {max(times):.1f} s")


@pytest.mark.slow
def test_criterion_5_learnability(report, smoke_runs):
    base, _ = smoke_runs
    rows = read_csv(base / "a" / "train.csv")
    open_rate = sum(int(r["success"]) for r in rows[-20:]) / 20
    sc = bundled_scenario("corridor5")
    res = train(ExperimentConfig([sc], seed=0))
    corridor = res.success_rate(100)
    rand = evaluate(init_params(seed=0), sc, EnvConfig(), 100, seed=0, greedy=False,
                    policy=lambda s: np.full(8, 0.125)).success_rate
    ok = open_rate >= 0.9 and corridor >= 0.6 and rand <= 0.2
    report(5, ok, f"open final-20 {open_rate:.2f} (>=0.9); corridor5 final-100 {corridor:.2f} (>=0.6); "
                  f"random {rand:.2f} (<=0.2)")


# 6 and 7


@pytest.mark.slow
def test_criterion_6_reward_ablation(report):
    wins, detail = 0, []
    for seed in SEEDS:
        res = reward_ablation(ExperimentConfig([bundled_scenario("corridor5")], seed=seed))
        full, dist = res["full"][1].mean_smoothness, res["distance"][1].mean_smoothness
        wins += full < dist
        detail.append(f"s{seed} full {full:.3f} vs dist {dist:.3f}")
    report(6, wins >= 4, f"full smoother in {wins}/5 seeds; " + "; ".join(detail))


@pytest.mark.slow
def test_criterion_7_entropy_ablation(report):
    wins, detail = 0, []
    for seed in SEEDS:
        res = entropy_ablation(ExperimentConfig([bundled_scenario("corridor5")], seed=seed))
        ret = {k: v.mean_return(100) for k, v in res.items()}
        wins += ret["adaptive"] >= max(ret["fixed_0.01"], ret["fixed_0.001"])
        detail.append(f"s{seed} adaptive {ret['adaptive']:.1f} vs {ret['fixed_0.01']:.1f}/{ret['fixed_0.001']:.1f}")
    report(7, wins >= 4, f"adaptive best in {wins}/5 seeds; " + "; ".join(detail))


# 8


def test_criterion_8_knn(report):
    uni = knn_entropy(np.random.default_rng(0).uniform(0, 1, 10_000))
    nrm = knn_entropy(np.random.default_rng(1).normal(size=10_000))
    target = 0.5 * math.log(2 * math.pi * math.e)
    ok = abs(uni) <= 0.05 and abs(nrm - target) <= 0.05
    report(8, ok, f"uniform {uni:+.4f} (0); normal {nrm:.4f} ({target:.4f})")


# 9


def test_criterion_9_stationarity(report):
    params = init_params(NetConfig(), seed=2)
    buf = make_buffer(params, np.random.default_rng(0), (5, 4, 3), (False, False, False))
    buf.returns = value_forward(params, buf.states)
    buf.advantages = np.zeros(buf.n_transitions)
    before = params.arrays()
    update(buf, params, OptimizerState(), TrainerConfig(minibatch_size=4), np.random.default_rng(1))
    moved = math.sqrt(sum(np.sum((params[n].data - before[n]) ** 2) for n in before))
    report(9, moved < 1e-12, f"parameter change norm {moved:.1e}")


def test_zero_weight_grad_sanity():
    # guards criterion 9 against a vacuous pass: a non-zero advantage must move the policy
    params = init_params(NetConfig(), seed=2)
    buf = make_buffer(params, np.random.default_rng(0), (3,), (False,))
    buf.returns = value_forward(params, buf.states)
    buf.advantages = np.array([1.0, -1.0, 0.5])
    before = params["pi.fc2.b"].data.copy()
    update(buf, params, OptimizerState(), TrainerConfig(), np.random.default_rng(1))
    assert not np.array_equal(before, params["pi.fc2.b"].data)
