"""Inverse-PPO trainer: return-to-go advantages, the importance ratio with an
optional state-marginal factor, success-scaled entropy bonus, and the clipped
composite objective optimized for ``epochs`` passes per batch.

The objective ``L = L_clip - w1 * L_vf + w2 * L_ent`` is maximized; the
optimizer descends on ``-L``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .nets import NetworkParameters, OptimizerState, backward_and_step, encode, policy_log_probs, values

RATIO_MIN = 1e-8
RATIO_MAX = 1e8
_LOG_RATIO_MIN = math.log(RATIO_MIN)
_LOG_RATIO_MAX = math.log(RATIO_MAX)


@dataclass(frozen=True)
class TrainerConfig:
    gamma: float = 0.95
    clip_eps: float = 0.3
    epochs: int = 2
    batch_size: int = 2048
    w1: float = 0.5
    w2: float = 0.1
    lr: float = 3e-4
    max_episodes: int = 3000
    max_steps: int = 60
    advantage_mode: str = "returns"  # or "gae"
    gae_lambda: float = 0.95
    entropy_mode: str = "adaptive"  # or "fixed"
    entropy_coeff: float = 0.01  # used in fixed mode
    success_divisor: str = "episodes"  # or "transitions"
    state_ratio_mode: str = "unity"  # or "estimator"
    minibatch_size: int = 256
    normalize_advantages: bool = True
    finetune_encoder: bool = False
    seed: int = 0

    def validate(self) -> None:
        if not 0 < self.clip_eps < 1:
            raise ValueError("clip_eps must lie in (0, 1)")
        if not 0 <= self.gamma <= 1:
            raise ValueError("gamma must lie in [0, 1]")
        for name in ("epochs", "batch_size", "max_episodes", "max_steps", "minibatch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.lr < 0 or self.w1 < 0 or self.w2 < 0 or self.entropy_coeff < 0:
            raise ValueError("learning rate and loss weights must be non-negative")
        choices = {
            "advantage_mode": ("returns", "gae"),
            "entropy_mode": ("adaptive", "fixed"),
            "success_divisor": ("episodes", "transitions"),
            "state_ratio_mode": ("unity", "estimator"),
        }
        for name, allowed in choices.items():
            if getattr(self, name) not in allowed:
                raise ValueError(f"{name} must be one of {allowed}")


@dataclass
class LossReport:
    L_clip: float
    L_vf: float
    L_ent: float
    L_inverse: float
    entropy_weight: float  # w2, or the fixed coefficient
    entropy_coeff: float  # entropy_weight times the success scale
    ms_ratio: float
    grad_norm: float

    def as_dict(self):
        return asdict(self)


class TrainingAborted(RuntimeError):
    def __init__(self, message: str, report: LossReport | None = None):
        super().__init__(message)
        self.report = report


def returns_to_go(rewards, gamma: float) -> np.ndarray:
    """Discounted return from each step to the end of its episode.

    ``rewards`` is one episode (1-D) or a list of episodes; returns never
    bootstrap across an episode end.
    """
    if len(rewards) and np.ndim(rewards[0]) > 0:
        parts = [returns_to_go(ep, gamma) for ep in rewards]
        return np.concatenate(parts) if parts else np.zeros(0)
    r = np.asarray(rewards, dtype=np.float64)
    out = np.empty_like(r)
    running = 0.0
    for t in range(len(r) - 1, -1, -1):
        running = r[t] + gamma * running
        out[t] = running
    return out


def gae_advantages(rewards, values_old, gamma: float, lam: float) -> np.ndarray:
    """Generalized advantage estimate for one episode, terminal value 0."""
    r = np.asarray(rewards, dtype=np.float64)
    v = np.asarray(values_old, dtype=np.float64)
    out = np.empty_like(r)
    running = 0.0
    for t in range(len(r) - 1, -1, -1):
        v_next = v[t + 1] if t + 1 < len(r) else 0.0
        running = r[t] + gamma * v_next - v[t] + gamma * lam * running
        out[t] = running
    return out


def inferring_advantage(returns, values_old, mode: str = "returns", *, rewards=None, bounds=None,
                        gamma: float = 0.95, gae_lambda: float = 0.95) -> np.ndarray:
    """Return-to-go minus the critic's value, or GAE when ``mode='gae'``.

    GAE needs the per-transition ``rewards`` and episode ``bounds`` as
    ``(start, stop)`` pairs.
    """
    g = np.asarray(returns, dtype=np.float64)
    v = np.asarray(values_old, dtype=np.float64)
    if g.shape != v.shape:
        raise ValueError(f"length mismatch: {g.shape} returns vs {v.shape} values")
    if mode == "returns":
        return g - v
    if mode != "gae":
        raise ValueError(f"unknown advantage mode {mode!r}")
    r = np.asarray(rewards, dtype=np.float64)
    if r.shape != v.shape:
        raise ValueError("GAE needs one reward per value")
    bounds = [(0, len(r))] if bounds is None else bounds
    out = np.empty_like(r)
    for a, b in bounds:
        out[a:b] = gae_advantages(r[a:b], v[a:b], gamma, gae_lambda)
    return out


def importance_ratio(log_prob_new, log_prob_old, state_ratio=1.0) -> Tensor:
    """``exp(new - old) * state_ratio`` clamped to [1e-8, 1e8]."""
    diff = ad.as_tensor(log_prob_new) - ad.as_tensor(log_prob_old)
    r = ad.exp(ad.clip(diff, _LOG_RATIO_MIN, _LOG_RATIO_MAX))
    if not (np.isscalar(state_ratio) and state_ratio == 1.0):
        r = ad.mul(r, state_ratio)
    return ad.clip(r, RATIO_MIN, RATIO_MAX)


def categorical_entropy(log_probs) -> Tensor:
    """Per-row entropy in nats of a (N, A) tensor of log-probabilities."""
    lp = ad.as_tensor(log_probs)
    return ad.neg(ad.sum_(ad.mul(ad.exp(lp), lp), axis=-1))


def adaptive_entropy(log_probs, n_success: int, n_episodes: int, mode: str = "adaptive",
                     n_transitions: int | None = None) -> tuple[Tensor, float]:
    """Mean policy entropy scaled by the batch success fraction.

    Returns ``(L_ent, scale)``. The scale is ``n_success / n_episodes``, or
    ``n_success / n_transitions`` when ``n_transitions`` is given; fixed mode
    uses a scale of 1.
    """
    if n_episodes < 1:
        raise ValueError("need at least one episode")
    if mode == "fixed":
        scale = 1.0
    elif mode == "adaptive":
        scale = n_success / (n_transitions if n_transitions is not None else n_episodes)
    else:
        raise ValueError(f"unknown entropy mode {mode!r}")
    h = categorical_entropy(log_probs)
    return ad.mul(ad.mean(h), scale), scale


def clipped_surrogate(ratios, advantages, eps: float, clip_ratios=None) -> Tensor:
    """Mean of ``min(ratio * A, clip(ratio, 1 - eps, 1 + eps) * A)``.

    ``clip_ratios`` (default: ``ratios``) is the quantity inside the clip; the
    trainer passes the action-only ratio there when a state factor is used.
    """
    r = ad.as_tensor(ratios)
    a = ad.as_tensor(advantages)
    if r.shape != a.shape:
        raise ValueError("ratios and advantages differ in length")
    rc = r if clip_ratios is None else ad.as_tensor(clip_ratios)
    return ad.mean(ad.minimum(ad.mul(r, a), ad.mul(ad.clip(rc, 1.0 - eps, 1.0 + eps), a)))


def value_loss(values_new, value_targets) -> Tensor:
    v = ad.as_tensor(values_new)
    t = ad.as_tensor(value_targets)
    if v.shape != t.shape:
        raise ValueError("values and targets differ in length")
    return ad.mean(ad.square(v - t))


def total_objective(l_clip, l_vf, l_ent, w1: float, w2: float):
    """``L_clip - w1 * L_vf + w2 * L_ent`` for floats or tensors."""
    if any(isinstance(x, Tensor) for x in (l_clip, l_vf, l_ent)):
        return ad.as_tensor(l_clip) - ad.mul(ad.as_tensor(l_vf), w1) + ad.mul(ad.as_tensor(l_ent), w2)
    return l_clip - w1 * l_vf + w2 * l_ent


def trainable_names(params: NetworkParameters, config: TrainerConfig) -> list[str]:
    names = params.group("pi") + params.group("v")
    if config.finetune_encoder:
        names = params.group("enc") + names
    return names


def _minibatch_states(params, buffer, idx, config):
    if not config.finetune_encoder:
        return buffer.states[idx]
    latent = encode(params, buffer.depths[idx])
    return ad.concat([latent, ad.as_tensor(buffer.states[idx, -2:])], axis=1)


def inverse_objective(params, buffer, idx, config: TrainerConfig, state_ratio=None):
    """Build the objective on minibatch ``idx``; returns (objective, parts dict)."""
    states = _minibatch_states(params, buffer, idx, config)
    logp_all = policy_log_probs(params, states)
    logp_new = ad.take_along_last(logp_all, buffer.actions[idx])
    old = buffer.log_probs[idx]
    action_ratio = importance_ratio(logp_new, old)
    if state_ratio is None:
        ratio = action_ratio
    else:
        ratio = importance_ratio(logp_new, old, np.asarray(state_ratio, dtype=np.float64))
    l_clip = clipped_surrogate(ratio, buffer.advantages[idx], config.clip_eps, clip_ratios=action_ratio)
    l_vf = value_loss(values(params, states), buffer.returns[idx])
    n_tr = buffer.n_transitions if config.success_divisor == "transitions" else None
    l_ent, scale = adaptive_entropy(logp_all, buffer.n_success, buffer.n_episodes, config.entropy_mode, n_tr)
    w2 = config.entropy_coeff if config.entropy_mode == "fixed" else config.w2
    objective = total_objective(l_clip, l_vf, l_ent, config.w1, w2)
    parts = dict(L_clip=l_clip.item(), L_vf=l_vf.item(), L_ent=l_ent.item(), L_inverse=objective.item(),
                 entropy_weight=w2, entropy_coeff=w2 * scale,
                 ms_ratio=buffer.n_success / buffer.n_episodes)
    return objective, parts


_BATCH_CONSTANTS = ("entropy_weight", "entropy_coeff", "ms_ratio")


def update(buffer, params: NetworkParameters, optimizer: OptimizerState, config: TrainerConfig,
           rng: np.random.Generator, state_ratio_fn=None) -> list[LossReport]:
    """Run ``config.epochs`` shuffled minibatch passes over ``buffer``.

    The buffer's stored log-probabilities are the behaviour policy. With
    ``state_ratio_mode='estimator'``, ``state_ratio_fn(states)`` must return a
    positive per-state ratio. Returns one averaged report per epoch.
    """
    n = buffer.n_transitions
    if n == 0:
        raise ValueError("empty buffer")
    names = trainable_names(params, config)
    state_ratio = None
    if config.state_ratio_mode == "estimator":
        if state_ratio_fn is None:
            raise ValueError("estimator mode needs a state_ratio_fn")
        state_ratio = np.asarray(state_ratio_fn(buffer.states), dtype=np.float64)
        if state_ratio.shape != (n,) or not np.all(state_ratio > 0):
            raise ValueError("state ratio estimator must return one positive value per state")
    mb = config.minibatch_size
    reports = []
    for _ in range(config.epochs):
        perm = rng.permutation(n)
        acc = []
        weights = []
        for start in range(0, n, mb):
            idx = perm[start:start + mb]
            sr = None if state_ratio is None else state_ratio[idx]
            objective, parts = inverse_objective(params, buffer, idx, config, sr)
            if not math.isfinite(parts["L_inverse"]):
                raise TrainingAborted("non-finite loss", LossReport(grad_norm=float("nan"), **parts))
            parts["grad_norm"] = backward_and_step(ad.neg(objective), params, optimizer, names)
            acc.append(parts)
            weights.append(len(idx))
        w = np.asarray(weights, dtype=np.float64) / n
        # per-batch constants are copied, the rest averaged by minibatch size
        avg = {k: v if k in _BATCH_CONSTANTS else float(np.dot(w, [p[k] for p in acc])) for k, v in acc[0].items()}
        reports.append(LossReport(**avg))
    return reports
