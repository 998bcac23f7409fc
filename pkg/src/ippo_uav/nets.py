"""Networks built on :mod:`ippo_uav.autodiff`: the depth autoencoder, the
policy and value heads, an Adam optimizer and a finite-difference gradient
checker.

Parameters live in a :class:`NetworkParameters` mapping of dotted names
(``enc.*``, ``dec.*``, ``pi.*``, ``v.*``) to leaf tensors. Dense layers compute
``x @ w + b`` with ``w`` shaped ``(fan_in, fan_out)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, no_grad
from .mdp import LATENT_DIM, N_ACTIONS, STATE_DIM


@dataclass(frozen=True)
class NetConfig:
    height: int = 16
    width: int = 32
    latent: int = LATENT_DIM
    hidden: int = 128
    channels: tuple = (8, 16)

    @property
    def conv_shapes(self):
        """Spatial sizes: input, after conv1, after conv2."""
        h1, w1 = ad.conv_out_size(self.height), ad.conv_out_size(self.width)
        h2, w2 = ad.conv_out_size(h1), ad.conv_out_size(w1)
        return (self.height, self.width), (h1, w1), (h2, w2)

    @property
    def flat_dim(self) -> int:
        h2, w2 = self.conv_shapes[2]
        return self.channels[1] * h2 * w2


class NetworkParameters(dict):
    """Ordered ``name -> Tensor`` mapping plus the architecture it was built for."""

    def __init__(self, tensors=(), config: NetConfig = NetConfig()):
        super().__init__(tensors)
        self.config = config

    def group(self, prefix: str) -> list[str]:
        return [n for n in self if n.startswith(prefix + ".")]

    def arrays(self) -> dict[str, np.ndarray]:
        return {n: t.data.copy() for n, t in self.items()}

    def copy(self) -> "NetworkParameters":
        return NetworkParameters(
            ((n, Tensor(t.data.copy(), requires_grad=True)) for n, t in self.items()), self.config
        )

    def zero_grad(self):
        for t in self.values():
            t.grad = None

    def count(self) -> int:
        return sum(t.data.size for t in self.values())


def _uniform(rng, shape, fan_in):
    bound = 1.0 / math.sqrt(fan_in)
    # float32-representable so checkpoints of fresh parameters round-trip exactly
    return rng.uniform(-bound, bound, size=shape).astype(np.float32).astype(np.float64)


def init_params(config: NetConfig = NetConfig(), seed: int = 0, zero: bool = False) -> NetworkParameters:
    """Fan-in scaled uniform initialisation, or all zeros with ``zero=True``."""
    rng = np.random.default_rng(seed)
    c1, c2 = config.channels
    shapes = [
        ("enc.conv1.w", (c1, 1, 3, 3), 9),
        ("enc.conv1.b", (c1,), 9),
        ("enc.conv2.w", (c2, c1, 3, 3), 9 * c1),
        ("enc.conv2.b", (c2,), 9 * c1),
        ("enc.fc.w", (config.flat_dim, config.latent), config.flat_dim),
        ("enc.fc.b", (config.latent,), config.flat_dim),
        ("dec.fc.w", (config.latent, config.flat_dim), config.latent),
        ("dec.fc.b", (config.flat_dim,), config.latent),
        ("dec.deconv1.w", (c2, c1, 3, 3), 9 * c2),
        ("dec.deconv1.b", (c1,), 9 * c2),
        ("dec.deconv2.w", (c1, 1, 3, 3), 9 * c1),
        ("dec.deconv2.b", (1,), 9 * c1),
        ("pi.fc1.w", (STATE_DIM, config.hidden), STATE_DIM),
        ("pi.fc1.b", (config.hidden,), STATE_DIM),
        ("pi.fc2.w", (config.hidden, N_ACTIONS), config.hidden),
        ("pi.fc2.b", (N_ACTIONS,), config.hidden),
        ("v.fc1.w", (STATE_DIM, config.hidden), STATE_DIM),
        ("v.fc1.b", (config.hidden,), STATE_DIM),
        ("v.fc2.w", (config.hidden, 1), config.hidden),
        ("v.fc2.b", (1,), config.hidden),
    ]
    params = NetworkParameters(config=config)
    for name, shape, fan_in in shapes:
        data = np.zeros(shape) if zero else _uniform(rng, shape, fan_in)
        params[name] = Tensor(data, requires_grad=True)
    return params


# graph builders


def encode(params: NetworkParameters, x) -> Tensor:
    """(N, H, W) normalized depth -> (N, latent) in (-1, 1).

    The tanh keeps the latent on the same scale as the target features it is
    concatenated with.
    """
    x = ad.as_tensor(x)
    n = x.shape[0]
    h = ad.reshape(x, (n, 1) + x.shape[1:])
    h = ad.relu(ad.conv2d(h, params["enc.conv1.w"], params["enc.conv1.b"]))
    h = ad.relu(ad.conv2d(h, params["enc.conv2.w"], params["enc.conv2.b"]))
    h = ad.reshape(h, (n, -1))
    return ad.tanh(ad.dense(h, params["enc.fc.w"], params["enc.fc.b"]))


def decode(params: NetworkParameters, z) -> Tensor:
    """(N, latent) -> (N, H, W) reconstruction in [0, 1]."""
    cfg = params.config
    (h0, w0), (h1, w1), (h2, w2) = cfg.conv_shapes
    z = ad.as_tensor(z)
    n = z.shape[0]
    h = ad.relu(ad.dense(z, params["dec.fc.w"], params["dec.fc.b"]))
    h = ad.reshape(h, (n, cfg.channels[1], h2, w2))
    h = ad.relu(ad.conv_transpose2d(h, params["dec.deconv1.w"], params["dec.deconv1.b"], (h1, w1)))
    h = ad.conv_transpose2d(h, params["dec.deconv2.w"], params["dec.deconv2.b"], (h0, w0))
    return ad.reshape(ad.sigmoid(h), (n, h0, w0))


def _mlp(params, prefix, x) -> Tensor:
    h = ad.as_tensor(x)
    if f"{prefix}.fc2.w" in params:
        h = ad.tanh(ad.dense(h, params[f"{prefix}.fc1.w"], params[f"{prefix}.fc1.b"]))
        return ad.dense(h, params[f"{prefix}.fc2.w"], params[f"{prefix}.fc2.b"])
    # linear probe: a single layer stored as fc1
    return ad.dense(h, params[f"{prefix}.fc1.w"], params[f"{prefix}.fc1.b"])


def policy_log_probs(params, states) -> Tensor:
    """(N, 256) states -> (N, 8) log-probabilities."""
    return ad.log_softmax(_mlp(params, "pi", states))


def values(params, states) -> Tensor:
    """(N, 256) states -> (N,) state values."""
    v = _mlp(params, "v", states)
    return ad.reshape(v, (v.shape[0],))


# numpy-level forwards


def _depth_array(depth, cfg: NetConfig) -> np.ndarray:
    arr = depth.normalized() if hasattr(depth, "normalized") else np.asarray(depth, dtype=np.float64)
    if arr.shape[-2:] != (cfg.height, cfg.width):
        raise ValueError(f"depth map shape {arr.shape[-2:]} does not match encoder input {(cfg.height, cfg.width)}")
    return arr


def encoder_forward(params: NetworkParameters, depth) -> np.ndarray:
    """Latent vector for one depth map (``DepthMap`` or normalized array), or a batch."""
    arr = _depth_array(depth, params.config)
    single = arr.ndim == 2
    with no_grad():
        z = encode(params, arr[None] if single else arr).data
    return z[0] if single else z


def policy_forward(params: NetworkParameters, state) -> tuple[np.ndarray, np.ndarray]:
    """Action probabilities and log-probabilities for one state or a batch."""
    s = np.asarray(state, dtype=np.float64)
    if s.shape[-1] != STATE_DIM:
        raise ValueError(f"state dimension {s.shape[-1]}, expected {STATE_DIM}")
    if not np.all(np.isfinite(s)):
        raise ValueError("non-finite state")
    single = s.ndim == 1
    with no_grad():
        logp = policy_log_probs(params, s[None] if single else s).data
    logp = logp[0] if single else logp
    return np.exp(logp), logp


def value_forward(params: NetworkParameters, state):
    s = np.asarray(state, dtype=np.float64)
    if s.shape[-1] != STATE_DIM:
        raise ValueError(f"state dimension {s.shape[-1]}, expected {STATE_DIM}")
    if not np.all(np.isfinite(s)):
        raise ValueError("non-finite state")
    single = s.ndim == 1
    with no_grad():
        v = values(params, s[None] if single else s).data
    return float(v[0]) if single else v


@dataclass
class OptimizerState:
    """Adam moments for a fixed set of parameter names."""

    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def step(self, params: NetworkParameters, names=None) -> float:
        """Apply one Adam update from the accumulated gradients; returns the gradient norm."""
        names = list(params) if names is None else list(names)
        self.step_count += 1
        t = self.step_count
        b1c = 1.0 - self.beta1 ** t
        b2c = 1.0 - self.beta2 ** t
        sq = 0.0
        for n in names:
            p = params[n]
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            sq += float(np.sum(g * g))
            if n not in self.m:
                self.m[n] = np.zeros_like(p.data)
                self.v[n] = np.zeros_like(p.data)
            m = self.m[n]
            v = self.v[n]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data = p.data - self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)
        return math.sqrt(sq)


def backward_and_step(loss: Tensor, params: NetworkParameters, optimizer: OptimizerState, names=None) -> float:
    """Backpropagate ``loss``, apply one optimizer step, clear gradients.

    Returns the global gradient norm over ``names``.
    """
    if loss.data.size != 1:
        raise ValueError("loss must be a scalar")
    params.zero_grad()
    loss.backward()
    norm = optimizer.step(params, names)
    params.zero_grad()
    return norm


def reconstruction_loss(params: NetworkParameters, batch: np.ndarray) -> Tensor:
    recon = decode(params, encode(params, batch))
    return ad.mean(ad.square(recon - batch))


def autoencoder_train_step(params: NetworkParameters, optimizer: OptimizerState, batch) -> float:
    """One Adam step on mean squared reconstruction error; returns the pre-step loss."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    arr = np.stack([_depth_array(d, params.config) for d in batch])
    loss = reconstruction_loss(params, arr)
    names = params.group("enc") + params.group("dec")
    backward_and_step(loss, params, optimizer, names)
    return loss.item()


def finite_diff_check(fn, params, eps: float = 1e-4, n_samples: int | None = 32, rng=None) -> float:
    """Max relative error between autodiff and central-difference gradients.

    ``fn()`` must build a scalar tensor from the leaf tensors in ``params``
    (a mapping of name -> Tensor). At most ``n_samples`` coordinates per tensor
    are checked; ``None`` checks every coordinate.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    for t in params.values():
        t.grad = None
    fn().backward()
    analytic = {n: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data)) for n, t in params.items()}
    for t in params.values():
        t.grad = None
    worst = 0.0
    for n, t in params.items():
        flat = t.data.reshape(-1)
        idx = np.arange(flat.size)
        if n_samples is not None and flat.size > n_samples:
            idx = rng.choice(flat.size, size=n_samples, replace=False)
        for i in idx:
            orig = flat[i]
            with no_grad():
                flat[i] = orig + eps
                f_plus = fn().item()
                flat[i] = orig - eps
                f_minus = fn().item()
            flat[i] = orig
            g_fd = (f_plus - f_minus) / (2.0 * eps)
            g_ad = analytic[n].reshape(-1)[i]
            err = abs(g_ad - g_fd) / max(1e-8, abs(g_ad) + abs(g_fd))
            worst = max(worst, err)
    return worst
