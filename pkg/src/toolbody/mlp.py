"""Tanh multilayer perceptron with hand-written reverse-mode gradients.

The network maps ``concat(normalize(u), p)`` through five tanh layers to a
normalized 3-vector which is then denormalized. The latent ``p`` is fed in
raw: it is a learned quantity with no data distribution to normalize by.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

HIDDEN = (300, 300, 300, 300, 300)
STD_FLOOR = 1e-6
MAGIC = b"TBNPB"
VERSION = b"1"


@dataclass
class NormStats:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.maximum(np.asarray(self.std, dtype=np.float64), STD_FLOOR)
        if self.mean.shape != self.std.shape:
            raise ValueError("mean and std must have the same shape")

    def normalize(self, x):
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.std

    def denormalize(self, y):
        return np.asarray(y, dtype=np.float64) * self.std + self.mean

    @classmethod
    def identity(cls, dim: int) -> "NormStats":
        return cls(np.zeros(dim), np.ones(dim))


def fit_normalization(u, x) -> tuple[NormStats, NormStats]:
    """Per-dimension mean and population std of commands and tips."""
    u = np.asarray(u, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if u.ndim != 2 or len(u) == 0:
        raise ValueError("need a non-empty (N, dim) array of samples")
    if len(u) < 2:
        raise ValueError("need at least 2 samples to fit normalization")
    if len(x) != len(u):
        raise ValueError("u and x must have the same number of samples")
    return NormStats(u.mean(0), u.std(0)), NormStats(x.mean(0), x.std(0))


@dataclass
class Mlp:
    """Dense tanh network plus its normalization statistics.

    ``weights[i]`` has shape (fan_in, fan_out) so a layer is ``a @ W + b``.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    in_norm: NormStats
    out_norm: NormStats
    latent_dim: int

    def __post_init__(self):
        if len(self.weights) != len(self.biases):
            raise ValueError("weights and biases differ in length")
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape[1] != b.shape[0]:
                raise ValueError(f"layer {i}: weight/bias shape mismatch")
            if i and self.weights[i - 1].shape[1] != W.shape[0]:
                raise ValueError(f"layer {i}: fan-in does not match previous layer")
        if self.in_norm.mean.shape[0] + self.latent_dim != self.weights[0].shape[0]:
            raise ValueError("input width must equal command dim + latent dim")
        if self.out_norm.mean.shape[0] != self.weights[-1].shape[1]:
            raise ValueError("output normalization does not match output width")

    @property
    def layer_dims(self) -> list[int]:
        return [self.weights[0].shape[0]] + [W.shape[1] for W in self.weights]

    @property
    def command_dim(self) -> int:
        return self.in_norm.mean.shape[0]

    @property
    def params(self) -> list[np.ndarray]:
        """Flat parameter list [W0, b0, W1, b1, ...] (views, not copies)."""
        out = []
        for W, b in zip(self.weights, self.biases):
            out.extend((W, b))
        return out

    def copy(self) -> "Mlp":
        return Mlp(
            [W.copy() for W in self.weights],
            [b.copy() for b in self.biases],
            NormStats(self.in_norm.mean.copy(), self.in_norm.std.copy()),
            NormStats(self.out_norm.mean.copy(), self.out_norm.std.copy()),
            self.latent_dim,
        )


def init_mlp(command_dim: int, latent_dim: int = 2, hidden=HIDDEN, out_dim: int = 3,
             seed: int = 0, in_norm: NormStats | None = None,
             out_norm: NormStats | None = None) -> Mlp:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    dims = [command_dim + latent_dim, *hidden, out_dim]
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Mlp(weights, biases,
               in_norm or NormStats.identity(command_dim),
               out_norm or NormStats.identity(out_dim),
               latent_dim)


def _inputs(model: Mlp, u, p):
    u = np.asarray(u, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    single = u.ndim == 1
    U = np.atleast_2d(u)
    if U.shape[1] != model.command_dim:
        raise ValueError(f"command has dim {U.shape[1]}, model expects {model.command_dim}")
    if p.shape[-1] != model.latent_dim:
        raise ValueError(f"latent has dim {p.shape[-1]}, model expects {model.latent_dim}")
    P = np.broadcast_to(p, (U.shape[0], model.latent_dim))
    z = np.concatenate([model.in_norm.normalize(U), P], axis=1)
    return z, single, p.ndim == 1


def forward_normalized(model: Mlp, z):
    """Run the network on already-assembled inputs; returns the activations.

    ``acts[0]`` is the input, ``acts[-1]`` the normalized output.
    """
    acts = [z]
    a = z
    last = len(model.weights) - 1
    for i, (W, b) in enumerate(zip(model.weights, model.biases)):
        a = a @ W + b
        if i < last:
            a = np.tanh(a)
        acts.append(a)
    return acts


def backprop_normalized(model: Mlp, acts, dy, input_cols=slice(None)):
    """Gradients of ``sum(dy * acts[-1])`` given the forward activations.

    Returns (grad wrt the ``input_cols`` of the network input, flat list of
    param grads). ``input_cols=None`` skips the input gradient.
    """
    grads = [None] * (2 * len(model.weights))
    delta = dy
    for i in range(len(model.weights) - 1, -1, -1):
        if not np.all(np.isfinite(delta)):
            raise FloatingPointError(f"non-finite gradient at layer {i}")
        grads[2 * i] = acts[i].T @ delta
        grads[2 * i + 1] = delta.sum(axis=0)
        if i == 0:
            break
        # acts[i] = tanh(pre-activation of layer i-1)
        delta = (delta @ model.weights[i].T) * (1.0 - acts[i] ** 2)
    if input_cols is None:
        return None, grads
    return delta @ model.weights[0][input_cols].T, grads


def _check_finite(acts):
    for i, a in enumerate(acts):
        if not np.all(np.isfinite(a)):
            raise FloatingPointError(f"non-finite activation at layer {i}")


def forward(model: Mlp, u, p):
    """Tool-tip estimate for command(s) ``u`` (deg) and latent(s) ``p``.

    ``u`` may be (dim_u,) or (N, dim_u); ``p`` may be (dim_p,) shared across
    the batch or (N, dim_p).
    """
    z, single, _ = _inputs(model, u, p)
    acts = forward_normalized(model, z)
    _check_finite(acts)
    x = model.out_norm.denormalize(acts[-1])
    return x[0] if single else x


def backward(model: Mlp, u, p, upstream):
    """Gradients of ``<upstream, forward(model, u, p)>``.

    Returns ``(grad_u, grad_p, grad_params)``; grad_params follows
    :attr:`Mlp.params` ordering. A shared 1-D ``p`` gets the batch-summed
    gradient.
    """
    z, single, p_shared = _inputs(model, u, p)
    upstream = np.asarray(upstream, dtype=np.float64)
    if not np.all(np.isfinite(upstream)):
        raise ValueError("upstream gradient must be finite")
    dx = np.broadcast_to(np.atleast_2d(upstream), (z.shape[0], upstream.shape[-1]))
    acts = forward_normalized(model, z)
    _check_finite(acts)
    dy = dx * model.out_norm.std
    dz, grads = backprop_normalized(model, acts, dy)
    du = dz[:, : model.command_dim] / model.in_norm.std
    dp = dz[:, model.command_dim:]
    if p_shared:
        dp = dp.sum(axis=0)
    if single:
        du = du[0]
        if not p_shared:
            dp = dp[0]
    return du, dp, grads


# -- optimizers ------------------------------------------------------------


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        """Update ``params`` in place and return them."""
        if len(params) != len(self.m):
            raise ValueError("parameter count changed since optimizer creation")
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            if g.shape != p.shape:
                raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return params


class MomentumSGD:
    """v <- mu*v - lr*g ; param <- param + v."""

    def __init__(self, params, lr=0.1, momentum=0.9):
        self.lr, self.momentum = lr, momentum
        self.velocity = [np.zeros_like(p) for p in params]

    def reset(self):
        for v in self.velocity:
            v[...] = 0.0

    def step(self, params, grads):
        if len(params) != len(self.velocity):
            raise ValueError("parameter count changed since optimizer creation")
        for p, g, v in zip(params, grads, self.velocity):
            if g.shape != p.shape:
                raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
            v *= self.momentum
            v -= self.lr * g
            p += v
        return params


# -- model file ------------------------------------------------------------


def _pack_array(a) -> bytes:
    return np.ascontiguousarray(a, dtype="<f8").tobytes()


def to_bytes(model: Mlp, latents: dict[int, np.ndarray] | None = None) -> bytes:
    """Serialize as ``TBNPB1`` + dims + norm stats + row-major params + latents."""
    dims = model.layer_dims
    parts = [MAGIC + VERSION,
             struct.pack("<I", len(dims)), struct.pack(f"<{len(dims)}I", *dims),
             struct.pack("<I", model.latent_dim)]
    for stats in (model.in_norm, model.out_norm):
        parts += [_pack_array(stats.mean), _pack_array(stats.std)]
    for W, b in zip(model.weights, model.biases):
        parts += [_pack_array(W), _pack_array(b)]
    latents = latents or {}
    parts.append(struct.pack("<I", len(latents)))
    for k in sorted(latents):
        parts.append(struct.pack("<q", int(k)))
        parts.append(_pack_array(np.asarray(latents[k]).reshape(model.latent_dim)))
    return b"".join(parts)


def from_bytes(data: bytes) -> tuple[Mlp, dict[int, np.ndarray]]:
    if data[:5] != MAGIC:
        raise ValueError("not a model file (bad magic)")
    if data[5:6] != VERSION:
        raise ValueError(f"unsupported model file version {data[5:6]!r}")
    off = 6

    def take(fmt):
        nonlocal off
        vals = struct.unpack_from(fmt, data, off)
        off += struct.calcsize(fmt)
        return vals

    def take_array(n, shape=None):
        nonlocal off
        a = np.frombuffer(data, dtype="<f8", count=n, offset=off).astype(np.float64)
        off += 8 * n
        return a.reshape(shape) if shape else a

    try:
        (n_dims,) = take("<I")
        dims = take(f"<{n_dims}I")
        (latent_dim,) = take("<I")
        du = dims[0] - latent_dim
        in_norm = NormStats(take_array(du), take_array(du))
        out_norm = NormStats(take_array(dims[-1]), take_array(dims[-1]))
        weights, biases = [], []
        for fi, fo in zip(dims[:-1], dims[1:]):
            weights.append(take_array(fi * fo, (fi, fo)))
            biases.append(take_array(fo))
        (n_lat,) = take("<I")
        latents = {}
        for _ in range(n_lat):
            (k,) = take("<q")
            latents[k] = take_array(latent_dim)
    except (struct.error, ValueError) as exc:
        raise ValueError(f"truncated or corrupt model file: {exc}") from exc
    return Mlp(weights, biases, in_norm, out_norm, latent_dim), latents


def save_model(path, model: Mlp, latents=None):
    Path(path).write_bytes(to_bytes(model, latents))


def load_model(path) -> tuple[Mlp, dict[int, np.ndarray]]:
    return from_bytes(Path(path).read_bytes())
