"""Online grasping-state updates from a small FIFO of recent observations."""

from __future__ import annotations

from collections import deque

import numpy as np

from .mlp import MomentumSGD, Mlp, backprop_normalized, forward_normalized

C_COLLECT = 10.0
N_THRE = 10
N_EPOCH = 3
N_MAX = 20


class OnlineBuffer:
    """Bounded FIFO of (command, tip) pairs gated on command change.

    A sample is kept only if its command is more than ``c_collect`` degrees
    (L2) from the last kept command; the very first sample is always kept.
    """

    def __init__(self, capacity: int = N_MAX, c_collect: float = C_COLLECT):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.c_collect = c_collect
        self.entries: deque[tuple[np.ndarray, np.ndarray]] = deque(maxlen=capacity)
        self.last_stored_command: np.ndarray | None = None
        self.n_stored = 0  # lifetime count, unaffected by eviction

    def __len__(self):
        return len(self.entries)

    def observe(self, u, x) -> bool:
        u = np.array(u, dtype=float)
        x = np.array(x, dtype=float)
        if x.shape != (3,):
            raise ValueError("tip must be a 3-vector")
        if self.last_stored_command is not None:
            if u.shape != self.last_stored_command.shape:
                raise ValueError("command dimension changed")
            if not np.linalg.norm(u - self.last_stored_command) > self.c_collect:
                return False
        self.entries.append((u, x))
        self.last_stored_command = u
        self.n_stored += 1
        return True

    def clear(self):
        self.entries.clear()
        self.last_stored_command = None

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        u = np.array([e[0] for e in self.entries])
        x = np.array([e[1] for e in self.entries])
        return u, x


def buffer_mse(model: Mlp, buffer: OnlineBuffer, p) -> float:
    """Normalized-output MSE of the model with latent ``p`` over the buffer."""
    u, x = buffer.arrays()
    z = np.concatenate([model.in_norm.normalize(u), np.broadcast_to(p, (len(u), len(p)))], 1)
    y = forward_normalized(model, z)[-1]
    return float(np.mean((y - model.out_norm.normalize(x)) ** 2))


def buffer_rmse_mm(model: Mlp, buffer: OnlineBuffer, p) -> float:
    """Root mean squared Euclidean tip error over the buffer, in mm."""
    u, x = buffer.arrays()
    z = np.concatenate([model.in_norm.normalize(u), np.broadcast_to(p, (len(u), len(p)))], 1)
    est = model.out_norm.denormalize(forward_normalized(model, z)[-1])
    return float(np.sqrt(np.mean(np.sum((est - x) ** 2, axis=1))))


def _grads(model, u, x, p, input_cols):
    z = np.concatenate([model.in_norm.normalize(u), np.broadcast_to(p, (len(u), len(p)))], 1)
    acts = forward_normalized(model, z)
    err = acts[-1] - model.out_norm.normalize(x)
    return backprop_normalized(model, acts, 2.0 * err / err.size, input_cols=input_cols)


class LatentUpdater:
    """Momentum SGD on the latent only; network weights are never touched.

    The momentum state lives as long as the updater, so consecutive calls
    continue one descent. :meth:`reset` clears it.
    """

    def __init__(self, model: Mlp, p0, lr: float = 0.1, momentum: float = 0.9,
                 n_thre: int = N_THRE, n_epoch: int = N_EPOCH):
        self.model = model
        self.p = np.array(p0, dtype=float)
        if self.p.shape != (model.latent_dim,):
            raise ValueError(f"latent must have dim {model.latent_dim}")
        self.n_thre = n_thre
        self.n_epoch = n_epoch
        self.opt = MomentumSGD([self.p], lr=lr, momentum=momentum)

    def reset(self):
        self.opt.reset()

    def update(self, buffer: OnlineBuffer) -> np.ndarray:
        if len(buffer) < self.n_thre:
            return self.p.copy()
        u, x = buffer.arrays()
        du = self.model.command_dim
        for _ in range(self.n_epoch):
            dz, _ = _grads(self.model, u, x, self.p, slice(du, None))
            self.opt.step([self.p], [dz.sum(axis=0)])
        return self.p.copy()


def update_latent(model: Mlp, buffer: OnlineBuffer, p, updater: LatentUpdater | None = None):
    """One online update of ``p``; pass a persistent ``updater`` to keep momentum."""
    if updater is None:
        updater = LatentUpdater(model, p)
    else:
        updater.p[...] = p
    return updater.update(buffer)


class WeightUpdater:
    """Baseline that adapts the network weights with the latent held fixed."""

    def __init__(self, model: Mlp, p, lr: float = 0.01, momentum: float = 0.9,
                 n_thre: int = N_THRE, n_epoch: int = N_EPOCH):
        self.model = model.copy()
        self.p = np.array(p, dtype=float)
        self.n_thre = n_thre
        self.n_epoch = n_epoch
        self.opt = MomentumSGD(self.model.params, lr=lr, momentum=momentum)

    def update(self, buffer: OnlineBuffer) -> Mlp:
        if len(buffer) < self.n_thre:
            return self.model
        u, x = buffer.arrays()
        for _ in range(self.n_epoch):
            _, grads = _grads(self.model, u, x, self.p, None)
            self.opt.step(self.model.params, grads)
        return self.model


def update_weights_baseline(model: Mlp, buffer: OnlineBuffer, p,
                            updater: WeightUpdater | None = None) -> Mlp:
    """Updated copy of ``model``; pass a persistent ``updater`` to keep momentum."""
    if updater is None:
        updater = WeightUpdater(model, p)
    return updater.update(buffer)
