"""Joint offline training of network weights and per-grasp latent codes."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .dataset import TrainSet
from .mlp import (HIDDEN, Adam, Mlp, backprop_normalized, fit_normalization,
                  forward_normalized, init_mlp)

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    batch_size: int = 300
    epochs: int = 300
    seed: int = 0
    learning_rate: float = 1e-3
    latent_dim: int = 2
    hidden: tuple[int, ...] = HIDDEN
    # alternative reading of "N batches": split each epoch into this many batches
    n_batches: int | None = None

    def resolved_batch_size(self, n_samples: int) -> int:
        if self.n_batches:
            return max(1, n_samples // self.n_batches)
        return self.batch_size


@dataclass
class TrainResult:
    model: Mlp
    latents: dict[int, np.ndarray]
    history: list[tuple[int, float]] = field(default_factory=list)
    initial_mse: float = float("nan")
    final_mse: float = float("nan")


def dataset_mse(model: Mlp, dataset: TrainSet, latents: dict[int, np.ndarray]) -> float:
    """Full-batch MSE in normalized output units."""
    u, x, rows = dataset.arrays()
    ids = [g.grasp_id for g in dataset.sorted().groups]
    P = np.stack([latents[k] for k in ids])[rows]
    z = np.concatenate([model.in_norm.normalize(u), P], axis=1)
    y = forward_normalized(model, z)[-1]
    return float(np.mean((y - model.out_norm.normalize(x)) ** 2))


def _run(model: Mlp, dataset: TrainSet, config: TrainConfig) -> TrainResult:
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    if dataset.command_dim != model.command_dim:
        raise ValueError(f"dataset command dim {dataset.command_dim} != model {model.command_dim}")
    groups = dataset.sorted().groups
    ids = [g.grasp_id for g in groups]
    u, x, rows = dataset.arrays()
    z_u = model.in_norm.normalize(u)
    y_t = model.out_norm.normalize(x)
    du = model.command_dim
    P = np.zeros((len(groups), model.latent_dim))
    latents = lambda: {k: P[i].copy() for i, k in enumerate(ids)}

    n = len(u)
    bs = min(config.resolved_batch_size(n), n)
    result = TrainResult(model, {}, [])
    result.initial_mse = dataset_mse(model, dataset, latents())
    result.history.append((0, result.initial_mse))
    params = model.params + [P]
    opt = Adam(params, lr=config.learning_rate)
    rng = np.random.default_rng(config.seed)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for b, start in enumerate(range(0, n, bs)):
            idx = order[start:start + bs]
            z = np.concatenate([z_u[idx], P[rows[idx]]], axis=1)
            acts = forward_normalized(model, z)
            err = acts[-1] - y_t[idx]
            loss = float(np.mean(err**2))
            if not np.isfinite(loss):
                raise FloatingPointError(f"non-finite loss at epoch {epoch}, batch {b}")
            total += loss * len(idx)
            dy = 2.0 * err / err.size
            dp, grads = backprop_normalized(model, acts, dy, input_cols=slice(du, None))
            gP = np.zeros_like(P)
            np.add.at(gP, rows[idx], dp)
            opt.step(params, grads + [gP])
        result.history.append((epoch, total / n))
        if epoch % 50 == 0 or epoch == config.epochs:
            log.info("epoch %d  mse %.6g", epoch, total / n)
    result.latents = latents()
    result.final_mse = dataset_mse(model, dataset, result.latents)
    return result


def train_offline(dataset: TrainSet, config: TrainConfig = TrainConfig()) -> TrainResult:
    """Fit a fresh network and one latent code per grasp group, all by Adam.

    Mini-batches mix groups; each sample sees its group's code. Samples are
    stacked in grasp-id order before shuffling so group list order is
    irrelevant.
    """
    u, x, _ = dataset.arrays()
    in_norm, out_norm = fit_normalization(u, x)
    model = init_mlp(dataset.command_dim, config.latent_dim, config.hidden, 3,
                     seed=config.seed, in_norm=in_norm, out_norm=out_norm)
    return _run(model, dataset, config)


def finetune(model: Mlp, dataset: TrainSet, config: TrainConfig = TrainConfig(),
             refit_normalization: bool = False) -> TrainResult:
    """Warm-start from ``model``'s weights, latents restarted at zero.

    Normalization statistics of ``model`` are kept unless
    ``refit_normalization`` is set.
    """
    if config.latent_dim != model.latent_dim:
        config = TrainConfig(**{**config.__dict__, "latent_dim": model.latent_dim})
    model = model.copy()
    if refit_normalization:
        u, x, _ = dataset.arrays()
        model.in_norm, model.out_norm = fit_normalization(u, x)
    return _run(model, dataset, config)
