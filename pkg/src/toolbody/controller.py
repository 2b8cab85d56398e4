"""Tool-tip estimation and command optimization through the learned model."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mlp import Mlp, backward, forward


@dataclass
class AnchorTo:
    """Penalize ``||u - anchor||``."""

    anchor: np.ndarray


@dataclass
class FreezeJoints:
    """Penalize movement of the masked joints away from ``anchor``."""

    mask: np.ndarray
    anchor: np.ndarray


@dataclass
class ControllerConfig:
    gamma_max: float = 0.5
    n_line: int = 30
    n_epochs: int = 10
    alpha: float = 0.0
    constraint: AnchorTo | FreezeJoints | None = None
    # also try steps along +gradient (the literal update sign)
    search_positive: bool = False

    def __post_init__(self):
        if self.gamma_max <= 0:
            raise ValueError("gamma_max must be positive")
        if self.n_line < 2:
            raise ValueError("n_line must be >= 2")

    def gammas(self) -> np.ndarray:
        return np.linspace(0.0, self.gamma_max, self.n_line)


@dataclass
class SolveResult:
    u: np.ndarray
    loss: float
    initial_loss: float
    log: list[tuple[int, float, float, float]] = field(default_factory=list)


def estimate_tip(model: Mlp, u, p):
    return forward(model, u, p)


def _constraint_terms(u, constraint):
    """Constraint value(s) and gradient at ``u`` (u may be batched)."""
    if constraint is None:
        return np.zeros(u.shape[:-1]), np.zeros_like(u)
    diff = u - constraint.anchor
    if isinstance(constraint, FreezeJoints):
        diff = diff * np.asarray(constraint.mask, dtype=float)
    norm = np.linalg.norm(diff, axis=-1)
    safe = np.where(norm > 0, norm, 1.0)[..., None]
    return norm, np.where(norm[..., None] > 0, diff / safe, 0.0)


def control_loss(model: Mlp, p, u, x_ref, config: ControllerConfig):
    """Loss value(s) ``||h(u,p) - x_ref|| + alpha * L_const(u)``; batched over ``u``."""
    x = forward(model, u, p)
    pos = np.linalg.norm(x - x_ref, axis=-1)
    const, _ = _constraint_terms(np.asarray(u, dtype=float), config.constraint)
    return pos + config.alpha * const, pos


def control_grad(model: Mlp, p, u, x_ref, config: ControllerConfig):
    """Loss and its gradient with respect to a single command ``u``."""
    u = np.asarray(u, dtype=float)
    x = forward(model, u, p)
    e = x - x_ref
    dist = np.linalg.norm(e)
    upstream = e / dist if dist > 0 else np.zeros(3)
    g_pos, _, _ = backward(model, u, p, upstream)
    const, g_const = _constraint_terms(u, config.constraint)
    return dist + config.alpha * float(const), g_pos + config.alpha * g_const


def optimize_command(model: Mlp, p, u_cur, x_ref, config: ControllerConfig = ControllerConfig(),
                     limits=None) -> SolveResult:
    """Gradient steps on the command with a grid line search each epoch.

    Candidates ``u - gamma * grad`` for gamma on a uniform grid over
    ``[0, gamma_max]``; gamma = 0 is always a candidate so the loss never
    increases. With ``limits`` ((n, 2) degrees) candidates are clamped
    before they are scored.
    """
    x_ref = np.asarray(x_ref, dtype=float)
    if not np.all(np.isfinite(x_ref)):
        raise ValueError("x_ref must be finite")
    u = np.array(u_cur, dtype=float)
    if limits is not None:
        limits = np.asarray(limits, dtype=float)
        u = np.clip(u, limits[:, 0], limits[:, 1])
    gammas = config.gammas()
    steps = np.concatenate([-gammas, gammas[1:]]) if config.search_positive else -gammas
    initial = loss = float(control_loss(model, p, u, x_ref, config)[0])
    if not np.isfinite(initial):
        raise FloatingPointError("non-finite control loss at epoch 0")
    log = []
    for epoch in range(config.n_epochs):
        _, g = control_grad(model, p, u, x_ref, config)
        cands = u + steps[1:, None] * g
        if limits is not None:
            cands = np.clip(cands, limits[:, 0], limits[:, 1])
        losses, pos = control_loss(model, p, cands, x_ref, config)
        if not np.all(np.isfinite(losses)):
            raise FloatingPointError(f"non-finite control loss at epoch {epoch}")
        best = int(np.argmin(losses))
        # gamma = 0 keeps the current point and its carried loss; re-scoring
        # it in a batch could differ by rounding
        if losses[best] < loss:
            u, loss, gamma, pos_err = cands[best], float(losses[best]), -steps[best + 1], pos[best]
        else:
            gamma, pos_err = 0.0, float(control_loss(model, p, u, x_ref, config)[1])
        log.append((epoch, float(gamma), loss, float(pos_err)))
    return SolveResult(u, loss, initial, log)
