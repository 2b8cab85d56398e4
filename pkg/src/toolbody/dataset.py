"""Per-grasp training data and its CSV form."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .sim import ArmModel, GraspTruth, ToolModel, sample_commands, tool_tip


@dataclass
class GraspGroup:
    """Samples collected under one grasping state; they share one latent code."""

    grasp_id: int
    u: np.ndarray  # (N, dof) degrees
    x: np.ndarray  # (N, 3) mm
    latent: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __len__(self):
        return len(self.u)


@dataclass
class TrainSet:
    groups: list[GraspGroup]

    def __post_init__(self):
        ids = [g.grasp_id for g in self.groups]
        if len(set(ids)) != len(ids):
            raise ValueError("grasp ids must be unique")
        dims = {g.u.shape[1] for g in self.groups if len(g)}
        if len(dims) > 1:
            raise ValueError(f"inconsistent command dims {sorted(dims)}")
        for g in self.groups:
            if g.x.shape != (len(g.u), 3):
                raise ValueError(f"group {g.grasp_id}: tips must be (N, 3)")

    def __len__(self):
        return sum(len(g) for g in self.groups)

    @property
    def command_dim(self) -> int:
        return self.groups[0].u.shape[1]

    @property
    def grasp_ids(self) -> list[int]:
        return [g.grasp_id for g in self.groups]

    def sorted(self) -> "TrainSet":
        return TrainSet(sorted(self.groups, key=lambda g: g.grasp_id))

    def arrays(self):
        """Stacked (u, x, group_row) in grasp-id order; group_row indexes ``sorted().groups``."""
        groups = self.sorted().groups
        u = np.concatenate([g.u for g in groups])
        x = np.concatenate([g.x for g in groups])
        rows = np.concatenate([np.full(len(g), i) for i, g in enumerate(groups)])
        return u, x, rows

    def group(self, grasp_id: int) -> GraspGroup:
        for g in self.groups:
            if g.grasp_id == grasp_id:
                return g
        raise KeyError(grasp_id)

    def __eq__(self, other):
        if not isinstance(other, TrainSet) or self.grasp_ids != other.grasp_ids:
            return False
        return all(np.array_equal(a.u, b.u) and np.array_equal(a.x, b.x)
                   for a, b in zip(self.groups, other.groups))


def collect_sim(arm: ArmModel, tool: ToolModel, grasp_grid: list[GraspTruth],
                n_per_grasp: int, seed: int, noise_mm: float = 0.0,
                latent_dim: int = 2) -> TrainSet:
    """Random commands and simulated tips for every grasp in ``grasp_grid``.

    Grasp ``k`` draws from its own stream seeded by ``(seed, k)``, so
    growing the grid never changes earlier groups.
    """
    if not grasp_grid:
        raise ValueError("grasp grid is empty")
    groups = []
    for k, grasp in enumerate(grasp_grid):
        u = sample_commands(arm, n_per_grasp, seed=(seed, k))
        x = tool_tip(arm, u, grasp, tool)
        if noise_mm > 0:
            x = x + np.random.default_rng((seed, k, 1)).normal(0.0, noise_mm, x.shape)
        groups.append(GraspGroup(k, u, x, np.zeros(latent_dim)))
    return TrainSet(groups)


def header(dof: int) -> list[str]:
    return ["grasp_id"] + [f"u_{i}" for i in range(1, dof + 1)] + ["x", "y", "z"]


def save_csv(dataset: TrainSet, path):
    dof = dataset.command_dim
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header(dof))
        for g in dataset.groups:
            for u, x in zip(g.u, g.x):
                w.writerow([g.grasp_id] + [f"{v:.17g}" for v in u] + [f"{v:.17g}" for v in x])


def load_csv(path, latent_dim: int = 2) -> TrainSet:
    with open(path, newline="") as f:
        reader = csv.reader(f)
        try:
            head = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        dof = len(head) - 4
        if dof < 1 or head != header(dof):
            raise ValueError(f"{path}:1: bad header {','.join(head)}")
        rows: dict[int, tuple[list, list]] = {}
        for lineno, row in enumerate(reader, start=2):
            if len(row) != dof + 4:
                raise ValueError(f"{path}:{lineno}: expected {dof + 4} columns, got {len(row)}")
            try:
                k = int(row[0])
                vals = [float(v) for v in row[1:]]
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
            us, xs = rows.setdefault(k, ([], []))
            us.append(vals[:dof])
            xs.append(vals[dof:])
    if not rows:
        raise ValueError(f"{path}: no data rows")
    groups = [GraspGroup(k, np.array(us), np.array(xs), np.zeros(latent_dim))
              for k, (us, xs) in rows.items()]
    return TrainSet(groups)
