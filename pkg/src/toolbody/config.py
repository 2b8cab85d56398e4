"""Experiment configuration read from an INI file.

Every key is optional; unspecified values fall back to the defaults of the
chosen arm preset. Sections and keys::

    [run]         seed
    [arm]         preset (pr2 | musashi), base_offset, name
    [joint.N]     axis, link, limits, name        (replaces the preset chain)
    [tool]        droop_offset, compliance, stick_length, cloth_length,
                  extension_length
    [grid]        preset (pr2 | musashi) or l_tool / phi_tool / psi_tool lists
    [data]        n_per_grasp, noise_mm
    [train]       batch_size, epochs, learning_rate, latent_dim, n_batches,
                  hidden (layer widths)
    [finetune]    batch_size, epochs, learning_rate, refit_normalization,
                  noise_mm
    [adapt]       capacity, c_collect, n_thre, n_epoch, lr, momentum,
                  weight_lr, noise_mm
    [controller]  gamma_max, n_line, n_epochs, alpha, search_positive
    [trajectory]  reference, n_cycles, y_direction, ik_grasp, hand_rpy,
                  alt_hand_rpy, u_seed

Vectors are comma or space separated. ``hand_rpy`` is roll, pitch, yaw in
degrees (R = Rz(yaw) Ry(pitch) Rx(roll)); the word ``none`` selects
position-only IK on the tool tip.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import sim
from .controller import ControllerConfig
from .trainer import TrainConfig


def _floats(text) -> tuple[float, ...]:
    return tuple(float(v) for v in str(text).replace(",", " ").split())


def rpy_matrix(rpy) -> np.ndarray:
    r, p, y = np.deg2rad(rpy)
    return (sim.axis_rotation(sim.Z, y) @ sim.axis_rotation(sim.Y, p)
            @ sim.axis_rotation(sim.X, r))


@dataclass
class AdaptConfig:
    capacity: int = 20
    c_collect: float = 10.0
    n_thre: int = 10
    n_epoch: int = 3
    lr: float = 0.1
    momentum: float = 0.9
    weight_lr: float = 0.01
    noise_mm: float = 0.0


@dataclass
class TrajectoryConfig:
    reference: tuple[float, float, float] = (800.0, -100.0, 1600.0)
    n_cycles: int = 40
    y_direction: float = -1.0
    ik_grasp: tuple[float, float, float] = (500.0, 30.0, 0.0)
    hand_rpy: tuple[float, float, float] | None = (0.0, 0.0, 0.0)
    alt_hand_rpy: tuple[float, float, float] | None = (30.0, 0.0, 0.0)
    u_seed: tuple[float, ...] = (0.0, -10.0, 0.0, -90.0, 0.0, 90.0, -10.0)

    def hand_rot(self, alt: bool = False):
        rpy = self.alt_hand_rpy if alt else self.hand_rpy
        return None if rpy is None else rpy_matrix(rpy)


TRAJECTORY_PRESETS = {
    "pr2": TrajectoryConfig(),
    "musashi": TrajectoryConfig(
        reference=(170.0, -200.0, 2090.0), n_cycles=30, ik_grasp=(500.0, 30.0, 0.0),
        hand_rpy=None, alt_hand_rpy=None, u_seed=(0.0, -20.0, 0.0, -60.0, 0.0)),
}


@dataclass
class ExperimentConfig:
    seed: int = 0
    arm: sim.ArmModel = field(default_factory=sim.pr2_like_arm)
    tool: sim.ToolModel = field(default_factory=sim.ToolModel)
    grid: list[sim.GraspTruth] = field(default_factory=sim.pr2_grasp_grid)
    n_per_grasp: int = 1000
    data_noise_mm: float = 0.0
    train: TrainConfig = field(default_factory=TrainConfig)
    finetune: TrainConfig = field(default_factory=lambda: TrainConfig(batch_size=30, epochs=100))
    finetune_refit_normalization: bool = False
    finetune_noise_mm: float = 10.0
    adapt: AdaptConfig = field(default_factory=AdaptConfig)
    controller: ControllerConfig = field(default_factory=lambda: ControllerConfig(alpha=0.3))
    trajectory: TrajectoryConfig = field(default_factory=TrajectoryConfig)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, seed=seed, train=replace(self.train, seed=seed),
                       finetune=replace(self.finetune, seed=seed))


def _grid_from(cp, preset: str) -> list[sim.GraspTruth]:
    if not cp.has_section("grid"):
        return sim.GRID_PRESETS[preset]()
    sec = cp["grid"]
    if "preset" in sec and not any(k in sec for k in ("l_tool", "phi_tool", "psi_tool")):
        if sec["preset"] not in sim.GRID_PRESETS:
            raise ValueError(f"unknown grid preset {sec['preset']!r}")
        return sim.GRID_PRESETS[sec["preset"]]()
    ls = _floats(sec.get("l_tool", "500"))
    phis = _floats(sec.get("phi_tool", "0"))
    psis = _floats(sec.get("psi_tool", "0"))
    return [sim.GraspTruth(l, phi, psi) for l in ls for phi in phis for psi in psis]


def _opt_rpy(text):
    return None if str(text).strip().lower() == "none" else _floats(text)


def parse_config(cp: configparser.ConfigParser) -> ExperimentConfig:
    arm = sim.arm_from_config(cp)
    preset = cp.get("arm", "preset", fallback="pr2")
    cfg = ExperimentConfig(arm=arm, tool=sim.tool_from_config(cp), grid=_grid_from(cp, preset),
                           trajectory=TRAJECTORY_PRESETS[preset])
    cfg.seed = cp.getint("run", "seed", fallback=0)
    if cp.has_section("data"):
        cfg.n_per_grasp = cp.getint("data", "n_per_grasp", fallback=cfg.n_per_grasp)
        cfg.data_noise_mm = cp.getfloat("data", "noise_mm", fallback=cfg.data_noise_mm)
    for name in ("train", "finetune"):
        if not cp.has_section(name):
            continue
        sec = cp[name]
        base = getattr(cfg, name)
        nb = sec.get("n_batches")
        setattr(cfg, name, replace(
            base,
            batch_size=sec.getint("batch_size", base.batch_size),
            epochs=sec.getint("epochs", base.epochs),
            learning_rate=sec.getfloat("learning_rate", base.learning_rate),
            latent_dim=sec.getint("latent_dim", base.latent_dim),
            n_batches=int(nb) if nb else base.n_batches,
            hidden=tuple(int(v) for v in _floats(sec["hidden"])) if "hidden" in sec else base.hidden,
        ))
    if cp.has_section("finetune"):
        cfg.finetune_refit_normalization = cp.getboolean("finetune", "refit_normalization",
                                                         fallback=False)
        cfg.finetune_noise_mm = cp.getfloat("finetune", "noise_mm", fallback=cfg.finetune_noise_mm)
    if cp.has_section("adapt"):
        sec = cp["adapt"]
        a = cfg.adapt
        cfg.adapt = AdaptConfig(
            capacity=sec.getint("capacity", a.capacity),
            c_collect=sec.getfloat("c_collect", a.c_collect),
            n_thre=sec.getint("n_thre", a.n_thre),
            n_epoch=sec.getint("n_epoch", a.n_epoch),
            lr=sec.getfloat("lr", a.lr),
            momentum=sec.getfloat("momentum", a.momentum),
            weight_lr=sec.getfloat("weight_lr", a.weight_lr),
            noise_mm=sec.getfloat("noise_mm", a.noise_mm),
        )
    if cp.has_section("controller"):
        sec = cp["controller"]
        c = cfg.controller
        cfg.controller = ControllerConfig(
            gamma_max=sec.getfloat("gamma_max", c.gamma_max),
            n_line=sec.getint("n_line", c.n_line),
            n_epochs=sec.getint("n_epochs", c.n_epochs),
            alpha=sec.getfloat("alpha", c.alpha),
            search_positive=sec.getboolean("search_positive", c.search_positive),
        )
    if cp.has_section("trajectory"):
        sec = cp["trajectory"]
        t = cfg.trajectory
        cfg.trajectory = TrajectoryConfig(
            reference=_floats(sec["reference"]) if "reference" in sec else t.reference,
            n_cycles=sec.getint("n_cycles", t.n_cycles),
            y_direction=sec.getfloat("y_direction", t.y_direction),
            ik_grasp=_floats(sec["ik_grasp"]) if "ik_grasp" in sec else t.ik_grasp,
            hand_rpy=_opt_rpy(sec["hand_rpy"]) if "hand_rpy" in sec else t.hand_rpy,
            alt_hand_rpy=_opt_rpy(sec["alt_hand_rpy"]) if "alt_hand_rpy" in sec else t.alt_hand_rpy,
            u_seed=_floats(sec["u_seed"]) if "u_seed" in sec else t.u_seed,
        )
    if len(cfg.trajectory.u_seed) != cfg.arm.dof:
        raise ValueError(f"trajectory u_seed has {len(cfg.trajectory.u_seed)} entries, "
                         f"arm has {cfg.arm.dof} joints")
    return cfg.with_seed(cfg.seed)


def load_config(path=None) -> ExperimentConfig:
    cp = configparser.ConfigParser()
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"config file not found: {path}")
        cp.read(path)
    return parse_config(cp)
