"""End-to-end simulation studies built from the library pieces."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import sim
from .adapt import LatentUpdater, OnlineBuffer, WeightUpdater, buffer_rmse_mm
from .analysis import pca_2d, tracking_errors
from .config import ExperimentConfig
from .controller import AnchorTo, ControllerConfig, optimize_command
from .mlp import Mlp, forward

G = sim.GraspTruth


@dataclass(frozen=True)
class Scenario:
    before: sim.GraspTruth
    after: sim.GraspTruth
    # latent at start: trained code of ``before`` or the zero vector
    start: str = "initial"


SCENARIOS = {
    "1": Scenario(G(500, 60), G(500, 0)),
    "2": Scenario(G(700, 30), G(300, 30)),
    "static": Scenario(G(500, 30), G(500, 30), start="zero"),
}

CONTROL_MODES = ("update_p", "update_w", "frozen")


def grasp_id(grid: list[sim.GraspTruth], grasp: sim.GraspTruth) -> int:
    for k, g in enumerate(grid):
        if g == grasp:
            return k
    raise KeyError(f"{grasp} is not part of the training grid")


def build_trajectory(cfg: ExperimentConfig, alt: bool = False) -> sim.Trajectory:
    t = cfg.trajectory
    return sim.duster_trajectory(cfg.arm, t.reference, t.n_cycles, G(*t.ik_grasp), cfg.tool,
                                 t.hand_rot(alt), np.array(t.u_seed), y_direction=t.y_direction)


def _noise(cfg: ExperimentConfig, tag: int):
    rng = np.random.default_rng((cfg.seed, tag))
    sigma = cfg.adapt.noise_mm
    return (lambda: rng.normal(0.0, sigma, 3)) if sigma > 0 else (lambda: np.zeros(3))


@dataclass
class RunLog:
    header: list[str]
    rows: list[list] = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def column(self, name) -> np.ndarray:
        i = self.header.index(name)
        return np.array([r[i] for r in self.rows], dtype=float)


def _code(latents, grid, grasp):
    return np.asarray(latents[grasp_id(grid, grasp)], dtype=float)


def adapt_run(model: Mlp, latents: dict[int, np.ndarray], cfg: ExperimentConfig,
              scenario: str, trajectory: sim.Trajectory | None = None) -> RunLog:
    """Stream the shaking motion, switch the true grasp halfway, adapt the latent.

    Each step logs the adapted estimate's error and, for comparison, the
    error of the latent frozen at its value when the grasp switched.
    """
    if scenario not in SCENARIOS:
        raise KeyError(f"unknown scenario {scenario!r}; choose from {sorted(SCENARIOS)}")
    sc = SCENARIOS[scenario]
    grid = cfg.grid
    traj = trajectory or build_trajectory(cfg)
    new_code = _code(latents, grid, sc.after)
    p0 = (_code(latents, grid, sc.before) if sc.start == "initial"
          else np.zeros(model.latent_dim))
    a = cfg.adapt
    buffer = OnlineBuffer(a.capacity, a.c_collect)
    updater = LatentUpdater(model, p0, a.lr, a.momentum, a.n_thre, a.n_epoch)
    noise = _noise(cfg, 1)
    switch = len(traj) // 2
    p_frozen = p0.copy()
    stored_since_switch = 0
    header = (["step", "time_s", "phase", "stored", "buffer_size", "n_since_switch"]
              + [f"p_{i + 1}" for i in range(model.latent_dim)]
              + ["est_err_mm", "frozen_err_mm", "buffer_rmse_mm", "dist_to_new_code", "updated"])
    log = RunLog(header)
    for t, u in enumerate(traj.commands):
        phase = int(t >= switch)
        if t == switch:
            p_frozen = updater.p.copy()
        truth = sc.after if phase else sc.before
        x = sim.tool_tip(cfg.arm, u, truth, cfg.tool) + noise()
        p_now = updater.p.copy()
        est_err = float(np.linalg.norm(forward(model, u, p_now) - x))
        frozen_err = float(np.linalg.norm(forward(model, u, p_frozen) - x))
        stored = buffer.observe(u, x)
        updated = 0
        if stored:
            if phase:
                stored_since_switch += 1
            if len(buffer) >= a.n_thre:
                updater.update(buffer)
                updated = 1
        p = updater.p
        log.rows.append([t, float(traj.times[t]), phase, int(stored), len(buffer),
                         stored_since_switch, *map(float, p), est_err, frozen_err,
                         buffer_rmse_mm(model, buffer, p), float(np.linalg.norm(p - new_code)),
                         updated])
    # windows are measured after the switch, once 20 post-switch samples are in
    post = slice(switch, None)
    adapted = tracking_errors(np.zeros((len(traj) - switch, 1)),
                              log.column("est_err_mm")[post][:, None],
                              log.column("n_since_switch")[post], min_collected=a.capacity)
    frozen = log.column("frozen_err_mm")[post][adapted.window_start:]
    upd = log.column("updated").astype(bool)
    dist = log.column("dist_to_new_code")
    dist_updates = dist[upd]
    window_start = switch + adapted.window_start
    # the approach: updates after the switch that precede the measured window
    steps = np.arange(len(traj))
    approach = dist[upd & (steps >= switch) & (steps < window_start)][-11:]
    last = dist_updates[-11:]
    log.summary = {
        "scenario": scenario,
        "switch_step": switch,
        "window_start_step": window_start,
        "adapted_window_mean_mm": adapted.window_mean,
        "frozen_window_mean_mm": float(frozen.mean()) if len(frozen) else float("nan"),
        "n_updates": int(upd.sum()),
        "final_dist_to_new_code": float(dist_updates[-1]) if len(dist_updates) else float("nan"),
        "approach10_monotone": bool(len(approach) == 11 and np.all(np.diff(approach) < 0)),
        "last10_monotone": bool(len(last) == 11 and np.all(np.diff(last) < 0)),
    }
    s = log.summary
    s["window_ratio"] = s["adapted_window_mean_mm"] / s["frozen_window_mean_mm"]
    return log


def control_run(model: Mlp, latents: dict[int, np.ndarray], cfg: ExperimentConfig, mode: str,
                truth: sim.GraspTruth = G(500, 60), start: sim.GraspTruth = G(500, 30),
                trajectories: tuple[sim.Trajectory, sim.Trajectory] | None = None,
                return_solves: bool = False):
    """Closed-loop tool-tip control with online updates, then a replay at a new posture.

    Phase 0 follows the shaking trajectory with the chosen updater running.
    Phase 1 replays the same tip targets anchored to commands from a
    different hand rotation, with updates stopped. With ``return_solves``
    the per-epoch controller logs come back too, as
    (phase, step, epoch, gamma, loss, position error) rows.
    """
    if mode not in CONTROL_MODES:
        raise KeyError(f"unknown control mode {mode!r}; choose from {CONTROL_MODES}")
    traj, alt = trajectories or (build_trajectory(cfg), build_trajectory(cfg, alt=True))
    a = cfg.adapt
    p = _code(latents, cfg.grid, start)
    buffer = OnlineBuffer(a.capacity, a.c_collect)
    lat = LatentUpdater(model, p, a.lr, a.momentum, a.n_thre, a.n_epoch)
    wts = WeightUpdater(model, p, a.weight_lr, a.momentum, a.n_thre, a.n_epoch)
    current = model
    noise = _noise(cfg, 2)
    limits = cfg.arm.limits
    header = (["phase", "step", "time_s", "stored", "buffer_size"]
              + [f"p_{i + 1}" for i in range(model.latent_dim)]
              + ["loss", "ctrl_err_mm"])
    log = RunLog(header)
    solves = []
    for phase, tr in enumerate((traj, alt)):
        for t, (u_orig, x_ref) in enumerate(zip(tr.commands, tr.tip_targets)):
            ccfg = ControllerConfig(cfg.controller.gamma_max, cfg.controller.n_line,
                                    cfg.controller.n_epochs, cfg.controller.alpha,
                                    AnchorTo(u_orig), cfg.controller.search_positive)
            res = optimize_command(current, lat.p, u_orig, x_ref, ccfg, limits=limits)
            solves.extend([phase, t, *row] for row in res.log)
            x = sim.tool_tip(cfg.arm, res.u, truth, cfg.tool) + noise()
            err = float(np.linalg.norm(x - x_ref))
            stored = False
            if phase == 0:
                stored = buffer.observe(res.u, x)
                if stored and mode == "update_p":
                    lat.update(buffer)
                elif stored and mode == "update_w":
                    current = wts.update(buffer)
            log.rows.append([phase, t, float(tr.times[t]), int(stored), len(buffer),
                             *map(float, lat.p), res.loss, err])
    ph = log.column("phase")
    err = log.column("ctrl_err_mm")
    n_coll = np.cumsum(log.column("stored")[ph == 0])
    s0 = tracking_errors(np.zeros((int((ph == 0).sum()), 1)), err[ph == 0][:, None], n_coll,
                         min_collected=a.capacity)
    log.summary = {
        "mode": mode,
        "initial_err_mm": float(err[0]),
        "adapt_window_mean_mm": s0.window_mean,
        "adapt_window_start_step": s0.window_start,
        "replay_mean_mm": float(err[ph == 1].mean()),
    }
    return (log, solves) if return_solves else log


def pb_map(latents: dict[int, np.ndarray], grid: list[sim.GraspTruth] | None = None) -> RunLog:
    """Project learned codes to their two principal axes, labelled by grasp."""
    ids = sorted(latents)
    proj = pca_2d(np.stack([latents[k] for k in ids])).projections
    if proj.shape[1] < 2:
        proj = np.pad(proj, ((0, 0), (0, 2 - proj.shape[1])))
    log = RunLog(["grasp_id", "pc1", "pc2", "l_tool", "phi_tool", "psi_tool"])
    for k, (a, b) in zip(ids, proj):
        label = grid[k].label() if grid is not None and k < len(grid) else ("", "", "")
        log.rows.append([k, float(a), float(b), *label])
    return log


def phi_spread_by_length(latents, grid, lengths=(300.0, 500.0, 700.0), phis=(0.0, 60.0)):
    """Distance between the phi=phis[0] and phi=phis[1] codes at each tool length."""
    out = {}
    for l in lengths:
        a = _code(latents, grid, G(l, phis[0]))
        b = _code(latents, grid, G(l, phis[1]))
        out[l] = float(np.linalg.norm(a - b))
    return out


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
