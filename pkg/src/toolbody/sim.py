"""Kinematic arm and duster simulator.

Angles are in degrees at every public interface and lengths in millimetres.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass

import numpy as np

DEFAULT_DROOP = (0.0, 0.0, -100.0)


def axis_rotation(axis, angle_rad):
    """Rotation matrices about a unit ``axis``; ``angle_rad`` may be an array."""
    axis = np.asarray(axis, dtype=float)
    angle = np.asarray(angle_rad, dtype=float)
    x, y, z = axis
    c = np.cos(angle)
    s = np.sin(angle)
    C = 1.0 - c
    R = np.empty(angle.shape + (3, 3))
    R[..., 0, 0] = c + x * x * C
    R[..., 0, 1] = x * y * C - z * s
    R[..., 0, 2] = x * z * C + y * s
    R[..., 1, 0] = y * x * C + z * s
    R[..., 1, 1] = c + y * y * C
    R[..., 1, 2] = y * z * C - x * s
    R[..., 2, 0] = z * x * C - y * s
    R[..., 2, 1] = z * y * C + x * s
    R[..., 2, 2] = c + z * z * C
    return R


def rotation_log(R):
    """Axis-angle vector (radians) of a rotation matrix."""
    cos_theta = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    theta = np.arccos(cos_theta)
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if theta < 1e-9:
        return 0.5 * w
    if np.pi - theta < 1e-6:
        # near pi the antisymmetric part vanishes; recover the axis from the diagonal
        diag = np.clip((np.diag(R) + 1.0) / 2.0, 0.0, None)
        k = int(np.argmax(diag))
        axis = R[:, k] + np.eye(3)[k]
        axis /= np.linalg.norm(axis)
        return theta * axis
    return theta / (2.0 * np.sin(theta)) * w


@dataclass(frozen=True)
class Joint:
    axis: tuple[float, float, float]
    link: tuple[float, float, float]
    name: str = ""


@dataclass(frozen=True, eq=False)
class ArmModel:
    """Serial chain of revolute joints.

    Each joint rotates about ``axis`` (expressed in the frame left by the
    previous link) and is followed by the fixed translation ``link``.
    ``base_offset`` places the first joint relative to the origin.
    """

    joints: tuple[Joint, ...]
    limits: np.ndarray  # (n, 2) degrees
    base_offset: tuple[float, float, float] = (0.0, 0.0, 0.0)
    name: str = "arm"

    def __post_init__(self):
        limits = np.asarray(self.limits, dtype=float)
        object.__setattr__(self, "limits", limits)
        if limits.shape != (len(self.joints), 2):
            raise ValueError(f"limits must have shape ({len(self.joints)}, 2), got {limits.shape}")
        if np.any(limits[:, 0] >= limits[:, 1]):
            raise ValueError("every joint limit needs min < max")
        for j in self.joints:
            if abs(np.linalg.norm(j.axis) - 1.0) > 1e-12:
                raise ValueError(f"joint axis {j.axis} is not unit length")

    @property
    def dof(self) -> int:
        return len(self.joints)

    def clamp(self, u):
        return np.clip(u, self.limits[:, 0], self.limits[:, 1])


@dataclass(frozen=True)
class GraspTruth:
    """Where and how the stick sits in the hand."""

    l_tool: float = 500.0
    phi_tool: float = 0.0
    psi_tool: float = 0.0

    def __post_init__(self):
        if self.l_tool < 0:
            raise ValueError("l_tool must be non-negative")
        for name in ("phi_tool", "psi_tool"):
            if abs(getattr(self, name)) > 90.0:
                raise ValueError(f"{name} must lie within +-90 deg")

    def label(self) -> tuple[float, float, float]:
        return (self.l_tool, self.phi_tool, self.psi_tool)


@dataclass(frozen=True)
class ToolModel:
    """Duster: rigid stick plus a cloth hanging a fixed offset below its tip.

    ``compliance`` > 0 bends the stick downward by
    ``compliance * sin(elevation)`` radians, an analogue of the connected
    duster whose foam joint sags more the higher it is held.
    """

    droop_offset: tuple[float, float, float] = DEFAULT_DROOP
    compliance: float = 0.0
    stick_length: float = 500.0
    cloth_length: float = 200.0
    extension_length: float = 250.0

    def __post_init__(self):
        if self.compliance < 0:
            raise ValueError("compliance must be >= 0")


def _check_command(arm: ArmModel, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape[-1] != arm.dof:
        raise ValueError(f"command has {u.shape[-1]} joints, arm has {arm.dof}")
    return u


def fk_hand(arm: ArmModel, u):
    """Hand position (mm) and rotation for a command or a batch of commands."""
    u = _check_command(arm, u)
    q = np.deg2rad(u)
    batch = q.shape[:-1]
    R = np.broadcast_to(np.eye(3), batch + (3, 3)).copy()
    pos = np.broadcast_to(np.asarray(arm.base_offset, dtype=float), batch + (3,)).copy()
    for i, joint in enumerate(arm.joints):
        R = R @ axis_rotation(joint.axis, q[..., i])
        pos = pos + R @ np.asarray(joint.link, dtype=float)
    return pos, R


def stick_direction(grasp: GraspTruth) -> np.ndarray:
    """Unit stick direction in the hand frame.

    The grasp axis is hand +x. ``phi_tool`` tilts it toward hand +z (rotation
    about hand y), then ``psi_tool`` swings it about hand z.
    """
    phi = np.deg2rad(grasp.phi_tool)
    psi = np.deg2rad(grasp.psi_tool)
    return np.array([np.cos(phi) * np.cos(psi), np.cos(phi) * np.sin(psi), np.sin(phi)])


def _bend(direction, compliance):
    """Pitch world-frame unit directions (..., 3) down by compliance*sin(elevation)."""
    d = np.asarray(direction, dtype=float)
    if compliance == 0.0:
        return d
    horiz = d[..., :2]
    hnorm = np.linalg.norm(horiz, axis=-1)
    elevation = np.arctan2(d[..., 2], hnorm)
    new_elev = elevation - compliance * np.sin(elevation)
    safe = np.where(hnorm > 1e-12, hnorm, 1.0)[..., None]
    h_unit = np.where(hnorm[..., None] > 1e-12, horiz / safe, np.array([1.0, 0.0]))
    out = np.empty_like(d)
    out[..., :2] = np.cos(new_elev)[..., None] * h_unit
    out[..., 2] = np.sin(new_elev)
    return out


def tip_offset(R_hand, grasp: GraspTruth, tool: ToolModel):
    """World-frame vector from the hand to the tool tip for hand rotation(s)."""
    d_world = np.asarray(R_hand) @ stick_direction(grasp)
    d_world = _bend(d_world, tool.compliance)
    return grasp.l_tool * d_world + np.asarray(tool.droop_offset, dtype=float)


def tool_tip(arm: ArmModel, u, grasp: GraspTruth, tool: ToolModel = ToolModel()):
    """Simulated tool-tip position (mm); batched over leading command axes."""
    pos, R = fk_hand(arm, u)
    return pos + tip_offset(R, grasp, tool)


def sample_commands(arm: ArmModel, n: int, seed: int) -> np.ndarray:
    """``n`` commands drawn uniformly inside the joint limits."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    return rng.uniform(arm.limits[:, 0], arm.limits[:, 1], size=(n, arm.dof))


class IKError(RuntimeError):
    def __init__(self, message, residual, best_command):
        super().__init__(message)
        self.residual = residual
        self.best_command = best_command


def _pose_error(arm, u, target_pos, target_rot, orientation_weight):
    pos, R = fk_hand(arm, u)
    e = target_pos - pos
    if target_rot is None:
        return e, np.linalg.norm(e), 0.0
    w = rotation_log(target_rot @ R.T)
    return np.concatenate([e, orientation_weight * w]), np.linalg.norm(e), np.linalg.norm(w)


def _dls(arm, error_fn, u_init, max_iters, damping, fd_step_rad, max_step_rad,
         rest=None, null_gain=0.0):
    """Shared damped-least-squares loop; ``error_fn(u)`` is target minus pose.

    With ``rest`` (degrees) each step also drifts toward that posture through
    the task null space, at ``null_gain`` of the remaining gap per iteration.
    """
    u = arm.clamp(_check_command(arm, u_init).copy())
    h_deg = np.rad2deg(fd_step_rad)
    best_score, best_u = np.inf, u.copy()
    for _ in range(max_iters + 1):
        e, score, ok = error_fn(u)
        if score < best_score:
            best_score, best_u = score, u.copy()
        if ok:
            return u, None
        J = np.empty((e.size, arm.dof))
        for j in range(arm.dof):
            du = np.zeros(arm.dof)
            du[j] = h_deg
            # error = target - pose, so d(pose)/dq = -(d error)/dq
            J[:, j] = -(error_fn(u + du)[0] - error_fn(u - du)[0]) / (2.0 * fd_step_rad)
        J_pinv = J.T @ np.linalg.inv(J @ J.T + damping**2 * np.eye(e.size))
        step = J_pinv @ e
        if rest is not None and null_gain > 0:
            pull = null_gain * np.deg2rad(np.asarray(rest) - u)
            step += pull - J_pinv @ (J @ pull)
        norm = np.linalg.norm(step)
        if norm > max_step_rad:
            step *= max_step_rad / norm
        u = arm.clamp(u + np.rad2deg(step))
    return None, best_u


def ik_hand(
    arm: ArmModel,
    target_pos,
    u_init,
    target_rot=None,
    tol_mm: float = 1.0,
    max_iters: int = 200,
    damping: float = 0.01,
    orientation_weight: float = 100.0,
    rot_tol: float = 1e-2,
    fd_step_rad: float = 1e-4,
    max_step_rad: float = 0.2,
    rest=None,
    null_gain: float = 0.0,
):
    """Damped least squares on a central-difference pose Jacobian.

    ``orientation_weight`` (mm per radian) scales the rotation residual
    against the position residual. Converged when the position residual is
    below ``tol_mm`` and, if ``target_rot`` is given, the rotation residual
    is below ``rot_tol`` radians. ``rest``/``null_gain`` bias the redundant
    degrees of freedom toward a rest posture. Raises :class:`IKError`
    otherwise.
    """
    target_pos = np.asarray(target_pos, dtype=float)

    def error_fn(u):
        e, pos_res, rot_res = _pose_error(arm, u, target_pos, target_rot, orientation_weight)
        ok = pos_res < tol_mm and (target_rot is None or rot_res < rot_tol)
        return e, pos_res + orientation_weight * rot_res, ok

    u, best = _dls(arm, error_fn, u_init, max_iters, damping, fd_step_rad, max_step_rad,
                   rest, null_gain)
    if u is not None:
        return u
    _, pos_res, rot_res = _pose_error(arm, best, target_pos, target_rot, orientation_weight)
    raise IKError(
        f"IK did not converge in {max_iters} iterations "
        f"(position residual {pos_res:.3f} mm, rotation residual {rot_res:.4f} rad)",
        residual=pos_res,
        best_command=best,
    )


def ik_tip(arm: ArmModel, target_tip, grasp: GraspTruth, tool: ToolModel, u_init,
           tol_mm: float = 1.0, max_iters: int = 200, damping: float = 0.01,
           fd_step_rad: float = 1e-4, max_step_rad: float = 0.2,
           rest=None, null_gain: float = 0.0):
    """Position-only IK that puts the simulated tool tip on ``target_tip``."""
    target_tip = np.asarray(target_tip, dtype=float)

    def error_fn(u):
        e = target_tip - tool_tip(arm, u, grasp, tool)
        r = np.linalg.norm(e)
        return e, r, r < tol_mm

    u, best = _dls(arm, error_fn, u_init, max_iters, damping, fd_step_rad, max_step_rad,
                   rest, null_gain)
    if u is not None:
        return u
    residual = float(np.linalg.norm(target_tip - tool_tip(arm, best, grasp, tool)))
    raise IKError(f"tip IK did not converge in {max_iters} iterations "
                  f"(residual {residual:.3f} mm)", residual=residual, best_command=best)


def duster_targets(reference, n_cycles: int, y_step: float = 100.0,
                   dip=(200.0, -200.0), y_limit: float = 500.0,
                   y_direction: float = -1.0) -> np.ndarray:
    """Tool-tip targets of the duster-shaking motion.

    Each cycle steps the tip in y, dips by ``dip`` in (x, z) and returns;
    the first cycle starts at ``reference`` itself. The y stepping turns
    around once the travel since the last turn would exceed ``y_limit``,
    so the tip sweeps between the reference and ``y_limit`` along
    ``y_direction``.
    """
    ref = np.asarray(reference, dtype=float)
    out = []
    dy = 0.0
    travel = 0.0
    direction = float(np.sign(y_direction)) or 1.0
    for cycle in range(n_cycles):
        if cycle > 0:
            if travel + y_step > y_limit + 1e-9:
                direction = -direction
                travel = 0.0
            dy += direction * y_step
            travel += y_step
        base = ref + np.array([0.0, dy, 0.0])
        low = base + np.array([dip[0], 0.0, dip[1]])
        out.extend([base, low, base.copy()])
    return np.array(out)


@dataclass
class Trajectory:
    tip_targets: np.ndarray  # (T, 3)
    commands: np.ndarray  # (T, dof)
    times: np.ndarray  # (T,) seconds

    def __len__(self):
        return len(self.commands)


def realize_trajectory(arm: ArmModel, tip_targets, grasp: GraspTruth, tool: ToolModel,
                       hand_rot, u_init, rate_hz: float = 5.0, null_gain: float = 0.1,
                       **ik_kwargs) -> Trajectory:
    """Joint commands reaching each tip target, warm-started step to step.

    With ``hand_rot`` the hand keeps that rotation and the hand position is
    solved for; with ``None`` the tool tip itself is the (position-only)
    end effector. Redundancy is resolved toward ``u_init`` with
    ``null_gain`` so the posture does not wander over long motions.
    """
    targets = np.asarray(tip_targets, dtype=float)
    ik_kwargs.setdefault("rest", np.asarray(u_init, dtype=float))
    ik_kwargs.setdefault("null_gain", null_gain)
    if hand_rot is not None:
        hand_rot = np.asarray(hand_rot, dtype=float)
        offset = tip_offset(hand_rot, grasp, tool)
    u = np.asarray(u_init, dtype=float)
    commands = []
    for i, tip in enumerate(targets):
        try:
            if hand_rot is None:
                u = ik_tip(arm, tip, grasp, tool, u, **ik_kwargs)
            else:
                u = ik_hand(arm, tip - offset, u, target_rot=hand_rot, **ik_kwargs)
        except IKError as exc:
            raise IKError(f"step {i}: {exc}", exc.residual, exc.best_command) from exc
        commands.append(u)
    commands = np.array(commands)
    return Trajectory(targets, commands, np.arange(len(commands)) / rate_hz)


def duster_trajectory(arm: ArmModel, reference, n_cycles: int, grasp: GraspTruth,
                      tool: ToolModel, hand_rot, u_init, y_direction: float = -1.0,
                      **ik_kwargs) -> Trajectory:
    """Shaking motion realized as joint commands (see :func:`duster_targets`)."""
    return realize_trajectory(arm, duster_targets(reference, n_cycles, y_direction=y_direction),
                              grasp, tool, hand_rot, u_init, **ik_kwargs)


# -- presets ---------------------------------------------------------------

X, Y, Z = (1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0)


def pr2_like_arm() -> ArmModel:
    """Seven-joint right arm with its shoulder at (-200, -190, 1100) mm.

    Shoulder offset 100, upper arm 400, forearm 321, hand 180 (about 1 m).
    """
    joints = (
        Joint(Z, (100.0, 0.0, 0.0), "shoulder_pan"),
        Joint(Y, (0.0, 0.0, 0.0), "shoulder_lift"),
        Joint(X, (400.0, 0.0, 0.0), "upper_arm_roll"),
        Joint(Y, (0.0, 0.0, 0.0), "elbow_flex"),
        Joint(X, (321.0, 0.0, 0.0), "forearm_roll"),
        Joint(Y, (0.0, 0.0, 0.0), "wrist_pitch"),
        Joint(Z, (180.0, 0.0, 0.0), "wrist_yaw"),
    )
    limits = PR2_LIMITS.copy()
    return ArmModel(joints, limits, base_offset=(-200.0, -190.0, 1100.0), name="pr2")


# sized to the shaking motion's workspace rather than the full mechanical range
PR2_LIMITS = np.array([
    [-55.0, 50.0],
    [-25.0, 27.0],
    [-18.0, 39.0],
    [-108.0, -52.0],
    [-24.0, 34.0],
    [40.0, 115.0],
    [-39.0, 32.0],
])


def musashi_like_arm() -> ArmModel:
    """Five-joint arm (shoulder 3, elbow 2), wrist fixed."""
    joints = (
        Joint(Z, (0.0, 0.0, 0.0), "shoulder_yaw"),
        Joint(Y, (0.0, 0.0, 0.0), "shoulder_pitch"),
        Joint(X, (300.0, 0.0, 0.0), "shoulder_roll"),
        Joint(Y, (0.0, 0.0, 0.0), "elbow_pitch"),
        Joint(X, (320.0, 0.0, 0.0), "forearm_roll"),
    )
    limits = np.array([
        [-60.0, 60.0],
        [-60.0, 30.0],
        [-60.0, 60.0],
        [-110.0, 0.0],
        [-60.0, 60.0],
    ])
    return ArmModel(joints, limits, base_offset=(0.0, -200.0, 1300.0), name="musashi")


ARM_PRESETS = {"pr2": pr2_like_arm, "musashi": musashi_like_arm}


def pr2_grasp_grid() -> list[GraspTruth]:
    return [GraspTruth(l, phi) for l in (300.0, 500.0, 700.0) for phi in (0.0, 30.0, 60.0)]


def musashi_grasp_grid() -> list[GraspTruth]:
    return [GraspTruth(500.0, phi, psi) for phi in (0.0, 30.0, 60.0) for psi in (-30.0, 0.0, 30.0)]


GRID_PRESETS = {"pr2": pr2_grasp_grid, "musashi": musashi_grasp_grid}


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.replace(",", " ").split()]


def load_arm(path) -> ArmModel:
    """Read an arm from an INI file.

    ``[arm]`` may hold ``preset`` (pr2 or musashi) and/or ``base_offset``;
    each ``[joint.N]`` section (N from 1) gives ``axis``, ``link``,
    ``limits`` and optionally ``name``. Joint sections replace the preset
    chain entirely.
    """
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise FileNotFoundError(f"cannot read arm config {path}")
    return arm_from_config(cp)


def arm_from_config(cp: configparser.ConfigParser) -> ArmModel:
    sec = cp["arm"] if cp.has_section("arm") else {}
    preset = sec.get("preset", "pr2")
    if preset not in ARM_PRESETS:
        raise ValueError(f"unknown arm preset {preset!r}")
    arm = ARM_PRESETS[preset]()
    joint_secs = sorted((s for s in cp.sections() if s.startswith("joint.")),
                        key=lambda s: int(s.split(".", 1)[1]))
    base = tuple(_floats(sec["base_offset"])) if "base_offset" in sec else arm.base_offset
    if joint_secs:
        joints, limits = [], []
        for s in joint_secs:
            js = cp[s]
            axis = np.array(_floats(js["axis"]))
            joints.append(Joint(tuple(axis / np.linalg.norm(axis)), tuple(_floats(js["link"])),
                                js.get("name", s)))
            limits.append(_floats(js["limits"]))
        return ArmModel(tuple(joints), np.array(limits), base, name=sec.get("name", "custom"))
    return ArmModel(arm.joints, arm.limits, base, name=arm.name)


def tool_from_config(cp: configparser.ConfigParser) -> ToolModel:
    if not cp.has_section("tool"):
        return ToolModel()
    sec = cp["tool"]
    return ToolModel(
        droop_offset=tuple(_floats(sec.get("droop_offset", "0 0 -100"))),
        compliance=sec.getfloat("compliance", 0.0),
        stick_length=sec.getfloat("stick_length", 500.0),
        cloth_length=sec.getfloat("cloth_length", 200.0),
        extension_length=sec.getfloat("extension_length", 250.0),
    )
