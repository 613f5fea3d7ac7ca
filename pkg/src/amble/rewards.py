"""Reward terms: command tracking, periodic gait, swing shaping, regularization.

Every term is a pure scalar function of the state (symmetry threads an explicit
memory value) and the weighted total is assembled by ``total_reward`` into a
per-term report.  Sign conventions that the printed sources leave ambiguous
are controlled by ``literal_exponents``:

* the arm-position term defaults to ``exp(-||b_arm||_1)`` (a bounded bonus that
  shrinks with arm excursion); the literal switch restores the unbounded
  ``exp(+||b_arm||_1)``;
* the joint-limit term defaults to ``exp(-2 * overshoot)`` with
  ``overshoot = sum(max(0, b - upper) + max(0, lower - b))``; the literal
  switch restores ``exp(-2 * sum(min(0, b - upper) - max(0, b - lower)))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import model as mdl
from .gait import GaitClock, leg_stance_expectations, swing_progress

TERM_NAMES = (
    "imitation", "command", "periodic", "foot_speed", "height_diff", "symmetry",
    "action_diff", "dof_limits", "dof_velocity", "dof_acceleration",
    "arm_dof", "orientation", "torso_yaw", "torques",
)


@dataclass(frozen=True)
class RewardWeights:
    """All reward scales and mixing weights, with documented defaults."""

    # command tracking: per-axis weight and error sharpness, axes (x, y, yaw)
    command_weight: tuple[float, float, float] = (1.0, 0.5, 0.5)
    command_sharpness: tuple[float, float, float] = (4.0, 4.0, 4.0)
    # periodic reward coefficients
    alpha_stance: float = 0.5
    alpha_swing: float = 0.5
    # swing-shaping scales and sharpness
    foot_speed_scale: float = 16.0
    # saturation on the foot speed entering the swing-speed reward, m/s;
    # 0 disables the cap (the literal printed form).  Capping removes the
    # incentive to flail the legs for unbounded quadratic reward.
    foot_speed_cap: float = 0.0
    height_scale: float = 2.0
    height_sharpness: float = 25.0
    height_clearance: float = 0.02     # m, target foot height difference
    symmetry_scale: float = 3.3
    symmetry_sharpness: float = 10.0
    # regularization scales (weights on each term in the total)
    w_action_diff: float = 0.1
    w_dof_limits: float = 0.1
    w_dof_velocity: float = 0.1
    w_dof_acceleration: float = 0.1
    w_arm_dof: float = 0.0
    w_orientation: float = 0.2
    w_torso_yaw: float = -0.1
    w_torques: float = 0.1
    # total-reward mixing
    w_imitation: float = 0.5
    w_command: float = 0.5
    w_periodic: float = 0.5
    # reproduce the printed (sign-ambiguous) forms of the arm and limit terms
    literal_exponents: bool = False

    def __post_init__(self):
        for w in self.command_sharpness:
            if w < 0:
                raise ValueError("command sharpness must be >= 0")
        for name in ("foot_speed_scale", "height_sharpness", "symmetry_sharpness"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    def term_weight(self, name: str) -> float:
        swing_terms = ("periodic", "foot_speed", "height_diff", "symmetry")
        if name == "imitation":
            return self.w_imitation
        if name == "command":
            return self.w_command
        if name in swing_terms:
            return self.w_periodic
        return getattr(self, "w_" + name)


@dataclass(frozen=True)
class SymmetryMemory:
    """Stored and lagged foot-separation vectors; reset to zero at episode start."""

    delta_f: np.ndarray = field(default_factory=lambda: np.zeros(2))
    delta_l: np.ndarray = field(default_factory=lambda: np.zeros(2))


@dataclass(frozen=True)
class RewardReport:
    """Unweighted per-term values, their weights, and the weighted total."""

    terms: dict[str, float]
    weights: dict[str, float]
    total: float

    def weighted(self, name: str) -> float:
        return self.weights[name] * self.terms[name]


def command_reward(v_actual, command: mdl.Command, w: RewardWeights) -> float:
    """Sum over (x, y, yaw) of weight * exp(-sharpness * |desired - actual|)."""
    v_actual = np.asarray(v_actual, dtype=np.float64)
    err = np.abs(command.as_array() - v_actual)
    lam = np.asarray(w.command_weight)
    om = np.asarray(w.command_sharpness)
    return float(np.sum(lam * np.exp(-om * err)))


def periodic_reward(state: mdl.SimState, clock: GaitClock, w: RewardWeights,
                    model: mdl.RobotModel, fk=None) -> float:
    """Per foot: alpha_stance * Q * exp(-10 F^2) + alpha_swing * (1-Q) * exp(-200 v^2),
    with Q the leg's stance expectation, F the contact-force norm and v the foot speed."""
    q_stance = leg_stance_expectations(clock)
    vel = fk if fk is not None else mdl.foot_velocities_world(model, state)
    total = 0.0
    for i in range(2):
        force_sq = float(state.foot_forces[i, 0]) ** 2 + float(state.foot_forces[i, 1]) ** 2
        speed_sq = float(vel[i][0]) ** 2 + float(vel[i][1]) ** 2
        total += w.alpha_stance * q_stance[i] * math.exp(-10.0 * force_sq)
        total += w.alpha_swing * (1.0 - q_stance[i]) * math.exp(-200.0 * speed_sq)
    return total


def foot_speed_reward(clock: GaitClock, foot_speeds, w: RewardWeights | None = None) -> float:
    """Rewards fast feet late in swing: scale * (q * v)^2 with q = clip(progress - 0.5, 0, 1),
    gated off entirely once q exceeds 0.6.  The speed saturates at
    ``foot_speed_cap`` when that cap is enabled."""
    w = w or RewardWeights()
    total = 0.0
    for theta, speed in zip((clock.theta_left, clock.theta_right), foot_speeds):
        q = min(max(swing_progress(clock.phase, theta, clock.swing_ratio) - 0.5, 0.0), 1.0)
        if q > 0.6:
            continue
        v = float(speed)
        if w.foot_speed_cap > 0.0:
            v = min(v, w.foot_speed_cap)
        total += w.foot_speed_scale * (q * v) ** 2
    return total


def height_difference_reward(clock: GaitClock, foot_heights, w: RewardWeights | None = None) -> float:
    """Rewards foot clearance over the other foot during early swing (progress <= 0.3)."""
    w = w or RewardWeights()
    total = 0.0
    for i, theta in enumerate((clock.theta_left, clock.theta_right)):
        q = swing_progress(clock.phase, theta, clock.swing_ratio)
        if q > 0.3:
            continue
        dh = float(foot_heights[i]) - float(foot_heights[1 - i]) - w.height_clearance
        total += w.height_scale * math.exp(-w.height_sharpness * abs(dh))
    return total


def symmetry_reward(state: mdl.SimState, clock: GaitClock, mem: SymmetryMemory,
                    model: mdl.RobotModel, w: RewardWeights | None = None,
                    fk=None) -> tuple[float, SymmetryMemory]:
    """Double-support foot-overlap reward.

    d = p_left - p_right (base frame); during double support (both stance
    expectations above 0.5) the stored separation snaps to d and the reward is
    scale * exp(-sharpness * ||d + delta_l||_1); otherwise the reward is 0 and
    the stored separation is kept.  The update order follows the printed
    equations exactly, so during double support delta_l equals d and the
    penalised quantity is twice the separation.
    """
    w = w or RewardWeights()
    feet = fk if fk is not None else mdl.foot_positions_base(model, state.joint_pos)
    d = np.asarray(feet[0], dtype=np.float64) - np.asarray(feet[1], dtype=np.float64)
    q1, q2 = leg_stance_expectations(clock)
    tf = 1.0 if (q1 > 0.5 and q2 > 0.5) else 0.0
    delta_f = tf * d + (1.0 - tf) * mem.delta_f
    delta_l = (1.0 - tf) * delta_f + tf * d
    reward = w.symmetry_scale * tf * math.exp(
        -w.symmetry_sharpness * float(np.abs(d + delta_l).sum()))
    return reward, SymmetryMemory(delta_f=delta_f, delta_l=delta_l)


def regularization_rewards(state: mdl.SimState, action: np.ndarray,
                           prev_action: np.ndarray, torques: np.ndarray,
                           model: mdl.RobotModel, w: RewardWeights,
                           joint_accel: np.ndarray | None = None) -> dict[str, float]:
    """Smoothness/safety terms, one scalar per row (see module docstring).

    ``joint_accel`` is the finite-difference joint acceleration over the
    control step; zero when not supplied (e.g. at the first step).
    """
    action = np.asarray(action, dtype=np.float64)
    prev_action = np.asarray(prev_action, dtype=np.float64)
    torques = np.asarray(torques, dtype=np.float64)
    b = state.joint_pos
    bdot = state.joint_vel
    bddot = np.zeros_like(bdot) if joint_accel is None else np.asarray(joint_accel)

    lower = model.joint_array("lower")
    upper = model.joint_array("upper")
    if w.literal_exponents:
        limit_sum = float(np.sum(np.minimum(0.0, b - upper) - np.maximum(0.0, b - lower)))
    else:
        limit_sum = float(np.sum(np.maximum(0.0, b - upper) + np.maximum(0.0, lower - b)))

    arm_idx = [model.joint_index(n) for n in model.arm_joints]
    arm_norm = float(np.abs(b[arm_idx]).sum()) if arm_idx else 0.0
    arm_sign = 1.0 if w.literal_exponents else -1.0

    yaw_idx = [model.joint_index(n) for n in model.yaw_joints]
    yaw_norm = float(np.abs(b[yaw_idx]).sum()) if yaw_idx else 0.0

    roll = 0.0  # planar model
    return {
        "action_diff": math.exp(-0.05 * float(np.linalg.norm(action - prev_action))),
        "dof_limits": math.exp(-2.0 * limit_sum),
        "dof_velocity": math.exp(-1e-4 * float(np.dot(bdot, bdot))),
        "dof_acceleration": math.exp(-1e-7 * float(np.dot(bddot, bddot))),
        "arm_dof": math.exp(arm_sign * arm_norm),
        "orientation": math.exp(-300.0 * (roll ** 2 + state.root_pitch ** 2)),
        "torso_yaw": yaw_norm,
        "torques": math.exp(-5e-4 * float(np.linalg.norm(torques))),
    }


def total_reward(terms: dict[str, float], w: RewardWeights) -> RewardReport:
    """Weighted sum of all terms; missing terms count as zero."""
    full = {name: float(terms.get(name, 0.0)) for name in TERM_NAMES}
    weights = {name: w.term_weight(name) for name in TERM_NAMES}
    total = sum(weights[name] * full[name] for name in TERM_NAMES)
    return RewardReport(terms=full, weights=weights, total=total)
