"""Cross-integrator validation: one policy, one seed, two integrators.

Runs the identical scenario under semi-implicit Euler and Runge-Kutta and
reports per-step divergence of the root position, pitch and joint angles,
plus the maxima over the horizon.  The passive-pendulum scenario (fixed base,
zero torque, one leg released from a deflection) serves as the calibration
case: both integrators must agree closely there before any locomotion
comparison is meaningful.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .. import model as mdl
from . import backend
from .env import Episode
from .modelpack import pack_model

SCENARIOS = ("locomotion", "pendulum")


@dataclass
class CrossvalReport:
    scenario: str
    steps: np.ndarray        # (T,)
    times: np.ndarray        # (T,)
    droot_x: np.ndarray
    droot_z: np.ndarray
    dpitch: np.ndarray
    djoint_max: np.ndarray

    @property
    def max_root(self) -> float:
        return float(np.max(np.hypot(self.droot_x, self.droot_z)))

    @property
    def max_pitch(self) -> float:
        return float(np.max(self.dpitch))

    @property
    def max_joint(self) -> float:
        return float(np.max(self.djoint_max))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "time_s", "droot_x_m", "droot_z_m",
                             "dpitch_rad", "djoint_max_rad"])
            for i in range(len(self.steps)):
                writer.writerow([int(self.steps[i]), repr(float(self.times[i])),
                                 repr(float(self.droot_x[i])),
                                 repr(float(self.droot_z[i])),
                                 repr(float(self.dpitch[i])),
                                 repr(float(self.djoint_max[i]))])


def _diff_report(scenario, dt, traj_a, traj_b) -> CrossvalReport:
    qa = np.asarray(traj_a)
    qb = np.asarray(traj_b)
    T = qa.shape[0]
    return CrossvalReport(
        scenario=scenario,
        steps=np.arange(1, T + 1),
        times=dt * np.arange(1, T + 1),
        droot_x=np.abs(qa[:, 0] - qb[:, 0]),
        droot_z=np.abs(qa[:, 1] - qb[:, 1]),
        dpitch=np.abs(qa[:, 2] - qb[:, 2]),
        djoint_max=np.abs(qa[:, 3:] - qb[:, 3:]).max(axis=1),
    )


def pendulum_trajectory(model: mdl.RobotModel, integrator: str,
                        dt: float = 1e-3, horizon: float = 1.0,
                        hip_angle: float = 0.8, damped: bool = True,
                        force_python: bool = False) -> np.ndarray:
    """(T, nq) passive fixed-base swing trajectory, one state row per step.

    The calibration scenario keeps the joints' viscous damping active (the
    same passive mode the energy checks use); set damped=False for a
    frictionless swing.
    """
    pack = pack_model(model)
    sim = backend.make_sim(pack, force_python=force_python)
    q = np.zeros(pack.nq)
    q[3:] = model.default_pose
    q[3] = hip_angle
    qd = np.zeros(pack.nq)
    target = np.asarray(model.default_pose)
    kind = {"euler": backend.INTEGRATOR_EULER, "rk4": backend.INTEGRATOR_RK4}[integrator]
    mode = backend.TORQUE_DAMPING if damped else backend.TORQUE_PASSIVE
    steps = int(round(horizon / dt))
    out = np.empty((steps, pack.nq))
    for i in range(steps):
        q, qd, *_ = sim.substeps(q, qd, target, 1, dt, kind, 0.0, 0.0, 0.0,
                                 mode=mode, fixed_base=True)
        out[i] = q
    return out


def crossval_pendulum(model: mdl.RobotModel, dt: float = 1e-3,
                      horizon: float = 1.0) -> CrossvalReport:
    a = pendulum_trajectory(model, "euler", dt, horizon)
    b = pendulum_trajectory(model, "rk4", dt, horizon)
    return _diff_report("pendulum", dt, a, b)


def locomotion_trajectory(make_episode, policy_fn, integrator: str,
                          steps: int) -> np.ndarray:
    """(T, nq)-like trajectory of [root_x, root_z, pitch, joints] at the
    control rate under a deterministic policy."""
    env: Episode = make_episode(integrator)
    out = np.empty((steps, 3 + env.model.joint_count))
    obs = env.observe()
    for i in range(steps):
        action = policy_fn(obs.vec)
        state, obs, _, done, _ = env.step(action)
        out[i, 0:2] = state.root_pos
        out[i, 2] = state.root_pitch
        out[i, 3:] = state.joint_pos
        if done:
            obs = env.reset()
    return out


def crossval_locomotion(make_episode, policy_fn, steps: int,
                        control_dt: float) -> CrossvalReport:
    a = locomotion_trajectory(make_episode, policy_fn, "euler", steps)
    b = locomotion_trajectory(make_episode, policy_fn, "rk4", steps)
    return _diff_report("locomotion", control_dt, a, b)
