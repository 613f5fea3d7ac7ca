"""Planar biped episode logic: PD actuation, contact, rewards, termination.

Each Episode owns one randomized model instance, its gait clock, command,
symmetry memory and rng, and is stepped at the control rate; the dynamics
backend integrates ``decimation`` physics substeps per control step with the
PD target held.  Episodes are independent state machines -- VecRunner simply
steps a list of them and gathers the batch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .. import model as mdl
from .. import rewards as rwd
from ..errors import AmbleError, NumericalError
from ..gait import GaitClock, advance
from . import backend
from .modelpack import pack_model
from .randomize import RandomizationRanges, randomize

_INTEGRATORS = {"euler": backend.INTEGRATOR_EULER, "rk4": backend.INTEGRATOR_RK4}


@dataclass(frozen=True)
class SimConfig:
    physics_dt: float = 1e-3
    decimation: int = 10                  # physics substeps per control step
    integrator: str = "euler"             # "euler" | "rk4"
    contact_stiffness: float = 2e4        # N/m
    contact_damping: float = 2e2          # N s/m
    friction: float = 0.8
    episode_length: float = 20.0          # s
    term_height_frac: float = 0.6         # fall when root below this x nominal
    term_pitch: float = 1.0               # rad
    action_scale: float = 0.5             # rad, clamp on target offsets
    reset_pos_noise: float = 0.03         # rad
    reset_vel_noise: float = 0.05         # rad/s
    push_enabled: bool = True             # impulse + external-force schedule

    def __post_init__(self):
        if self.physics_dt <= 0:
            raise AmbleError("physics timestep must be > 0")
        if self.decimation < 1:
            raise AmbleError("control decimation must be >= 1")
        if self.integrator not in _INTEGRATORS:
            raise AmbleError(f"unknown integrator {self.integrator!r}")

    @property
    def control_dt(self) -> float:
        return self.physics_dt * self.decimation

    @property
    def max_steps(self) -> int:
        return int(round(self.episode_length / self.control_dt))


@dataclass(frozen=True)
class CommandRanges:
    vx: tuple[float, float] = (0.2, 0.8)
    vy: tuple[float, float] = (0.0, 0.0)    # fixed 0 in planar mode
    yaw: tuple[float, float] = (0.0, 0.0)
    # a fresh command is drawn every this many seconds within an episode so
    # the policy sees several commands per life (0 disables resampling)
    resample_interval_s: float = 5.0


def contact_forces(state: mdl.SimState, model: mdl.RobotModel,
                   config: SimConfig) -> np.ndarray:
    """(2, 2) per-foot (tangential, normal) contact force from the penalty law.

    Heel and toe points each carry half the foot's stiffness and damping, so a
    flat foot at uniform penetration p yields a total normal force k * p.
    Tangential demand is viscous and clamped to the friction cone.
    """
    k, c, mu = config.contact_stiffness, config.contact_damping, config.friction
    out = np.zeros((2, 2))
    for fi, side in enumerate(("left", "right")):
        frame = model.foot_frame(side)
        for sign in (-1.0, 1.0):
            off = (frame.offset[0] + sign * frame.contact_half_extent,
                   frame.offset[1])
            px, pz = mdl._point_world(model, frame.link, off, state.root_pos,
                                      state.root_pitch, state.joint_pos)
            if pz >= 0.0:
                continue
            probe = replace(state, foot_forces=np.zeros((2, 2)))
            vx, vz = _point_velocity(model, frame.link, off, probe)
            fn = max(0.5 * k * (-pz) + 0.5 * c * (-vz), 0.0)
            ft = float(np.clip(-0.5 * c * vx, -mu * fn, mu * fn))
            out[fi] += (ft, fn)
    return out


def _point_velocity(model, link_name, offset, state):
    root = (float(state.root_pos[0]), float(state.root_pos[1]))
    px, pz = mdl._point_world(model, link_name, offset, state.root_pos,
                              state.root_pitch, state.joint_pos)
    vx = float(state.root_vel[0]) - state.root_ang_vel * (pz - root[1])
    vz = float(state.root_vel[1]) + state.root_ang_vel * (px - root[0])
    x, z = root
    angle = state.root_pitch
    for joint in mdl._chain_to_link(model, link_name):
        c, s = math.cos(angle), math.sin(angle)
        ax, az = joint.anchor
        x += c * ax - s * az
        z += s * ax + c * az
        qdot = float(state.joint_vel[model.joint_index(joint.name)])
        vx += -qdot * (pz - z)
        vz += qdot * (px - x)
        angle += float(state.joint_pos[model.joint_index(joint.name)])
    return vx, vz


class Episode:
    """One environment: randomized model, clock, command, reward memory."""

    def __init__(self, model: mdl.RobotModel, sim_config: SimConfig,
                 clock_template: GaitClock, weights: rwd.RewardWeights,
                 ranges: RandomizationRanges, command_ranges: CommandRanges,
                 seed: int, env_id: int = 0,
                 noise_scale: np.ndarray | None = None,
                 force_python_backend: bool = False):
        self.base_model = model
        self.cfg = sim_config
        self.clock_template = clock_template
        self.weights = weights
        self.ranges = ranges
        self.command_ranges = command_ranges
        self.env_id = env_id
        self.rng = np.random.default_rng(np.random.SeedSequence(entropy=seed,
                                                                spawn_key=(env_id,)))
        self.noise_scale = noise_scale
        self._force_python = force_python_backend
        self._nominal_height = mdl.nominal_root_height(model)
        self.reset()

    # -- lifecycle -----------------------------------------------------------

    def reset(self) -> mdl.PolicyObservation:
        cfg = self.cfg
        self.model, self.sample = randomize(self.base_model, self.ranges,
                                            self.rng, cfg.episode_length)
        self.pack = pack_model(self.model, strength=self.sample.motor_strength)
        self.sim = backend.make_sim(self.pack, force_python=self._force_python)
        self.command = self._sample_command()
        self.clock = replace(self.clock_template,
                             phase=float(self.rng.uniform(0.0, 1.0)))
        self.memory = rwd.SymmetryMemory()
        self.step_count = 0
        self.time = 0.0
        self.done = False
        self.prev_action = np.zeros(self.model.joint_count)
        self._prev_joint_vel = np.zeros(self.model.joint_count)
        self._impulse_pending = cfg.push_enabled
        q = np.zeros(self.pack.nq)
        settle = self.model.total_mass * self.model.gravity / (2 * cfg.contact_stiffness)
        q[1] = self._nominal_height - settle
        q[2] = self.rng.uniform(-1.0, 1.0) * min(0.02, cfg.reset_pos_noise)
        q[3:] = np.asarray(self.model.default_pose) + self.rng.uniform(
            -cfg.reset_pos_noise, cfg.reset_pos_noise, self.model.joint_count)
        qd = np.zeros(self.pack.nq)
        qd[3:] = self.rng.uniform(-cfg.reset_vel_noise, cfg.reset_vel_noise,
                                  self.model.joint_count)
        self._q = q
        self._qd = qd
        self.state = self._make_state(np.zeros((2, 2)))
        self._feet_base = mdl.foot_positions_base(self.model, self.state.joint_pos)
        return self.observe()

    def _sample_command(self) -> mdl.Command:
        cr = self.command_ranges
        return mdl.Command(vx=float(self.rng.uniform(*cr.vx)),
                           vy=float(self.rng.uniform(*cr.vy)),
                           yaw_rate=float(self.rng.uniform(*cr.yaw)))

    def _make_state(self, foot_forces: np.ndarray) -> mdl.SimState:
        q, qd = self._q, self._qd
        return mdl.SimState(root_pos=q[0:2].copy(), root_pitch=float(q[2]),
                            root_vel=qd[0:2].copy(), root_ang_vel=float(qd[2]),
                            joint_pos=q[3:].copy(), joint_vel=qd[3:].copy(),
                            foot_forces=foot_forces, time=self.time)

    # -- observation ---------------------------------------------------------

    def observe(self) -> mdl.PolicyObservation:
        return mdl.assemble_observation(
            self.state, self.command, self.clock, self.prev_action, self.model,
            noise_scale=self.noise_scale, rng=self.rng,
            lin_vel_scale=self.sample.lin_vel_scale)

    def disc_observation(self) -> np.ndarray:
        return mdl.assemble_discriminator_observation(self.state, self.model,
                                                      feet_base=self._feet_base)

    # -- stepping -------------------------------------------------------------

    def step(self, action: np.ndarray):
        """Advance one control step.  Returns (state, obs, report, done, info)."""
        if self.done:
            raise AmbleError("step called on a finished episode")
        cfg = self.cfg
        action = mdl.clamp_action(action, cfg.action_scale)
        q_target = np.asarray(self.model.default_pose) + action

        interval = self.command_ranges.resample_interval_s
        if interval > 0 and self.step_count > 0 and \
                self.step_count % max(int(round(interval / cfg.control_dt)), 1) == 0:
            self.command = self._sample_command()

        if self._impulse_pending and self.time >= self.sample.impulse_time:
            self._qd[0] += self.sample.impulse_sign * self.sample.impulse
            self._impulse_pending = False
        ext_fx = 0.0
        if cfg.push_enabled and (self.sample.external_force_start <= self.time
                                 < self.sample.external_force_start
                                 + self.sample.external_force_duration):
            ext_fx = self.sample.external_force * (
                self.model.total_mass / 60.0)

        q, qd, tau, foot_pos, foot_vel, foot_force = self.sim.substeps(
            self._q, self._qd, q_target, cfg.decimation, cfg.physics_dt,
            _INTEGRATORS[cfg.integrator], cfg.contact_stiffness,
            cfg.contact_damping, cfg.friction, ext_fx, backend.TORQUE_PD)
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(qd))):
            raise NumericalError(f"non-finite state in env {self.env_id}")
        self._q, self._qd = q, qd
        self.time += cfg.control_dt
        self.step_count += 1
        self.clock = advance(self.clock, cfg.control_dt)
        self.state = self._make_state(foot_force)

        joint_accel = (self.state.joint_vel - self._prev_joint_vel) / cfg.control_dt
        self._prev_joint_vel = self.state.joint_vel.copy()
        # base-frame foot positions from the backend world kinematics
        c, s = math.cos(-self.state.root_pitch), math.sin(-self.state.root_pitch)
        rel = foot_pos - self.state.root_pos
        feet_base = np.column_stack([c * rel[:, 0] - s * rel[:, 1],
                                     s * rel[:, 0] + c * rel[:, 1]])
        self._feet_base = feet_base
        terms = {
            "command": rwd.command_reward(
                (self.state.root_vel[0], 0.0, 0.0), self.command, self.weights),
            "periodic": rwd.periodic_reward(self.state, self.clock, self.weights,
                                            self.model, fk=foot_vel),
            "foot_speed": rwd.foot_speed_reward(
                self.clock, np.linalg.norm(foot_vel, axis=1), self.weights),
            "height_diff": rwd.height_difference_reward(
                self.clock, foot_pos[:, 1], self.weights),
        }
        sym, self.memory = rwd.symmetry_reward(self.state, self.clock,
                                               self.memory, self.model,
                                               self.weights, fk=feet_base)
        terms["symmetry"] = sym
        terms.update(rwd.regularization_rewards(
            self.state, action, self.prev_action, tau, self.model,
            self.weights, joint_accel))
        report = rwd.total_reward(terms, self.weights)
        self.prev_action = action

        fell = (self.state.root_pos[1] < cfg.term_height_frac * self._nominal_height
                or abs(self.state.root_pitch) > cfg.term_pitch)
        timeout = self.step_count >= cfg.max_steps
        self.done = bool(fell or timeout)
        obs = self.observe()
        info = {
            "fall": bool(fell), "timeout": bool(timeout and not fell),
            "torques": tau, "foot_pos": foot_pos, "foot_vel": foot_vel,
            "disc_obs": self.disc_observation(), "command": self.command,
        }
        return self.state, obs, report, self.done, info


class VecRunner:
    """A set of independent episodes stepped with one frozen policy."""

    def __init__(self, n_envs: int, make_env):
        if n_envs < 1:
            raise AmbleError("need at least one environment")
        self.envs = [make_env(i) for i in range(n_envs)]
        self.obs = [env.observe() for env in self.envs]
        self.disc_obs = [env.disc_observation() for env in self.envs]

    @property
    def n_envs(self) -> int:
        return len(self.envs)

    def obs_matrix(self) -> np.ndarray:
        return np.stack([o.vec for o in self.obs])

    def step(self, actions: np.ndarray):
        """Step every env; auto-reset finished episodes.

        Returns a list of per-env records.  ``next_obs`` is the observation of
        the state the action produced (the terminal one on episode end), while
        the runner's stored observation advances to the post-reset one.
        """
        records = []
        for i, env in enumerate(self.envs):
            prev_disc = self.disc_obs[i]
            state, obs, report, done, info = env.step(actions[i])
            rec = {
                "obs": self.obs[i], "next_obs": obs, "report": report,
                "done": done, "fall": info["fall"], "timeout": info["timeout"],
                "pair": np.concatenate([prev_disc, info["disc_obs"]]),
                "episode_length": None,
            }
            if done:
                rec["episode_length"] = env.step_count
                reset_obs = env.reset()
                self.obs[i] = reset_obs
                self.disc_obs[i] = env.disc_observation()
            else:
                self.obs[i] = obs
                self.disc_obs[i] = info["disc_obs"]
            records.append(rec)
        return records


def run_parallel(runner: VecRunner, act_fn, steps: int):
    """Roll every environment forward with a frozen policy.

    ``act_fn(obs_matrix) -> (actions, log_probs)`` is evaluated once per step
    for the whole batch.  Returns a dict of stacked arrays with leading shape
    (steps, n_envs) plus the per-step transition pairs for the discriminator.
    """
    N = runner.n_envs
    obs_list, next_obs_list, act_list, logp_list = [], [], [], []
    pairs, dones, falls, timeouts, reports = [], [], [], [], []
    episode_lengths = []
    for _ in range(steps):
        obs_mat = runner.obs_matrix()
        actions, logps = act_fn(obs_mat)
        records = runner.step(actions)
        obs_list.append(obs_mat)
        next_obs_list.append(np.stack([r["next_obs"].vec for r in records]))
        act_list.append(np.asarray(actions))
        logp_list.append(np.asarray(logps))
        pairs.append(np.stack([r["pair"] for r in records]))
        dones.append(np.array([r["done"] for r in records], dtype=bool))
        falls.append(np.array([r["fall"] for r in records], dtype=bool))
        timeouts.append(np.array([r["timeout"] for r in records], dtype=bool))
        reports.append([r["report"] for r in records])
        episode_lengths.extend(r["episode_length"] for r in records
                               if r["episode_length"] is not None)
    terms = {name: np.array([[rep.terms[name] for rep in row] for row in reports])
             for name in rwd.TERM_NAMES}
    return {
        "obs": np.stack(obs_list), "next_obs": np.stack(next_obs_list),
        "actions": np.stack(act_list), "log_probs": np.stack(logp_list),
        "pairs": np.stack(pairs), "dones": np.stack(dones),
        "falls": np.stack(falls), "timeouts": np.stack(timeouts),
        "terms": terms, "episode_lengths": episode_lengths,
    }
