"""Robot description, physics state, and observation/command vector layouts.

The robot is a planar (sagittal-plane) rigid-body tree with a floating base:
generalized coordinates are ``[root_x, root_z, pitch, q_1 .. q_J]`` where the
``q_j`` are the actuated joint angles in model order.  All angles are
counter-clockwise positive; at the zero pose every leg link points straight
down and the torso points straight up.

Policy observation layout (``layout_version`` = 1), one flat float64 vector:

    [0:2]    root linear velocity (x, z)   m/s   (scaled by the per-episode
             velocity-observation multiplier, additive noise applied)
    [2]      root angular velocity          rad/s
    [3:5]    projected gravity direction in the base frame (unit vector)
    [5:8]    command (vx_des, vy_des, yaw_des)
    [8:8+J]  joint positions                rad
    [..+J]   joint velocities               rad/s
    [..+3]   gait clock features (sin 2*pi*phi, cos 2*pi*phi, swing ratio)
    [..+1]   root height                    m
    [..+J]   previous action                rad

Discriminator observation layout: ``[joint_pos (J), joint_vel (J),
left foot position in base frame (x, z), right foot position (x, z)]``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ModelError

MODEL_SCHEMA_VERSION = 1
OBS_LAYOUT_VERSION = 1


@dataclass(frozen=True)
class Link:
    name: str
    mass: float          # kg
    length: float        # m
    com: tuple[float, float]   # centre-of-mass offset in the link frame, m
    inertia: float       # rotational inertia about the COM, kg m^2


@dataclass(frozen=True)
class Joint:
    name: str
    parent: str
    child: str
    anchor: tuple[float, float]  # joint position in the parent link frame, m
    lower: float         # rad
    upper: float         # rad
    velocity_limit: float  # rad/s
    torque_limit: float  # N m
    kp: float            # N m / rad
    kd: float            # N m s / rad


@dataclass(frozen=True)
class FootFrame:
    side: str            # "left" or "right"
    link: str
    offset: tuple[float, float]  # frame position in the link frame, m
    # heel/toe contact points sit at offset_x -+ this along the link's x axis;
    # each carries half the contact stiffness so a flat foot at uniform
    # penetration p produces a total normal force of exactly k * p
    contact_half_extent: float = 0.0


@dataclass(frozen=True)
class RobotModel:
    """Immutable kinematic/dynamic description of a planar biped."""

    name: str
    links: tuple[Link, ...]
    joints: tuple[Joint, ...]
    foot_frames: tuple[FootFrame, ...]
    gravity: float = 9.81
    default_pose: tuple[float, ...] = ()
    arm_joints: tuple[str, ...] = ()       # joints hit by the arm-position penalty
    yaw_joints: tuple[str, ...] = ()       # joints hit by the torso-yaw penalty

    def __post_init__(self):
        if not self.default_pose:
            object.__setattr__(self, "default_pose", (0.0,) * len(self.joints))
        validate_model(self)

    @property
    def joint_count(self) -> int:
        return len(self.joints)

    @property
    def nq(self) -> int:
        """Generalized-coordinate count: 3 base coordinates + joints."""
        return 3 + len(self.joints)

    @property
    def total_mass(self) -> float:
        return sum(link.mass for link in self.links)

    @property
    def root_link(self) -> Link:
        return self.links[0]

    def link_index(self, name: str) -> int:
        for i, link in enumerate(self.links):
            if link.name == name:
                return i
        raise ModelError(f"unknown link {name!r}")

    def joint_index(self, name: str) -> int:
        for i, joint in enumerate(self.joints):
            if joint.name == name:
                return i
        raise ModelError(f"unknown joint {name!r}")

    def joint_array(self, attr: str) -> np.ndarray:
        return np.array([getattr(j, attr) for j in self.joints], dtype=np.float64)

    def foot_frame(self, side: str) -> FootFrame:
        for frame in self.foot_frames:
            if frame.side == side:
                return frame
        raise ModelError(f"no foot frame for side {side!r}")


def validate_model(model: RobotModel) -> None:
    """Raise ModelError on any violated model invariant."""
    if not model.links:
        raise ModelError("model has no links")
    names = [l.name for l in model.links]
    if len(set(names)) != len(names):
        raise ModelError("duplicate link names")
    for link in model.links:
        if link.mass <= 0 or link.length <= 0 or link.inertia <= 0:
            raise ModelError(f"link {link.name!r}: mass, length, inertia must be > 0")
    children = set()
    for joint in model.joints:
        if joint.lower >= joint.upper:
            raise ModelError(f"joint {joint.name!r}: lower limit must be < upper limit")
        if joint.kp <= 0 or joint.kd <= 0 or joint.torque_limit <= 0 or joint.velocity_limit <= 0:
            raise ModelError(f"joint {joint.name!r}: gains and limits must be > 0")
        if joint.parent not in names or joint.child not in names:
            raise ModelError(f"joint {joint.name!r}: unknown parent or child link")
        if joint.child in children:
            raise ModelError(f"link {joint.child!r} has two parent joints")
        if joint.child == names[0]:
            raise ModelError("root link cannot be a joint child")
        children.add(joint.child)
    # every non-root link must be reachable from the root (tree, no cycles)
    reachable = {names[0]}
    pending = True
    while pending:
        pending = False
        for joint in model.joints:
            if joint.parent in reachable and joint.child not in reachable:
                reachable.add(joint.child)
                pending = True
    if reachable != set(names):
        raise ModelError("joint list does not form a tree rooted at the base link")
    if len(model.foot_frames) != 2:
        raise ModelError("exactly two foot frames required")
    sides = {f.side for f in model.foot_frames}
    if sides != {"left", "right"}:
        raise ModelError("foot frames must be one 'left' and one 'right'")
    for frame in model.foot_frames:
        if frame.link not in names:
            raise ModelError(f"foot frame {frame.side!r} attached to unknown link")
    if len(model.default_pose) != len(model.joints):
        raise ModelError("default_pose length must equal joint count")
    for name in model.arm_joints + model.yaw_joints:
        if name not in {j.name for j in model.joints}:
            raise ModelError(f"unknown joint {name!r} in arm/yaw set")


def build_default_model() -> RobotModel:
    """Desk-scale planar 7-link biped: torso plus thigh/shank/foot per leg."""
    links = (
        Link("torso", mass=5.0, length=0.36, com=(0.0, 0.18), inertia=0.060),
        Link("thigh_l", mass=1.5, length=0.22, com=(0.0, -0.11), inertia=0.0061),
        Link("shank_l", mass=1.0, length=0.22, com=(0.0, -0.11), inertia=0.0040),
        Link("foot_l", mass=0.5, length=0.05, com=(0.0, -0.03), inertia=0.0020),
        Link("thigh_r", mass=1.5, length=0.22, com=(0.0, -0.11), inertia=0.0061),
        Link("shank_r", mass=1.0, length=0.22, com=(0.0, -0.11), inertia=0.0040),
        Link("foot_r", mass=0.5, length=0.05, com=(0.0, -0.03), inertia=0.0020),
    )
    leg = dict(velocity_limit=20.0, torque_limit=60.0, kp=80.0, kd=2.0)
    ankle = dict(velocity_limit=20.0, torque_limit=25.0, kp=50.0, kd=2.0)
    joints = (
        Joint("hip_l", "torso", "thigh_l", (0.0, 0.0), -1.2, 1.2, **leg),
        Joint("knee_l", "thigh_l", "shank_l", (0.0, -0.22), -2.3, 0.0, **leg),
        Joint("ankle_l", "shank_l", "foot_l", (0.0, -0.22), -0.9, 0.9, **ankle),
        Joint("hip_r", "torso", "thigh_r", (0.0, 0.0), -1.2, 1.2, **leg),
        Joint("knee_r", "thigh_r", "shank_r", (0.0, -0.22), -2.3, 0.0, **leg),
        Joint("ankle_r", "shank_r", "foot_r", (0.0, -0.22), -0.9, 0.9, **ankle),
    )
    feet = (
        FootFrame("left", "foot_l", (0.0, -0.05), contact_half_extent=0.07),
        FootFrame("right", "foot_r", (0.0, -0.05), contact_half_extent=0.07),
    )
    # slight crouch keeps the knees off their straight-leg limit
    default_pose = (0.12, -0.25, 0.13, 0.12, -0.25, 0.13)
    return RobotModel(
        name="planar_biped",
        links=links,
        joints=joints,
        foot_frames=feet,
        default_pose=default_pose,
    )


# ---------------------------------------------------------------------------
# model config file (human-readable JSON, versioned)
# ---------------------------------------------------------------------------

def model_to_dict(model: RobotModel) -> dict:
    return {
        "schema_version": MODEL_SCHEMA_VERSION,
        "name": model.name,
        "gravity": model.gravity,
        "links": [
            {"name": l.name, "mass": l.mass, "length": l.length,
             "com": list(l.com), "inertia": l.inertia}
            for l in model.links
        ],
        "joints": [
            {"name": j.name, "parent": j.parent, "child": j.child,
             "anchor": list(j.anchor), "lower": j.lower, "upper": j.upper,
             "velocity_limit": j.velocity_limit, "torque_limit": j.torque_limit,
             "kp": j.kp, "kd": j.kd}
            for j in model.joints
        ],
        "foot_frames": [
            {"side": f.side, "link": f.link, "offset": list(f.offset),
             "contact_half_extent": f.contact_half_extent}
            for f in model.foot_frames
        ],
        "default_pose": list(model.default_pose),
        "arm_joints": list(model.arm_joints),
        "yaw_joints": list(model.yaw_joints),
    }


def model_from_dict(data: dict) -> RobotModel:
    try:
        version = data["schema_version"]
        if version != MODEL_SCHEMA_VERSION:
            raise ModelError(f"unsupported model schema_version {version}")
        return RobotModel(
            name=data["name"],
            gravity=float(data.get("gravity", 9.81)),
            links=tuple(Link(l["name"], float(l["mass"]), float(l["length"]),
                             (float(l["com"][0]), float(l["com"][1])),
                             float(l["inertia"])) for l in data["links"]),
            joints=tuple(Joint(j["name"], j["parent"], j["child"],
                               (float(j["anchor"][0]), float(j["anchor"][1])),
                               float(j["lower"]), float(j["upper"]),
                               float(j["velocity_limit"]), float(j["torque_limit"]),
                               float(j["kp"]), float(j["kd"])) for j in data["joints"]),
            foot_frames=tuple(FootFrame(f["side"], f["link"],
                                        (float(f["offset"][0]), float(f["offset"][1])),
                                        float(f.get("contact_half_extent", 0.0)))
                              for f in data["foot_frames"]),
            default_pose=tuple(float(v) for v in data.get("default_pose", [])),
            arm_joints=tuple(data.get("arm_joints", [])),
            yaw_joints=tuple(data.get("yaw_joints", [])),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelError(f"malformed model config: {exc}") from exc


def load_model(path) -> RobotModel:
    with open(path) as fh:
        return model_from_dict(json.load(fh))


def save_model(model: RobotModel, path) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# physics state
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SimState:
    """Full physics state at one instant.  Arrays are treated as immutable."""

    root_pos: np.ndarray      # (2,) x, z in m
    root_pitch: float
    root_vel: np.ndarray      # (2,) m/s
    root_ang_vel: float       # rad/s
    joint_pos: np.ndarray     # (J,) rad
    joint_vel: np.ndarray     # (J,) rad/s
    foot_forces: np.ndarray   # (2, 2): [left, right] x (tangential, normal) N
    time: float = 0.0

    def validate(self, model: RobotModel) -> None:
        J = model.joint_count
        if self.joint_pos.shape != (J,) or self.joint_vel.shape != (J,):
            raise ModelError(f"state joint vectors must have length {J}")
        if self.foot_forces.shape != (2, 2):
            raise ModelError("foot_forces must be shaped (2, 2)")
        if np.any(self.foot_forces[:, 1] < 0):
            raise ModelError("contact normal force must be >= 0")


def rest_state(model: RobotModel, root_height: float | None = None) -> SimState:
    """State at the default pose with zero velocities."""
    qj = np.asarray(model.default_pose, dtype=np.float64)
    if root_height is None:
        root_height = nominal_root_height(model)
    return SimState(
        root_pos=np.array([0.0, root_height]),
        root_pitch=0.0,
        root_vel=np.zeros(2),
        root_ang_vel=0.0,
        joint_pos=qj,
        joint_vel=np.zeros_like(qj),
        foot_forces=np.zeros((2, 2)),
    )


def nominal_root_height(model: RobotModel) -> float:
    """Root height that puts the lowest foot frame exactly on the ground."""
    feet = foot_positions_base(model, np.asarray(model.default_pose))
    return -float(min(feet[0][1], feet[1][1]))


# ---------------------------------------------------------------------------
# forward kinematics (pure python reference implementation)
# ---------------------------------------------------------------------------

def _chain_to_link(model: RobotModel, link_name: str) -> list[Joint]:
    """Joints from the root down to (and including) the one driving link_name."""
    by_child = {j.child: j for j in model.joints}
    chain: list[Joint] = []
    name = link_name
    while name in by_child:
        joint = by_child[name]
        chain.append(joint)
        name = joint.parent
    chain.reverse()
    return chain


def _point_world(model: RobotModel, link_name: str, offset: tuple[float, float],
                 root_pos: Sequence[float], pitch: float,
                 joint_pos: np.ndarray) -> tuple[float, float]:
    x, z = float(root_pos[0]), float(root_pos[1])
    angle = pitch
    for joint in _chain_to_link(model, link_name):
        c, s = math.cos(angle), math.sin(angle)
        ax, az = joint.anchor
        x += c * ax - s * az
        z += s * ax + c * az
        angle += float(joint_pos[model.joint_index(joint.name)])
    c, s = math.cos(angle), math.sin(angle)
    ox, oz = offset
    return (x + c * ox - s * oz, z + s * ox + c * oz)


def foot_positions_world(model: RobotModel, state: SimState) -> np.ndarray:
    """(2, 2) world positions of the left and right foot frames."""
    out = np.empty((2, 2))
    for i, side in enumerate(("left", "right")):
        frame = model.foot_frame(side)
        out[i] = _point_world(model, frame.link, frame.offset,
                              state.root_pos, state.root_pitch, state.joint_pos)
    return out


def foot_positions_base(model: RobotModel, joint_pos: np.ndarray) -> np.ndarray:
    """(2, 2) foot frame positions in the base frame (root at origin, pitch removed)."""
    out = np.empty((2, 2))
    for i, side in enumerate(("left", "right")):
        frame = model.foot_frame(side)
        out[i] = _point_world(model, frame.link, frame.offset,
                              (0.0, 0.0), 0.0, joint_pos)
    return out


def foot_velocities_world(model: RobotModel, state: SimState) -> np.ndarray:
    """(2, 2) world-frame linear velocities of the foot frames."""
    out = np.empty((2, 2))
    root = (float(state.root_pos[0]), float(state.root_pos[1]))
    for i, side in enumerate(("left", "right")):
        frame = model.foot_frame(side)
        px, pz = _point_world(model, frame.link, frame.offset,
                              state.root_pos, state.root_pitch, state.joint_pos)
        vx = float(state.root_vel[0])
        vz = float(state.root_vel[1])
        # base rotation spins every point about the root origin
        vx += -state.root_ang_vel * (pz - root[1])
        vz += state.root_ang_vel * (px - root[0])
        x, z = root
        angle = state.root_pitch
        for joint in _chain_to_link(model, frame.link):
            c, s = math.cos(angle), math.sin(angle)
            ax, az = joint.anchor
            x += c * ax - s * az
            z += s * ax + c * az
            qdot = float(state.joint_vel[model.joint_index(joint.name)])
            vx += -qdot * (pz - z)
            vz += qdot * (px - x)
            angle += float(state.joint_pos[model.joint_index(joint.name)])
        out[i] = (vx, vz)
    return out


# ---------------------------------------------------------------------------
# commands, actions, observations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Command:
    """Desired base velocities.  Lateral and yaw are fixed at 0 in planar mode."""

    vx: float
    vy: float = 0.0
    yaw_rate: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.vx, self.vy, self.yaw_rate])


def clamp_action(action: np.ndarray, scale: float) -> np.ndarray:
    """Clamp target joint-position offsets to the configured action scale."""
    action = np.asarray(action, dtype=np.float64)
    if not np.all(np.isfinite(action)):
        raise ModelError("action contains non-finite values")
    return np.clip(action, -scale, scale)


def projected_gravity(pitch: float) -> np.ndarray:
    """World gravity direction (0, -1) expressed in the base frame."""
    return np.array([-math.sin(pitch), -math.cos(pitch)])


@dataclass(frozen=True)
class PolicyObservation:
    """Flat observation vector plus its documented layout (see module docstring)."""

    vec: np.ndarray
    layout_version: int = OBS_LAYOUT_VERSION

    def __len__(self) -> int:
        return self.vec.shape[0]


def observation_dim(model: RobotModel) -> int:
    J = model.joint_count
    return 2 + 1 + 2 + 3 + J + J + 3 + 1 + J


def observation_slices(model: RobotModel) -> dict[str, slice]:
    """Named slices into the flat observation vector, in layout order."""
    J = model.joint_count
    sizes = [("root_lin_vel", 2), ("root_ang_vel", 1), ("projected_gravity", 2),
             ("command", 3), ("joint_pos", J), ("joint_vel", J),
             ("clock", 3), ("root_height", 1), ("prev_action", J)]
    out, start = {}, 0
    for name, size in sizes:
        out[name] = slice(start, start + size)
        start += size
    return out


def assemble_observation(state: SimState, command: Command, clock,
                         prev_action: np.ndarray, model: RobotModel,
                         noise_scale: np.ndarray | None = None,
                         rng: np.random.Generator | None = None,
                         lin_vel_scale: float = 1.0) -> PolicyObservation:
    """Build the policy observation.

    ``noise_scale`` is a per-channel additive uniform noise half-width (same
    length as the observation); pass None for a noise-free observation.
    ``lin_vel_scale`` is the per-episode velocity-observation multiplier.
    Deterministic for a fixed rng state.
    """
    J = model.joint_count
    if state.joint_pos.shape != (J,):
        raise ModelError(f"state has {state.joint_pos.shape[0]} joints, model has {J}")
    if prev_action.shape != (J,):
        raise ModelError(f"prev_action must have length {J}")
    phase = 2.0 * math.pi * clock.phase
    vec = np.empty(2 + 1 + 2 + 3 + J + J + 3 + 1 + J)
    vec[0:2] = state.root_vel
    vec[0:2] *= lin_vel_scale
    vec[2] = state.root_ang_vel
    vec[3] = -math.sin(state.root_pitch)
    vec[4] = -math.cos(state.root_pitch)
    vec[5] = command.vx
    vec[6] = command.vy
    vec[7] = command.yaw_rate
    vec[8:8 + J] = state.joint_pos
    vec[8 + J:8 + 2 * J] = state.joint_vel
    vec[8 + 2 * J] = math.sin(phase)
    vec[9 + 2 * J] = math.cos(phase)
    vec[10 + 2 * J] = clock.swing_ratio
    vec[11 + 2 * J] = state.root_pos[1]
    vec[12 + 2 * J:] = prev_action
    if noise_scale is not None:
        noise_scale = np.asarray(noise_scale, dtype=np.float64)
        if noise_scale.shape != vec.shape:
            raise ModelError("noise_scale length must match the observation")
        if rng is None:
            raise ModelError("noise_scale given without an rng")
        if np.any(noise_scale != 0.0):
            vec = vec + rng.uniform(-1.0, 1.0, vec.shape) * noise_scale
    return PolicyObservation(vec=vec)


def default_noise_scale(model: RobotModel, lin_vel_noise: float = 0.05) -> np.ndarray:
    """Per-channel additive noise: zero everywhere except root linear velocity."""
    scale = np.zeros(observation_dim(model))
    scale[observation_slices(model)["root_lin_vel"]] = lin_vel_noise
    return scale


def disc_observation_dim(model: RobotModel) -> int:
    return 2 * model.joint_count + 2 * len(model.foot_frames)


def assemble_discriminator_observation(state: SimState, model: RobotModel,
                                        feet_base: np.ndarray | None = None) -> np.ndarray:
    """Joint positions/velocities plus base-frame foot positions, one flat vector.

    ``feet_base`` may carry precomputed base-frame foot positions (e.g. from
    the dynamics backend's forward kinematics); when omitted they are computed
    here.  Both routes produce identical features.
    """
    feet = foot_positions_base(model, state.joint_pos) if feet_base is None \
        else np.asarray(feet_base)
    vec = np.concatenate([state.joint_pos, state.joint_vel, feet.ravel()])
    if not np.all(np.isfinite(vec)):
        raise ModelError("discriminator observation contains non-finite values")
    return vec
