"""Reference-motion tooling: clip files, resampling, transitions, synthetic gaits.

Clip file format (version 1): a line-oriented text header followed by one
whitespace-separated frame per line.

    amble-clip 1
    name <identifier>
    rate <frames per second>
    loop <true|false>
    joints <joint names, space separated>
    columns <time? qpos [qvel]>
    frames <count>
    ---
    <frame rows>

``qpos`` columns are required (one per joint); ``qvel`` columns are optional
and filled by central finite differences when absent; an optional leading
``time`` column must be uniformly spaced.  A loop clip's first and last
frames must agree within the loop continuity tolerance per channel.

Discriminator transitions are assembled from clip frames through the same
``assemble_discriminator_observation`` used on live simulator states, so the
demonstration and policy streams share one feature path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import model as mdl
from .errors import ClipError

CLIP_SCHEMA_VERSION = 1
# loop clips wrap from the last frame back to the first: the gap must not
# exceed roughly one frame of motion
LOOP_TOLERANCE = 0.2  # rad per channel


@dataclass(frozen=True)
class MotionClip:
    name: str
    rate: float                  # Hz
    joint_names: tuple[str, ...]
    joint_pos: np.ndarray        # (F, J) rad
    joint_vel: np.ndarray        # (F, J) rad/s
    loop: bool = False

    def __post_init__(self):
        validate_clip(self)

    @property
    def n_frames(self) -> int:
        return self.joint_pos.shape[0]

    @property
    def duration(self) -> float:
        full = self.n_frames if self.loop else self.n_frames - 1
        return full / self.rate

    @property
    def n_transitions(self) -> int:
        return self.n_frames if self.loop else self.n_frames - 1

    def frame_state(self, index: int, model: mdl.RobotModel,
                    root_height: float | None = None) -> mdl.SimState:
        """Clip frame as a SimState (root pinned at the nominal height)."""
        if root_height is None:
            root_height = mdl.nominal_root_height(model)
        return mdl.SimState(
            root_pos=np.array([0.0, root_height]), root_pitch=0.0,
            root_vel=np.zeros(2), root_ang_vel=0.0,
            joint_pos=self.joint_pos[index].copy(),
            joint_vel=self.joint_vel[index].copy(),
            foot_forces=np.zeros((2, 2)), time=index / self.rate)

    def foot_positions(self, model: mdl.RobotModel) -> np.ndarray:
        """(F, 2, 2) base-frame foot positions for every frame."""
        return np.stack([mdl.foot_positions_base(model, qp)
                         for qp in self.joint_pos])


def validate_clip(clip: MotionClip, loop_tolerance: float = LOOP_TOLERANCE) -> None:
    if clip.rate <= 0:
        raise ClipError(f"clip {clip.name!r}: frame rate must be > 0")
    if clip.joint_pos.ndim != 2 or clip.joint_pos.shape[0] < 2:
        raise ClipError(f"clip {clip.name!r}: too few frames (need >= 2)")
    if clip.joint_pos.shape[1] != len(clip.joint_names):
        raise ClipError(f"clip {clip.name!r}: frame width does not match joint schema")
    if clip.joint_vel.shape != clip.joint_pos.shape:
        raise ClipError(f"clip {clip.name!r}: velocity shape mismatch")
    if not (np.all(np.isfinite(clip.joint_pos)) and np.all(np.isfinite(clip.joint_vel))):
        raise ClipError(f"clip {clip.name!r}: non-finite values")
    if clip.loop:
        gap = np.abs(clip.joint_pos[0] - clip.joint_pos[-1]).max()
        if gap >= loop_tolerance:
            raise ClipError(f"clip {clip.name!r}: loop clip does not close "
                            f"(position gap {gap:.2e})")


def fill_velocities(joint_pos: np.ndarray, rate: float, loop: bool) -> np.ndarray:
    """Central finite differences; one-sided at the ends of non-loop clips."""
    qp = np.asarray(joint_pos, dtype=np.float64)
    vel = np.empty_like(qp)
    if loop:
        vel[:] = (np.roll(qp, -1, axis=0) - np.roll(qp, 1, axis=0)) * (rate / 2.0)
    else:
        vel[1:-1] = (qp[2:] - qp[:-2]) * (rate / 2.0)
        vel[0] = (qp[1] - qp[0]) * rate
        vel[-1] = (qp[-1] - qp[-2]) * rate
    return vel


# ---------------------------------------------------------------------------
# clip files
# ---------------------------------------------------------------------------

def save_clip(clip: MotionClip, path) -> None:
    lines = [f"amble-clip {CLIP_SCHEMA_VERSION}",
             f"name {clip.name}",
             f"rate {clip.rate!r}",
             f"loop {'true' if clip.loop else 'false'}",
             "joints " + " ".join(clip.joint_names),
             "columns qpos qvel",
             f"frames {clip.n_frames}",
             "---"]
    for i in range(clip.n_frames):
        row = np.concatenate([clip.joint_pos[i], clip.joint_vel[i]])
        lines.append(" ".join(repr(float(v)) for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_clip(path) -> MotionClip:
    with open(path) as fh:
        raw = [line.strip() for line in fh]
    lines = [l for l in raw if l]
    if not lines or not lines[0].startswith("amble-clip"):
        raise ClipError(f"{path}: not a clip file (missing magic line)")
    try:
        version = int(lines[0].split()[1])
    except (IndexError, ValueError) as exc:
        raise ClipError(f"{path}: malformed magic line") from exc
    if version != CLIP_SCHEMA_VERSION:
        raise ClipError(f"{path}: unsupported clip schema version {version}")
    header: dict[str, str] = {}
    body_start = None
    for i, line in enumerate(lines[1:], start=1):
        if line == "---":
            body_start = i + 1
            break
        key, _, value = line.partition(" ")
        header[key] = value.strip()
    if body_start is None:
        raise ClipError(f"{path}: missing '---' frame separator")
    for key in ("name", "rate", "loop", "joints", "columns", "frames"):
        if key not in header:
            raise ClipError(f"{path}: missing header field {key!r}")
    try:
        rate = float(header["rate"])
        n_frames = int(header["frames"])
    except ValueError as exc:
        raise ClipError(f"{path}: malformed numeric header field") from exc
    loop = header["loop"].lower() == "true"
    joints = tuple(header["joints"].split())
    columns = header["columns"].split()
    allowed = [["qpos"], ["qpos", "qvel"], ["time", "qpos"], ["time", "qpos", "qvel"]]
    if columns not in allowed:
        raise ClipError(f"{path}: unsupported columns layout {columns}")
    has_time = "time" in columns
    has_vel = "qvel" in columns
    J = len(joints)
    width = int(has_time) + J * (2 if has_vel else 1)
    rows = []
    for line in lines[body_start:]:
        try:
            row = [float(v) for v in line.split()]
        except ValueError as exc:
            raise ClipError(f"{path}: malformed frame row") from exc
        if len(row) != width:
            raise ClipError(f"{path}: frame row has {len(row)} columns, "
                            f"expected {width} (schema mismatch)")
        rows.append(row)
    if len(rows) != n_frames:
        raise ClipError(f"{path}: header declares {n_frames} frames, found {len(rows)}")
    if len(rows) < 2:
        raise ClipError(f"{path}: too few frames (need >= 2)")
    data = np.asarray(rows)
    col = 0
    if has_time:
        times = data[:, 0]
        col = 1
        spacing = np.diff(times)
        if spacing.size and (spacing.min() <= 0
                             or spacing.max() - spacing.min() > 1e-9 * max(1.0, spacing.max())):
            raise ClipError(f"{path}: non-uniform timestamps")
    joint_pos = data[:, col:col + J]
    if has_vel:
        joint_vel = data[:, col + J:col + 2 * J]
    else:
        joint_vel = fill_velocities(joint_pos, rate, loop)
    return MotionClip(name=header["name"], rate=rate, joint_names=joints,
                      joint_pos=joint_pos, joint_vel=joint_vel, loop=loop)


# ---------------------------------------------------------------------------
# resampling
# ---------------------------------------------------------------------------

def resample(clip: MotionClip, target_rate: float) -> MotionClip:
    """Linear position interpolation onto a uniform grid at the target rate;
    velocities are recomputed by finite differences; duration is preserved
    within one frame."""
    if target_rate <= 0:
        raise ClipError("target rate must be > 0")
    if abs(target_rate - clip.rate) < 1e-12:
        return clip
    F = clip.n_frames
    if clip.loop:
        new_f = max(int(round(clip.duration * target_rate)), 2)
        t = np.arange(new_f) / target_rate
        phase = (t * clip.rate) % F
        i0 = np.floor(phase).astype(int) % F
        i1 = (i0 + 1) % F
        frac = (phase - np.floor(phase))[:, None]
        qp = clip.joint_pos[i0] * (1 - frac) + clip.joint_pos[i1] * frac
    else:
        new_f = max(int(math.floor(clip.duration * target_rate)) + 1, 2)
        t = np.minimum(np.arange(new_f) / target_rate, clip.duration)
        x = t * clip.rate
        i0 = np.minimum(np.floor(x).astype(int), F - 2)
        frac = (x - i0)[:, None]
        qp = clip.joint_pos[i0] * (1 - frac) + clip.joint_pos[i0 + 1] * frac
    return MotionClip(name=clip.name, rate=target_rate,
                      joint_names=clip.joint_names, joint_pos=qp,
                      joint_vel=fill_velocities(qp, target_rate, clip.loop),
                      loop=clip.loop)


# ---------------------------------------------------------------------------
# clip libraries and transition sampling
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ClipLibrary:
    clips: tuple[MotionClip, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        if not self.clips:
            raise ClipError("clip library is empty")
        if len(self.weights) != len(self.clips):
            raise ClipError("need one sampling weight per clip")
        if any(w < 0 for w in self.weights) or not any(w > 0 for w in self.weights):
            raise ClipError("weights must be >= 0 with at least one positive")

    @property
    def total_transitions(self) -> int:
        return sum(c.n_transitions for c in self.clips)

    def resampled(self, rate: float) -> "ClipLibrary":
        return ClipLibrary(tuple(resample(c, rate) for c in self.clips),
                           self.weights)


def library_from_clips(clips, weights=None) -> ClipLibrary:
    clips = tuple(clips)
    if weights is None:
        weights = (1.0,) * len(clips)
    return ClipLibrary(clips, tuple(float(w) for w in weights))


def _transition_pair(clip: MotionClip, index: int, model: mdl.RobotModel,
                     root_height: float) -> np.ndarray:
    j = (index + 1) % clip.n_frames
    obs_t = mdl.assemble_discriminator_observation(
        clip.frame_state(index, model, root_height), model)
    obs_tp1 = mdl.assemble_discriminator_observation(
        clip.frame_state(j, model, root_height), model)
    return np.concatenate([obs_t, obs_tp1])


def sample_transitions(lib: ClipLibrary, count: int, rng: np.random.Generator,
                       model: mdl.RobotModel) -> np.ndarray:
    """(count, 2 * disc_dim) transition pairs: clip chosen by weight, start
    frame uniform over valid consecutive pairs (wrapping on loop clips)."""
    probs = np.asarray(lib.weights, dtype=np.float64)
    probs = probs / probs.sum()
    root_height = mdl.nominal_root_height(model)
    out = np.empty((count, 2 * mdl.disc_observation_dim(model)))
    clip_idx = rng.choice(len(lib.clips), size=count, p=probs)
    for n in range(count):
        clip = lib.clips[clip_idx[n]]
        start = int(rng.integers(0, clip.n_transitions))
        out[n] = _transition_pair(clip, start, model, root_height)
    return out


def all_transitions(lib: ClipLibrary, model: mdl.RobotModel) -> np.ndarray:
    """Every transition in the library, for the demonstration buffer."""
    root_height = mdl.nominal_root_height(model)
    rows = []
    for clip in lib.clips:
        for i in range(clip.n_transitions):
            rows.append(_transition_pair(clip, i, model, root_height))
    return np.stack(rows)


# ---------------------------------------------------------------------------
# synthetic gait generation
# ---------------------------------------------------------------------------

def _leg_ik(x: float, z: float, l1: float, l2: float) -> tuple[float, float]:
    """Hip/knee angles reaching ankle target (x, z) relative to the hip,
    z negative downward, with the knee flexing backward (negative)."""
    r2 = x * x + z * z
    r = math.sqrt(r2)
    if r > (l1 + l2) * (1.0 - 1e-12) or r < abs(l1 - l2) + 1e-12:
        raise ClipError(f"unreachable foot target ({x:.3f}, {z:.3f}) "
                        f"for leg lengths {l1}, {l2}")
    cos_knee = (l1 * l1 + l2 * l2 - r2) / (2.0 * l1 * l2)
    beta = math.acos(min(1.0, max(-1.0, cos_knee)))
    knee = beta - math.pi
    direction = math.atan2(x, -z)
    cos_alpha = (l1 * l1 + r2 - l2 * l2) / (2.0 * l1 * r)
    alpha = math.acos(min(1.0, max(-1.0, cos_alpha)))
    hip = direction + alpha
    return hip, knee


def _swing_profile(u: float, step_length: float, clearance: float):
    """Cycloidal swing-foot profile on u in [0, 1): x from -L/2 to +L/2,
    height peaking at exactly the clearance at u = 1/2."""
    x = -0.5 * step_length + step_length * (u - math.sin(2 * math.pi * u) / (2 * math.pi))
    z = 0.5 * clearance * (1.0 - math.cos(2 * math.pi * u))
    return x, z


def synth_gait(stride_period: float, step_length: float, foot_clearance: float,
               duty_factor: float, model: mdl.RobotModel | None = None,
               rate: float = 100.0, hip_height: float | None = None,
               name: str | None = None) -> MotionClip:
    """Kinematically consistent planar walking clip.

    The swing phase occupies the first (1 - duty_factor) of each leg's local
    cycle with a cycloidal foot trajectory; during stance the foot stays on
    the ground and retreats at the body speed.  Joint angles come from
    two-segment leg inverse kinematics; the ankle keeps the foot link
    vertical.  The right leg runs half a cycle after the left.  Loops exactly.
    """
    if stride_period <= 0 or step_length <= 0 or foot_clearance < 0:
        raise ClipError("gait parameters must be positive")
    if not (0.0 < duty_factor < 1.0):
        raise ClipError("duty factor must lie strictly inside (0, 1)")
    if model is None:
        model = mdl.build_default_model()
    l1 = model.links[model.link_index(model.joints[0].child)].length
    l2 = model.links[model.link_index(model.joints[1].child)].length
    sole_drop = -model.foot_frame("left").offset[1]
    if hip_height is None:
        hip_height = 0.93 * (l1 + l2) + sole_drop
    swing_frac = 1.0 - duty_factor

    frames = max(int(round(stride_period * rate)), 8)
    rate = frames / stride_period  # exact integer number of frames per cycle
    J = model.joint_count
    joint_pos = np.zeros((frames, J))
    default = np.asarray(model.default_pose)
    for i in range(frames):
        phase = i / frames
        for leg, offset in ((0, 0.0), (1, 0.5)):
            s = (phase + offset) % 1.0
            if s < swing_frac:
                u = s / swing_frac
                x, z_sole = _swing_profile(u, step_length, foot_clearance)
            else:
                v = (s - swing_frac) / duty_factor
                x = 0.5 * step_length - step_length * v
                z_sole = 0.0
            z_rel = (z_sole + sole_drop) - hip_height
            hip, knee = _leg_ik(x, z_rel, l1, l2)
            ankle = -(hip + knee)
            joint_pos[i, 3 * leg:3 * leg + 3] = (hip, knee, ankle)
    # unused joints (none for the default biped) stay at the default pose
    if J > 6:
        joint_pos[:, 6:] = default[6:]
    joint_vel = fill_velocities(joint_pos, rate, loop=True)
    if name is None:
        name = (f"synth_p{stride_period:g}_l{step_length:g}"
                f"_c{foot_clearance:g}_d{duty_factor:g}")
    return MotionClip(name=name, rate=rate,
                      joint_names=tuple(j.name for j in model.joints),
                      joint_pos=joint_pos, joint_vel=joint_vel, loop=True)


def default_library(model: mdl.RobotModel | None = None, rate: float = 100.0,
                    swing_ratio: float = 0.45) -> ClipLibrary:
    """Three synthetic walking gaits (slow, medium, fast) at the control rate."""
    duty = 1.0 - swing_ratio
    clips = [
        synth_gait(0.8, 0.10, 0.04, duty, model, rate, name="synth_slow"),
        synth_gait(0.7, 0.18, 0.05, duty, model, rate, name="synth_medium"),
        synth_gait(0.6, 0.26, 0.06, duty, model, rate, name="synth_fast"),
    ]
    return library_from_clips(clips)
