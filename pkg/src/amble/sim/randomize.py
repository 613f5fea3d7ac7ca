"""Domain randomization: physical-parameter sampling and disturbance schedules.

Range defaults follow the published randomization table: per-link mass offset,
torso centre-of-mass shift along x and z, per-joint motor strength multiplier,
a root velocity impulse, a sustained external force, and a linear-velocity
observation multiplier.  The external force presumes a full-size (60 kg)
robot, so it is scaled by (robot mass / 60 kg) when applied; the sampled raw
value is what conformance tests check against the range.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..errors import AmbleError
from ..model import RobotModel

FULL_SIZE_MASS_KG = 60.0


@dataclass(frozen=True)
class RandomizationRanges:
    mass_offset: tuple[float, float] = (-0.05, 0.05)        # kg, per link
    com_offset_x: tuple[float, float] = (-0.05, 0.05)       # m, torso
    com_offset_z: tuple[float, float] = (-0.05, 0.05)       # m, torso
    motor_strength: tuple[float, float] = (0.7, 1.4)        # x default, per joint
    impulse: tuple[float, float] = (0.0, 0.8)               # m/s on the root
    external_force: tuple[float, float] = (-500.0, 500.0)   # N, horizontal
    lin_vel_scale: tuple[float, float] = (0.8, 1.2)         # x default, observation

    def __post_init__(self):
        for name in ("mass_offset", "com_offset_x", "com_offset_z",
                     "motor_strength", "impulse", "external_force",
                     "lin_vel_scale"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise AmbleError(f"randomization range {name} has low > high")


def degenerate_ranges() -> RandomizationRanges:
    """All ranges collapsed: the nominal plant with no disturbances."""
    return RandomizationRanges(
        mass_offset=(0.0, 0.0), com_offset_x=(0.0, 0.0), com_offset_z=(0.0, 0.0),
        motor_strength=(1.0, 1.0), impulse=(0.0, 0.0),
        external_force=(0.0, 0.0), lin_vel_scale=(1.0, 1.0))


@dataclass(frozen=True)
class RandomizationSample:
    """One episode's draw from the randomization ranges."""

    mass_offset: np.ndarray      # (n_links,) kg
    com_offset_x: float          # m
    com_offset_z: float          # m
    motor_strength: np.ndarray   # (n_joints,)
    impulse: float               # m/s magnitude
    impulse_sign: float
    impulse_time: float          # s
    external_force: float        # N (unscaled)
    external_force_start: float  # s
    external_force_duration: float
    lin_vel_scale: float


def sample_randomization(ranges: RandomizationRanges, n_links: int,
                         n_joints: int, rng: np.random.Generator,
                         episode_length: float = 20.0) -> RandomizationSample:
    """Uniform draw of every randomization item; deterministic per rng state."""
    u = rng.uniform
    return RandomizationSample(
        mass_offset=u(*ranges.mass_offset, size=n_links),
        com_offset_x=float(u(*ranges.com_offset_x)),
        com_offset_z=float(u(*ranges.com_offset_z)),
        motor_strength=u(*ranges.motor_strength, size=n_joints),
        impulse=float(u(*ranges.impulse)),
        impulse_sign=1.0 if rng.random() < 0.5 else -1.0,
        impulse_time=float(u(0.0, 0.8 * episode_length)),
        external_force=float(u(*ranges.external_force)),
        external_force_start=float(u(0.0, 0.8 * episode_length)),
        external_force_duration=0.2,
        lin_vel_scale=float(u(*ranges.lin_vel_scale)),
    )


def apply_randomization(model: RobotModel, sample: RandomizationSample) -> RobotModel:
    """Model with perturbed link masses and a shifted torso centre of mass."""
    links = []
    for i, link in enumerate(model.links):
        mass = max(link.mass + float(sample.mass_offset[i]), 0.05)
        com = link.com
        if i == 0:
            com = (com[0] + sample.com_offset_x, com[1] + sample.com_offset_z)
        links.append(replace(link, mass=mass, com=com))
    return replace(model, links=tuple(links))


def randomize(model: RobotModel, ranges: RandomizationRanges,
              rng: np.random.Generator,
              episode_length: float = 20.0) -> tuple[RobotModel, RandomizationSample]:
    """Randomized model instance plus the episode's disturbance schedule."""
    sample = sample_randomization(ranges, len(model.links), len(model.joints),
                                  rng, episode_length)
    return apply_randomization(model, sample), sample
