"""Planar biped environment: dynamics backends, episodes, randomization."""

from .backend import (BACKEND_NAME, INTEGRATOR_EULER, INTEGRATOR_RK4,
                      TORQUE_DAMPING, TORQUE_PASSIVE, TORQUE_PD, make_sim)
from .crossval import (CrossvalReport, crossval_locomotion, crossval_pendulum,
                       pendulum_trajectory)
from .env import (CommandRanges, Episode, SimConfig, VecRunner, contact_forces,
                  run_parallel)
from .modelpack import ModelPack, pack_model
from .randomize import (RandomizationRanges, RandomizationSample,
                        apply_randomization, degenerate_ranges, randomize,
                        sample_randomization)

__all__ = [
    "BACKEND_NAME", "INTEGRATOR_EULER", "INTEGRATOR_RK4", "TORQUE_DAMPING",
    "TORQUE_PASSIVE", "TORQUE_PD", "make_sim", "CrossvalReport",
    "crossval_locomotion", "crossval_pendulum", "pendulum_trajectory",
    "CommandRanges", "Episode", "SimConfig", "VecRunner", "contact_forces",
    "run_parallel", "ModelPack", "pack_model", "RandomizationRanges",
    "RandomizationSample", "apply_randomization", "degenerate_ranges",
    "randomize", "sample_randomization",
]
