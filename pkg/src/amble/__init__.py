"""amble: a desk-scale training engine for legged locomotion with human-style
motion references -- gait-clock rewards, an adversarial motion prior, PPO, and
a planar rigid-body simulator with interchangeable integrators."""

__version__ = "0.1.0"

from .sim.backend import BACKEND_NAME as physics_backend  # noqa: F401
