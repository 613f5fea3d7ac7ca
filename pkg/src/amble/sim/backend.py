"""Dynamics backend selection.

Imports the compiled kernel when available, otherwise the pure-python
implementation.  Set AMBLE_PURE_PYTHON=1 to force the fallback.  Both expose
the same ``PlanarSim`` API; see backend_py for the reference semantics.
"""

from __future__ import annotations

import os

from . import backend_py

if os.environ.get("AMBLE_PURE_PYTHON") == "1":
    _impl = backend_py
else:
    try:
        from . import _kernel as _impl  # type: ignore[attr-defined]
    except ImportError:
        _impl = backend_py

BACKEND_NAME: str = _impl.BACKEND_NAME

TORQUE_PD = backend_py.TORQUE_PD
TORQUE_PASSIVE = backend_py.TORQUE_PASSIVE
TORQUE_DAMPING = backend_py.TORQUE_DAMPING
INTEGRATOR_EULER = backend_py.INTEGRATOR_EULER
INTEGRATOR_RK4 = backend_py.INTEGRATOR_RK4


def make_sim(pack, force_python: bool = False):
    """Dynamics stepper for one packed model instance."""
    if force_python:
        return backend_py.PlanarSim(pack)
    return _impl.PlanarSim(pack)
