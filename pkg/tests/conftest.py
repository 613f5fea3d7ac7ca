import numpy as np
import pytest

from amble.model import SimState, build_default_model


@pytest.fixture(scope="session")
def model():
    return build_default_model()


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


def random_state(model, rng, airborne=False):
    """A syntactically valid random SimState for property tests."""
    J = model.joint_count
    lower = model.joint_array("lower")
    upper = model.joint_array("upper")
    return SimState(
        root_pos=np.array([rng.uniform(-1, 1),
                           rng.uniform(0.6, 1.2) if airborne else rng.uniform(0.2, 0.6)]),
        root_pitch=float(rng.uniform(-0.9, 0.9)),
        root_vel=rng.uniform(-2, 2, 2),
        root_ang_vel=float(rng.uniform(-3, 3)),
        joint_pos=rng.uniform(lower, upper),
        joint_vel=rng.uniform(-8, 8, J),
        foot_forces=np.abs(rng.uniform(0, 1, (2, 2))) * np.array([1.0, 60.0]),
        time=float(rng.uniform(0, 10)),
    )
