import math

import numpy as np
import pytest

from amble.errors import ModelError
from amble.gait import GaitClock
from amble.model import (Command, FootFrame, Joint, Link, RobotModel, SimState,
                         assemble_discriminator_observation,
                         assemble_observation, build_default_model,
                         default_noise_scale, disc_observation_dim,
                         foot_positions_base, foot_positions_world,
                         foot_velocities_world, load_model, model_from_dict,
                         model_to_dict, nominal_root_height, observation_dim,
                         observation_slices, projected_gravity, rest_state,
                         save_model)
from conftest import random_state

CLOCK = GaitClock(phase=0.25, period=0.7, swing_ratio=0.45)


# ---------------------------------------------------------------------------
# independent forward-kinematics oracle: explicit 2x2 rotation-matrix chain
# ---------------------------------------------------------------------------

def rot(a):
    return np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])


def fk_oracle(model, root_pos, pitch, joint_pos, side):
    """Compose the transform chain link by link with explicit matrices."""
    frame = model.foot_frame(side)
    by_child = {j.child: j for j in model.joints}
    chain = []
    name = frame.link
    while name in by_child:
        chain.append(by_child[name])
        name = by_child[name].parent
    chain.reverse()
    pos = np.asarray(root_pos, dtype=float)
    R = rot(pitch)
    for joint in chain:
        pos = pos + R @ np.asarray(joint.anchor)
        R = R @ rot(joint_pos[model.joint_index(joint.name)])
    return pos + R @ np.asarray(frame.offset)


class TestDefaultModel:
    def test_structure(self, model):
        assert model.joint_count == 6
        assert len(model.foot_frames) == 2
        assert {f.side for f in model.foot_frames} == {"left", "right"}

    def test_total_mass_additivity(self, model):
        assert model.total_mass == pytest.approx(
            sum(l.mass for l in model.links), abs=0)

    def test_tree_depth_three_per_leg(self, model):
        by_child = {j.child: j for j in model.joints}
        for side in ("left", "right"):
            depth = 0
            name = model.foot_frame(side).link
            while name in by_child:
                depth += 1
                name = by_child[name].parent
            assert name == model.links[0].name
            assert depth == 3

    def test_joint_limits_ordered(self, model):
        for j in model.joints:
            assert j.lower < j.upper
            assert j.kp > 0 and j.kd > 0 and j.torque_limit > 0


class TestModelValidation:
    def _links(self):
        return (Link("a", 1.0, 0.3, (0, 0.1), 0.01),
                Link("b", 1.0, 0.3, (0, -0.1), 0.01),
                Link("c", 1.0, 0.3, (0, -0.1), 0.01))

    def test_bad_limits_rejected(self):
        with pytest.raises(ModelError, match="lower limit"):
            RobotModel("m", self._links(),
                       (Joint("j1", "a", "b", (0, 0), 1.0, -1.0, 10, 10, 10, 1),
                        Joint("j2", "b", "c", (0, -0.3), -1, 1, 10, 10, 10, 1)),
                       (FootFrame("left", "c", (0, 0)), FootFrame("right", "c", (0, 0))))

    def test_cycle_rejected(self):
        with pytest.raises(ModelError):
            RobotModel("m", self._links(),
                       (Joint("j1", "b", "c", (0, 0), -1, 1, 10, 10, 10, 1),
                        Joint("j2", "c", "b", (0, 0), -1, 1, 10, 10, 10, 1)),
                       (FootFrame("left", "c", (0, 0)), FootFrame("right", "b", (0, 0))))

    def test_nonpositive_mass_rejected(self):
        links = (Link("a", -1.0, 0.3, (0, 0), 0.01),)
        with pytest.raises(ModelError):
            RobotModel("m", links, (), (FootFrame("left", "a", (0, 0)),
                                        FootFrame("right", "a", (0, 0))))

    def test_two_foot_frames_required(self, model):
        with pytest.raises(ModelError, match="two foot frames"):
            RobotModel(model.name, model.links, model.joints,
                       model.foot_frames[:1], default_pose=model.default_pose)


class TestModelFile:
    def test_round_trip(self, model, tmp_path):
        path = tmp_path / "model.json"
        save_model(model, path)
        loaded = load_model(path)
        assert loaded == model

    def test_schema_version_enforced(self, model):
        data = model_to_dict(model)
        data["schema_version"] = 999
        with pytest.raises(ModelError, match="schema_version"):
            model_from_dict(data)

    def test_malformed_rejected(self):
        with pytest.raises(ModelError):
            model_from_dict({"schema_version": 1, "name": "x"})

    def test_shipped_config_matches_default(self):
        assert load_model("configs/planar_biped.json") == build_default_model()


class TestForwardKinematics:
    def test_rest_pose_offsets(self, model):
        # all joints at zero: legs hang straight down from the root
        state = rest_state(model, root_height=0.0)
        state = SimState(root_pos=np.zeros(2), root_pitch=0.0,
                         root_vel=np.zeros(2), root_ang_vel=0.0,
                         joint_pos=np.zeros(6), joint_vel=np.zeros(6),
                         foot_forces=np.zeros((2, 2)))
        feet = foot_positions_world(model, state)
        drop = 0.22 + 0.22 + 0.05
        np.testing.assert_allclose(feet, [[0.0, -drop], [0.0, -drop]], atol=1e-12)

    def test_mirrored_legs_mirror_feet(self, model, rng):
        for _ in range(50):
            q = rng.uniform(-0.8, 0.8, 3)
            joint_pos = np.concatenate([q, -q])
            feet = foot_positions_base(model, joint_pos)
            assert feet[0][0] == pytest.approx(-feet[1][0], abs=1e-12)
            assert feet[0][1] == pytest.approx(feet[1][1], abs=1e-12)

    def test_fk_matches_transform_chain_oracle(self, model, rng):
        for _ in range(1000):
            state = random_state(model, rng)
            feet = foot_positions_world(model, state)
            for i, side in enumerate(("left", "right")):
                expected = fk_oracle(model, state.root_pos, state.root_pitch,
                                     state.joint_pos, side)
                np.testing.assert_allclose(feet[i], expected, atol=1e-9)

    def test_foot_velocity_matches_finite_difference(self, model, rng):
        h = 1e-7
        for _ in range(50):
            state = random_state(model, rng)
            vel = foot_velocities_world(model, state)
            plus = SimState(
                root_pos=state.root_pos + h * state.root_vel,
                root_pitch=state.root_pitch + h * state.root_ang_vel,
                root_vel=state.root_vel, root_ang_vel=state.root_ang_vel,
                joint_pos=state.joint_pos + h * state.joint_vel,
                joint_vel=state.joint_vel, foot_forces=state.foot_forces)
            fd = (foot_positions_world(model, plus)
                  - foot_positions_world(model, state)) / h
            np.testing.assert_allclose(vel, fd, atol=1e-5)

    def test_nominal_root_height(self, model):
        assert nominal_root_height(model) == pytest.approx(0.4866, abs=1e-3)


class TestObservation:
    def test_gravity_upright(self):
        np.testing.assert_allclose(projected_gravity(0.0), [0.0, -1.0], atol=1e-15)

    def test_gravity_quarter_pitch(self):
        np.testing.assert_allclose(projected_gravity(math.pi / 2), [-1.0, 0.0],
                                   atol=1e-15)

    def test_gravity_unit_norm_everywhere(self):
        for pitch in np.linspace(-math.pi, math.pi, 101):
            assert np.linalg.norm(projected_gravity(pitch)) == pytest.approx(1.0, abs=1e-12)

    def test_layout_contiguous(self, model):
        slices = observation_slices(model)
        end = 0
        for name, sl in slices.items():
            assert sl.start == end
            end = sl.stop
        assert end == observation_dim(model) == 30

    def test_assembly_layout_and_clock_identity(self, model, rng):
        state = random_state(model, rng)
        cmd = Command(vx=0.4)
        prev = rng.uniform(-0.3, 0.3, 6)
        obs = assemble_observation(state, cmd, CLOCK, prev, model)
        sl = observation_slices(model)
        np.testing.assert_allclose(obs.vec[sl["joint_pos"]], state.joint_pos)
        np.testing.assert_allclose(obs.vec[sl["command"]], [0.4, 0.0, 0.0])
        np.testing.assert_allclose(obs.vec[sl["prev_action"]], prev)
        assert obs.vec[sl["root_height"]][0] == state.root_pos[1]
        clock_feats = obs.vec[sl["clock"]]
        assert clock_feats[0] ** 2 + clock_feats[1] ** 2 == pytest.approx(1.0, abs=1e-9)
        assert clock_feats[2] == CLOCK.swing_ratio

    def test_zero_noise_deterministic(self, model, rng):
        state = random_state(model, rng)
        cmd = Command(vx=0.3)
        prev = np.zeros(6)
        zero = np.zeros(observation_dim(model))
        a = assemble_observation(state, cmd, CLOCK, prev, model,
                                 noise_scale=zero, rng=np.random.default_rng(5))
        b = assemble_observation(state, cmd, CLOCK, prev, model,
                                 noise_scale=zero, rng=np.random.default_rng(99))
        assert np.array_equal(a.vec, b.vec)

    def test_noise_deterministic_per_seed(self, model, rng):
        state = random_state(model, rng)
        cmd = Command(vx=0.3)
        scale = default_noise_scale(model)
        a = assemble_observation(state, cmd, CLOCK, np.zeros(6), model,
                                 noise_scale=scale, rng=np.random.default_rng(7))
        b = assemble_observation(state, cmd, CLOCK, np.zeros(6), model,
                                 noise_scale=scale, rng=np.random.default_rng(7))
        assert np.array_equal(a.vec, b.vec)

    def test_lin_vel_scale_applied(self, model, rng):
        state = random_state(model, rng)
        obs = assemble_observation(state, Command(0.0), CLOCK, np.zeros(6),
                                   model, lin_vel_scale=1.2)
        sl = observation_slices(model)
        np.testing.assert_allclose(obs.vec[sl["root_lin_vel"]],
                                   state.root_vel * 1.2)

    def test_dimension_mismatch_rejected(self, model, rng):
        state = random_state(model, rng)
        with pytest.raises(ModelError):
            assemble_observation(state, Command(0.0), CLOCK, np.zeros(4), model)


class TestDiscriminatorObservation:
    def test_rest_pose(self, model):
        state = SimState(root_pos=np.array([0.3, 0.5]), root_pitch=0.2,
                         root_vel=np.zeros(2), root_ang_vel=0.0,
                         joint_pos=np.zeros(6), joint_vel=np.zeros(6),
                         foot_forces=np.zeros((2, 2)))
        obs = assemble_discriminator_observation(state, model)
        assert obs.shape == (disc_observation_dim(model),)
        drop = 0.49
        np.testing.assert_allclose(obs[12:], [0.0, -drop, 0.0, -drop], atol=1e-12)

    def test_fk_oracle(self, model, rng):
        for _ in range(200):
            state = random_state(model, rng)
            obs = assemble_discriminator_observation(state, model)
            for i, side in enumerate(("left", "right")):
                expected = fk_oracle(model, (0.0, 0.0), 0.0, state.joint_pos, side)
                np.testing.assert_allclose(obs[12 + 2 * i:14 + 2 * i], expected,
                                           atol=1e-9)

    def test_precomputed_feet_route_identical(self, model, rng):
        state = random_state(model, rng)
        feet = foot_positions_base(model, state.joint_pos)
        a = assemble_discriminator_observation(state, model)
        b = assemble_discriminator_observation(state, model, feet_base=feet)
        assert np.array_equal(a, b)
