import numpy as np
import pytest

from hoikit.errors import ValidationError
from hoikit.geometry import box_mesh
from hoikit.kinematics import relative_to_global
from hoikit.motion import ContactChannels, MotionSequence, ObjectTrajectory
from hoikit.rotation import axis_angle_to_matrix, matrix_to_rot6d, rot6d_to_matrix
from hoikit.tracking import (
    HumanoidSimState,
    NoiseModel,
    ObjectSimState,
    RewardWeights,
    ScriptedFault,
    SuccessCriteria,
    TerminationConfig,
    build_humanoid_obs,
    build_object_obs,
    check_early_termination,
    filter_successful_rollouts,
    human_tracking_reward,
    object_reward,
    oracle_rollout,
    reached_target,
    total_reward,
    xnor,
)

CORNERS = box_mesh([0.2, 0.2, 0.2]).bounding_corners()


def reference_bundle(skeleton, identity_rot6d, t=60, contact_span=(20, 40)):
    rng = np.random.default_rng(1)
    root = np.cumsum(rng.normal(size=(t, 3)) * 0.02, axis=0)
    motion = MotionSequence(
        skeleton, root, np.tile(identity_rot6d, (t, skeleton.joint_count, 1)), 30.0
    )
    objects = ObjectTrajectory(root + [0.5, 0, 0], np.tile(np.eye(3), (t, 1, 1)), 30.0)
    vals = np.zeros((t, 4))
    vals[contact_span[0] : contact_span[1], :2] = 1.0
    return motion, objects, ContactChannels(vals)


def perfect_states(skeleton, identity_rot6d):
    motion, objects, contacts = reference_bundle(skeleton, identity_rot6d, t=10)
    g = relative_to_global(motion)
    sim = HumanoidSimState(g.positions[0], g.orientations[0], g.linear_velocity[0], g.angular_velocity[0])
    ref = HumanoidSimState(g.positions[0], g.orientations[0], g.linear_velocity[0], g.angular_velocity[0])
    return sim, ref


class TestXnor:
    def test_truth_table(self):
        assert np.array_equal(xnor([1, 1, 0, 0], [0, 1, 0, 1]), [0, 1, 1, 0])

    def test_identities(self):
        c = np.array([1, 0, 1, 0])
        assert np.array_equal(xnor(c, c), np.ones(4))
        assert np.array_equal(xnor(c, 1 - c), np.zeros(4))


class TestObservations:
    def test_perfect_tracking_zero_deltas(self, skeleton, identity_rot6d):
        sim, ref = perfect_states(skeleton, identity_rot6d)
        obs = build_humanoid_obs(sim, ref)
        j = skeleton.joint_count
        # rotation-difference block decodes to identity
        rot_block = obs[: 6 * j].reshape(j, 6)
        assert np.abs(rot6d_to_matrix(rot_block) - np.eye(3)).max() < 1e-9
        # the three delta blocks are exactly zero
        assert np.all(obs[6 * j : 6 * j + 9 * j] == 0)

    def test_position_offset_appears(self, skeleton, identity_rot6d):
        sim, ref = perfect_states(skeleton, identity_rot6d)
        ref.positions = ref.positions.copy()
        ref.positions[2] += [0.1, 0, 0]
        obs = build_humanoid_obs(sim, ref)
        j = skeleton.joint_count
        dp = obs[6 * j : 9 * j].reshape(j, 3)
        assert np.allclose(dp[2], [0.1, 0, 0])
        assert np.all(dp[[0, 1, 3]] == 0)

    def test_rotation_difference_recovered(self, skeleton, identity_rot6d):
        sim, ref = perfect_states(skeleton, identity_rot6d)
        z = axis_angle_to_matrix(np.array([0, 0, 0.7]))
        ref.orientations = ref.orientations.copy()
        ref.orientations[1] = z @ ref.orientations[1]
        obs = build_humanoid_obs(sim, ref)
        j = skeleton.joint_count
        rot_block = rot6d_to_matrix(obs[: 6 * j].reshape(j, 6))
        assert np.abs(rot_block[1] - z).max() < 1e-9

    def test_object_obs_xnor_channels(self):
        state = ObjectSimState(np.zeros(3), np.eye(3), np.zeros(3), np.zeros(3), np.array([0, 1, 0, 1]))
        ref = ObjectSimState(np.zeros(3), np.eye(3), np.zeros(3), np.zeros(3))
        obs = build_object_obs(state, ref, np.array([1, 1, 0, 0]))
        assert np.array_equal(obs[15:19], [0, 1, 1, 0])
        assert np.array_equal(obs[-4:], [1, 1, 0, 0])
        # matched poses: difference blocks zero
        assert np.all(obs[6:15] == 0)


class TestRewards:
    def test_perfect_tracking_upper_bound(self, skeleton, identity_rot6d):
        sim, ref = perfect_states(skeleton, identity_rot6d)
        w = RewardWeights(key_joints=tuple(skeleton.key_joints))
        c = np.array([1, 1, 0, 0])
        total, terms = human_tracking_reward(sim, ref, c, c, w)
        assert total == pytest.approx(w.human_max())
        assert terms["human_contact"] == pytest.approx(2.0)

    def test_position_term_exponential(self, skeleton, identity_rot6d):
        sim, ref = perfect_states(skeleton, identity_rot6d)
        w = RewardWeights(key_joints=(2,))
        ref.positions = ref.positions.copy()
        ref.positions[2] += [0.01, 0, 0]
        _, terms = human_tracking_reward(sim, ref, np.ones(4), np.ones(4), w)
        assert terms["human_pos"] == pytest.approx(np.exp(-1.0))
        assert terms["human_rot"] == pytest.approx(1.0)

    def test_large_errors_leave_contact_term(self, skeleton, identity_rot6d):
        sim, ref = perfect_states(skeleton, identity_rot6d)
        w = RewardWeights(key_joints=tuple(skeleton.key_joints))
        flip = axis_angle_to_matrix(np.array([0, 0, np.pi]))
        ref = HumanoidSimState(
            ref.positions + 100.0, flip @ ref.orientations,
            ref.linear_velocity + 1e4, ref.angular_velocity + 1e4,
        )
        total, terms = human_tracking_reward(sim, ref, np.ones(4), np.ones(4), w)
        assert total == pytest.approx(w.human_contact * 2.0, abs=1e-12)

    def test_object_reward_coefficients(self):
        ref = ObjectSimState(np.zeros(3), np.eye(3), np.zeros(3), np.zeros(3))
        w = RewardWeights(key_joints=(0,))
        perfect, _ = object_reward(ref, ref, w)
        assert perfect == pytest.approx(w.object_max())
        sim = ObjectSimState(np.array([0.01, 0, 0]), np.eye(3), np.zeros(3), np.zeros(3))
        _, terms = object_reward(sim, ref, w)
        assert terms["object_pos"] == pytest.approx(np.exp(-1.0))
        sim = ObjectSimState(np.zeros(3), np.eye(3), np.array([0.2, 0, 0]), np.zeros(3))
        _, terms = object_reward(sim, ref, w)
        assert terms["object_vel"] == pytest.approx(np.exp(-1.0))

    def test_reward_monotone_in_errors(self, skeleton, identity_rot6d):
        sim, ref = perfect_states(skeleton, identity_rot6d)
        w = RewardWeights(key_joints=(2,))
        last = np.inf
        for err in (0.0, 0.01, 0.05, 0.2):
            ref2 = HumanoidSimState(
                ref.positions + np.array([err, 0, 0]), ref.orientations,
                ref.linear_velocity, ref.angular_velocity,
            )
            total, _ = human_tracking_reward(sim, ref2, np.ones(4), np.ones(4), w)
            assert total <= last + 1e-12
            last = total

    def test_total_reward_blend(self):
        assert total_reward(2.0, 4.0, 1.0) == 2.0
        assert total_reward(2.0, 4.0, 0.0) == 4.0
        assert total_reward(2.0, 4.0, 0.5) == 3.0
        with pytest.raises(ValidationError):
            total_reward(1.0, 1.0, 1.5)

    def test_weights_validation(self):
        with pytest.raises(ValidationError):
            RewardWeights(alpha=2.0)
        with pytest.raises(ValidationError):
            RewardWeights(human_pos=-1.0)


class TestTermination:
    def _zero_noise_log(self, skeleton, identity_rot6d, **kw):
        motion, objects, contacts = reference_bundle(skeleton, identity_rot6d)
        return oracle_rollout(
            motion, objects, contacts, CORNERS, NoiseModel(**kw), 0,
            RewardWeights(), TerminationConfig(), target_position=objects.positions[-1],
        )

    def test_perfect_replay_never_terminates(self, skeleton, identity_rot6d):
        log = self._zero_noise_log(skeleton, identity_rot6d)
        assert log.termination_frame is None
        fired, frame, reason = check_early_termination(log, TerminationConfig())
        assert not fired and frame is None and reason is None

    def test_object_deviation_threshold(self, skeleton, identity_rot6d):
        motion, objects, contacts = reference_bundle(skeleton, identity_rot6d)
        noise = NoiseModel(faults=[ScriptedFault(frame=30, object_offset=np.array([0.6, 0, 0]))])
        log = oracle_rollout(
            motion, objects, contacts, CORNERS, noise, 0, RewardWeights(), TerminationConfig()
        )
        assert log.termination_frame == 30
        assert log.termination_reason == "object-deviation"
        assert len(log) == 31

    def test_object_deviation_below_threshold_survives(self, skeleton, identity_rot6d):
        motion, objects, contacts = reference_bundle(skeleton, identity_rot6d)
        noise = NoiseModel(faults=[ScriptedFault(frame=30, object_offset=np.array([0.4, 0, 0]))])
        log = oracle_rollout(
            motion, objects, contacts, CORNERS, noise, 0, RewardWeights(), TerminationConfig()
        )
        assert log.termination_frame is None

    def test_contact_absence_eleventh_frame(self, skeleton, identity_rot6d):
        motion, objects, contacts = reference_bundle(skeleton, identity_rot6d)
        # expected contact spans frames 20..39; drop 11 frames from 20
        noise = NoiseModel(faults=[ScriptedFault(frame=20, duration=11, drop_contact=(0, 1))])
        log = oracle_rollout(
            motion, objects, contacts, CORNERS, noise, 0, RewardWeights(), TerminationConfig()
        )
        assert log.termination_frame == 30  # the 11th consecutive missing frame
        assert log.termination_reason == "contact-absence"

    def test_contact_absence_ten_frames_ok(self, skeleton, identity_rot6d):
        motion, objects, contacts = reference_bundle(skeleton, identity_rot6d)
        noise = NoiseModel(faults=[ScriptedFault(frame=20, duration=10, drop_contact=(0, 1))])
        log = oracle_rollout(
            motion, objects, contacts, CORNERS, noise, 0, RewardWeights(), TerminationConfig()
        )
        assert log.termination_frame is None

    def test_humanoid_drift(self, skeleton, identity_rot6d):
        motion, objects, contacts = reference_bundle(skeleton, identity_rot6d)
        noise = NoiseModel(faults=[ScriptedFault(frame=12, human_offset=np.array([0.6, 0, 0]))])
        log = oracle_rollout(
            motion, objects, contacts, CORNERS, noise, 0, RewardWeights(), TerminationConfig()
        )
        assert log.termination_frame == 12
        assert log.termination_reason == "humanoid-drift"

    def test_prefix_shift_property(self, skeleton, identity_rot6d):
        # prepending violation-free frames shifts the violation by that count
        motion, objects, contacts = reference_bundle(skeleton, identity_rot6d)
        for shift in (0, 7):
            noise = NoiseModel(
                faults=[ScriptedFault(frame=25 + shift, object_offset=np.array([0.7, 0, 0]))]
            )
            log = oracle_rollout(
                motion, objects, contacts, CORNERS, noise, 0, RewardWeights(), TerminationConfig()
            )
            assert log.termination_frame == 25 + shift


class TestOracleRollout:
    def test_zero_noise_reward_exact(self, skeleton, identity_rot6d):
        motion, objects, contacts = reference_bundle(skeleton, identity_rot6d)
        w = RewardWeights(alpha=0.5)
        log = oracle_rollout(
            motion, objects, contacts, CORNERS, NoiseModel(), 0, w, TerminationConfig()
        )
        expect = w.alpha * w.human_max() + (1 - w.alpha) * w.object_max()
        assert np.abs(log.reward_total - expect).max() < 1e-9

    def test_gaussian_jitter_strictly_below_perfect(self, skeleton, identity_rot6d):
        motion, objects, contacts = reference_bundle(skeleton, identity_rot6d)
        w = RewardWeights()
        log = oracle_rollout(
            motion, objects, contacts, CORNERS, NoiseModel(sigma_pos=0.005), 0, w, TerminationConfig()
        )
        expect = w.alpha * w.human_max() + (1 - w.alpha) * w.object_max()
        assert np.all(log.reward_total < expect)

    def test_rollout_deterministic_per_seed(self, skeleton, identity_rot6d):
        motion, objects, contacts = reference_bundle(skeleton, identity_rot6d)
        a = oracle_rollout(
            motion, objects, contacts, CORNERS, NoiseModel(sigma_pos=0.01), 5,
            RewardWeights(), TerminationConfig(),
        )
        b = oracle_rollout(
            motion, objects, contacts, CORNERS, NoiseModel(sigma_pos=0.01), 5,
            RewardWeights(), TerminationConfig(),
        )
        assert np.array_equal(a.sim_positions, b.sim_positions)


class TestFilter:
    def test_all_terminated_empty(self, skeleton, identity_rot6d):
        motion, objects, contacts = reference_bundle(skeleton, identity_rot6d)
        noise = NoiseModel(faults=[ScriptedFault(frame=5, object_offset=np.array([1.0, 0, 0]))])
        log = oracle_rollout(
            motion, objects, contacts, CORNERS, noise, 0, RewardWeights(), TerminationConfig(),
            target_position=objects.positions[-1],
        )
        assert filter_successful_rollouts([log], SuccessCriteria()) == []

    def test_successful_rollout_produces_windows(self, skeleton, identity_rot6d):
        motion, objects, contacts = reference_bundle(skeleton, identity_rot6d)
        log = oracle_rollout(
            motion, objects, contacts, CORNERS, NoiseModel(), 0, RewardWeights(),
            TerminationConfig(), target_position=objects.positions[-1],
        )
        windows = filter_successful_rollouts([log], SuccessCriteria(), epsilon=0.05)
        assert windows
        # zero noise: the windows replicate reference data at the key frames
        w0 = windows[0]
        assert np.abs(w0.initial_root - motion.root[w0.start_frame]).max() < 1e-9

    def test_target_radius_boundary_closed(self, skeleton, identity_rot6d):
        motion, objects, contacts = reference_bundle(skeleton, identity_rot6d)
        final = objects.positions[-1]
        log = oracle_rollout(
            motion, objects, contacts, CORNERS, NoiseModel(), 0, RewardWeights(),
            TerminationConfig(), target_position=final + np.array([0.5, 0.0, 0.0]),
        )
        assert reached_target(log, radius=0.5)  # exactly 0.5 m counts
        log.target_position = final + np.array([0.5 + 1e-9, 0.0, 0.0])
        assert not reached_target(log, radius=0.5)
