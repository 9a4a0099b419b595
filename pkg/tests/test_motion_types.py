import numpy as np
import pytest

from hoikit.errors import ValidationError
from hoikit.motion import (
    ContactChannels,
    MotionSequence,
    ObjectPose,
    ObjectTrajectory,
    PoseFrame,
    SkeletonSpec,
    default_skeleton,
)


def test_skeleton_requires_sorted_parents():
    with pytest.raises(ValidationError):
        SkeletonSpec(
            names=("a", "b"),
            parents=np.array([-1, 1]),
            offsets=np.zeros((2, 3)),
            roles={"root": 0, "left_hand": 1, "right_hand": 1, "left_foot": 1, "right_foot": 1},
        )


def test_skeleton_requires_single_root():
    with pytest.raises(ValidationError):
        SkeletonSpec(
            names=("a", "b"),
            parents=np.array([-1, -1]),
            offsets=np.zeros((2, 3)),
            roles={"root": 0, "left_hand": 1, "right_hand": 1, "left_foot": 1, "right_foot": 1},
        )


def test_skeleton_requires_all_roles():
    with pytest.raises(ValidationError):
        SkeletonSpec(names=("a",), parents=np.array([-1]), offsets=np.zeros((1, 3)), roles={"root": 0})


def test_default_skeleton_valid():
    sk = default_skeleton()
    assert sk.joint_count == 9
    assert sk.pose_dim == 3 + 6 * 9
    assert len(sk.contact_joints()) == 4


def test_pose_frame_rejects_zero_rotation_column():
    with pytest.raises(ValidationError):
        PoseFrame(np.zeros(3), np.zeros((2, 6)))


def test_motion_sequence_needs_two_frames(skeleton, identity_rot6d):
    with pytest.raises(ValidationError):
        MotionSequence(
            skeleton, np.zeros((1, 3)), np.tile(identity_rot6d, (1, skeleton.joint_count, 1)), 30.0
        )


def test_motion_sequence_frame_accessor_round_trip(skeleton, identity_rot6d):
    t = 4
    m = MotionSequence(
        skeleton, np.arange(t * 3).reshape(t, 3).astype(float),
        np.tile(identity_rot6d, (t, skeleton.joint_count, 1)), 30.0,
    )
    frames = [m.frame(i) for i in range(t)]
    m2 = MotionSequence.from_frames(skeleton, frames, 30.0)
    assert np.array_equal(m2.root, m.root)
    assert np.array_equal(m2.rot6d, m.rot6d)


def test_object_pose_rejects_reflection():
    with pytest.raises(ValidationError):
        ObjectPose(np.zeros(3), np.diag([1.0, 1.0, -1.0]))


def test_object_pose_flat_layout():
    pose = ObjectPose(np.array([1.0, 2, 3]), np.eye(3))
    assert np.array_equal(pose.flat(), [1, 2, 3, 1, 0, 0, 0, 1, 0, 0, 0, 1])


def test_object_trajectory_flat_round_trip():
    rng = np.random.default_rng(0)
    pos = rng.normal(size=(5, 3))
    traj = ObjectTrajectory(pos, np.tile(np.eye(3), (5, 1, 1)), 30.0)
    back = ObjectTrajectory.from_flat(traj.flat(), 30.0)
    assert np.array_equal(back.positions, pos)


def test_contact_channels_bounds():
    with pytest.raises(ValidationError):
        ContactChannels(np.full((3, 4), 1.5))
    c = ContactChannels(np.array([[0.9, 0.2, 0.5, 0.0]]))
    assert np.array_equal(c.expected()[0], [True, False, True, False])
