import numpy as np
import pytest

from hoikit.motion import ContactChannels, MotionSequence, ObjectTrajectory, default_skeleton
from hoikit.rotation import matrix_to_rot6d, random_rotation


@pytest.fixture(scope="session")
def skeleton():
    return default_skeleton()


@pytest.fixture(scope="session")
def identity_rot6d():
    return matrix_to_rot6d(np.eye(3))


def random_motion(skeleton, t, rng, step=0.05):
    """Smooth-ish random walk motion with random joint rotations."""
    root = np.cumsum(rng.normal(size=(t, 3)) * step, axis=0)
    rot6d = matrix_to_rot6d(random_rotation(rng, (t, skeleton.joint_count)))
    return MotionSequence(skeleton, root, rot6d, 30.0)


def random_bundle(skeleton, t, rng, step=0.05):
    """(motion, objects, contacts) triple for extraction tests."""
    motion = random_motion(skeleton, t, rng, step)
    objects = ObjectTrajectory(
        np.cumsum(rng.normal(size=(t, 3)) * step, axis=0),
        random_rotation(rng, (t,)),
        30.0,
    )
    contacts = ContactChannels(rng.uniform(size=(t, 4)))
    return motion, objects, contacts
