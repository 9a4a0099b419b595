"""Canonical motion data types shared by every other module.

Pose parameters follow the layout [root translation (3) | per-joint 6-DOF
rotations (6J) | optional per-joint positions (3J)], so the pose dimension
is D = 3 + 6J, or 3 + 9J when positions are carried. Object poses are
[position (3) | rotation matrix, row-major (9)]. Contact channels are
ordered (left hand, right hand, left foot, right foot).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .rotation import validate_rotation

CONTACT_CHANNELS = ("left_hand", "right_hand", "left_foot", "right_foot")

ROLE_ROOT = "root"
ROLE_LEFT_HAND = "left_hand"
ROLE_RIGHT_HAND = "right_hand"
ROLE_LEFT_FOOT = "left_foot"
ROLE_RIGHT_FOOT = "right_foot"
_UNIQUE_ROLES = (ROLE_LEFT_HAND, ROLE_RIGHT_HAND, ROLE_LEFT_FOOT, ROLE_RIGHT_FOOT)


@dataclass(frozen=True)
class SkeletonSpec:
    """Fixed skeleton description: topology, rest offsets, and joint roles.

    parents[j] is the parent joint index, -1 for the single root joint.
    Joints must be topologically sorted (parents[j] < j). offsets are the
    rest-pose translation from parent to joint in meters; the root offset
    is its rest position in the world. roles maps role names (root,
    left_hand, right_hand, left_foot, right_foot) to joint indices;
    key_joints flags the joints tracked by rewards and key extraction.
    """

    names: tuple[str, ...]
    parents: np.ndarray  # [J] int
    offsets: np.ndarray  # [J,3] float
    roles: dict[str, int] = field(default_factory=dict)
    key_joints: tuple[int, ...] = ()

    def __post_init__(self):
        parents = np.asarray(self.parents, dtype=np.int64)
        offsets = np.asarray(self.offsets, dtype=np.float64)
        object.__setattr__(self, "parents", parents)
        object.__setattr__(self, "offsets", offsets)
        j = len(self.names)
        if parents.shape != (j,) or offsets.shape != (j, 3):
            raise ValidationError("skeleton arrays disagree with joint count")
        roots = np.nonzero(parents < 0)[0]
        if len(roots) != 1 or roots[0] != 0:
            raise ValidationError("skeleton must have exactly one root at joint 0")
        if np.any(parents[1:] >= np.arange(1, j)):
            raise ValidationError("skeleton joints must be topologically sorted")
        for role in _UNIQUE_ROLES:
            idx = [i for r, i in self.roles.items() if r == role]
            if len(idx) != 1 or not (0 <= idx[0] < j):
                raise ValidationError(f"role {role!r} must map to exactly one joint")
        if self.roles.get(ROLE_ROOT, 0) != 0:
            raise ValidationError("root role must map to joint 0")
        for k in self.key_joints:
            if not 0 <= k < j:
                raise ValidationError(f"key joint {k} out of range")

    @property
    def joint_count(self) -> int:
        return len(self.names)

    @property
    def pose_dim(self) -> int:
        """D = 3 + 6J, the pose dimension without per-joint positions."""
        return 3 + 6 * self.joint_count

    def contact_joints(self) -> np.ndarray:
        """Joint indices for the four contact channels, in channel order."""
        return np.array([self.roles[r] for r in CONTACT_CHANNELS], dtype=np.int64)


@dataclass
class PoseFrame:
    """Single-frame human pose: root translation plus per-joint 6-DOF rotations."""

    root_translation: np.ndarray  # [3]
    joint_rot6d: np.ndarray  # [J,6]
    joint_positions: np.ndarray | None = None  # [J,3]

    def __post_init__(self):
        self.root_translation = np.asarray(self.root_translation, dtype=np.float64)
        self.joint_rot6d = np.asarray(self.joint_rot6d, dtype=np.float64)
        if self.root_translation.shape != (3,):
            raise ValidationError("root translation must be a 3-vector")
        if self.joint_rot6d.ndim != 2 or self.joint_rot6d.shape[1] != 6:
            raise ValidationError("joint rotations must have shape [J,6]")
        if np.any(np.linalg.norm(self.joint_rot6d[:, :3], axis=-1) < 1e-12):
            raise ValidationError("6-DOF rotation with zero first column")
        if self.joint_positions is not None:
            self.joint_positions = np.asarray(self.joint_positions, dtype=np.float64)
            if self.joint_positions.shape != (self.joint_rot6d.shape[0], 3):
                raise ValidationError("joint positions must have shape [J,3]")


@dataclass
class MotionSequence:
    """Dense human motion over T frames, stored columnar for numpy work.

    root is [T,3], rot6d is [T,J,6], positions optionally [T,J,3].
    """

    skeleton: SkeletonSpec
    root: np.ndarray
    rot6d: np.ndarray
    frame_rate: float
    positions: np.ndarray | None = None

    def __post_init__(self):
        self.root = np.asarray(self.root, dtype=np.float64)
        self.rot6d = np.asarray(self.rot6d, dtype=np.float64)
        t, j = self.rot6d.shape[0], self.skeleton.joint_count
        if t < 2:
            raise ValidationError("motion must have at least two frames")
        if self.root.shape != (t, 3) or self.rot6d.shape != (t, j, 6):
            raise ValidationError("motion arrays disagree with skeleton/frame count")
        if self.frame_rate <= 0:
            raise ValidationError("frame rate must be positive")
        if self.positions is not None:
            self.positions = np.asarray(self.positions, dtype=np.float64)
            if self.positions.shape != (t, j, 3):
                raise ValidationError("positions must have shape [T,J,3]")

    def __len__(self) -> int:
        return self.root.shape[0]

    def frame(self, t: int) -> PoseFrame:
        pos = None if self.positions is None else self.positions[t]
        return PoseFrame(self.root[t], self.rot6d[t], pos)

    @classmethod
    def from_frames(cls, skeleton: SkeletonSpec, frames: list[PoseFrame], frame_rate: float) -> "MotionSequence":
        root = np.stack([f.root_translation for f in frames])
        rot = np.stack([f.joint_rot6d for f in frames])
        pos = None
        if frames and frames[0].joint_positions is not None:
            pos = np.stack([f.joint_positions for f in frames])
        return cls(skeleton, root, rot, frame_rate, pos)


@dataclass
class ObjectPose:
    """Rigid object pose: global position and 3x3 rotation."""

    position: np.ndarray  # [3]
    rotation: np.ndarray  # [3,3]

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64)
        self.rotation = np.asarray(self.rotation, dtype=np.float64)
        if self.position.shape != (3,):
            raise ValidationError("object position must be a 3-vector")
        validate_rotation(self.rotation)

    def flat(self) -> np.ndarray:
        """[position | rotation row-major], length 12."""
        return np.concatenate([self.position, self.rotation.reshape(9)])


@dataclass
class ObjectTrajectory:
    """Object pose per frame: positions [T,3] and rotations [T,3,3]."""

    positions: np.ndarray
    rotations: np.ndarray
    frame_rate: float

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64)
        self.rotations = np.asarray(self.rotations, dtype=np.float64)
        t = self.positions.shape[0]
        if self.positions.shape != (t, 3) or self.rotations.shape != (t, 3, 3):
            raise ValidationError("object trajectory arrays malformed")
        validate_rotation(self.rotations)

    def __len__(self) -> int:
        return self.positions.shape[0]

    def pose(self, t: int) -> ObjectPose:
        return ObjectPose(self.positions[t], self.rotations[t])

    def flat(self) -> np.ndarray:
        """[T,12] rows of [position | rotation row-major]."""
        return np.concatenate([self.positions, self.rotations.reshape(-1, 9)], axis=1)

    @classmethod
    def from_flat(cls, rows: np.ndarray, frame_rate: float) -> "ObjectTrajectory":
        rows = np.asarray(rows, dtype=np.float64)
        return cls(rows[:, :3], rows[:, 3:12].reshape(-1, 3, 3), frame_rate)


@dataclass
class ContactChannels:
    """Per-frame contact probabilities [T,4]: LH, RH, LF, RF."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[1] != 4:
            raise ValidationError("contact channels must have shape [T,4]")
        if np.any(self.values < 0) or np.any(self.values > 1):
            raise ValidationError("contact probabilities must lie in [0,1]")

    def __len__(self) -> int:
        return self.values.shape[0]

    def expected(self, threshold: float = 0.5) -> np.ndarray:
        """Boolean [T,4]: channel expects contact when probability >= threshold."""
        return self.values >= threshold


@dataclass
class GlobalMotion:
    """Per-link global state: positions, orientations, and kinematic velocities."""

    skeleton: SkeletonSpec
    positions: np.ndarray  # [T,J,3]
    orientations: np.ndarray  # [T,J,3,3]
    linear_velocity: np.ndarray  # [T,J,3]
    angular_velocity: np.ndarray  # [T,J,3]
    frame_rate: float

    def __post_init__(self):
        t, j = self.positions.shape[0], self.skeleton.joint_count
        shapes = {
            "positions": (t, j, 3),
            "orientations": (t, j, 3, 3),
            "linear_velocity": (t, j, 3),
            "angular_velocity": (t, j, 3),
        }
        for name, shape in shapes.items():
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            setattr(self, name, arr)
            if arr.shape != shape:
                raise ValidationError(f"{name} must have shape {shape}, got {arr.shape}")

    def __len__(self) -> int:
        return self.positions.shape[0]


def default_skeleton() -> SkeletonSpec:
    """Small nine-joint humanoid used by the synthetic corpus and tests.

    Chain: pelvis -> spine -> head plus shoulder/hand arms off the spine
    and feet off the pelvis. Offsets give a roughly 1.7 m standing figure
    with the pelvis 0.95 m above the ground; hands point forward (+y in
    the rest pose) from the shoulders.
    """
    names = (
        "pelvis", "spine", "head",
        "left_shoulder", "left_hand", "right_shoulder", "right_hand",
        "left_foot", "right_foot",
    )
    parents = np.array([-1, 0, 1, 1, 3, 1, 5, 0, 0])
    offsets = np.array(
        [
            [0.0, 0.0, 0.95],
            [0.0, 0.0, 0.45],
            [0.0, 0.0, 0.30],
            [0.22, 0.0, 0.35],
            [0.0, 0.30, 0.0],
            [-0.22, 0.0, 0.35],
            [0.0, 0.30, 0.0],
            [0.10, 0.0, -0.95],
            [-0.10, 0.0, -0.95],
        ]
    )
    roles = {
        ROLE_ROOT: 0,
        ROLE_LEFT_HAND: 4,
        ROLE_RIGHT_HAND: 6,
        ROLE_LEFT_FOOT: 7,
        ROLE_RIGHT_FOOT: 8,
    }
    # track root, head, hands, and feet by default
    return SkeletonSpec(names, parents, offsets, roles, key_joints=(0, 2, 4, 6, 7, 8))
