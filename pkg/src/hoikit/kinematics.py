"""Forward/inverse kinematics and finite-difference velocity rules.

relative_to_global runs FK over the parent chain: a joint's global
orientation is parent orientation times its local rotation, its position
the parent position plus the parent orientation applied to the rest
offset. The root's global orientation is its local rotation and its
position is root translation plus the root rest offset. global_to_relative
inverts this exactly.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError
from .motion import GlobalMotion, MotionSequence, SkeletonSpec
from .rotation import (
    matrix_to_axis_angle,
    matrix_to_rot6d,
    rot6d_to_matrix,
    validate_rotation,
)


def finite_difference_velocities(
    positions: np.ndarray, orientations: np.ndarray, frame_rate: float
) -> tuple[np.ndarray, np.ndarray]:
    """Kinematic velocities by forward differences.

    v_t = (p_{t+1} - p_t) * fps for t < T-1; the last frame copies the
    previous estimate so the arrays keep length T. Angular velocity is the
    axis-angle of R_{t+1} R_t^T scaled by fps, same boundary rule.

    Args:
        positions: [T,...,3] meters.
        orientations: [T,...,3,3] rotation matrices.
        frame_rate: frames per second.
    Returns:
        (linear [T,...,3] m/s, angular [T,...,3] rad/s).
    """
    positions = np.asarray(positions, dtype=np.float64)
    orientations = np.asarray(orientations, dtype=np.float64)
    t = positions.shape[0]
    if t < 2:
        raise ValidationError("need at least two frames for velocities")
    v = np.empty_like(positions)
    v[:-1] = (positions[1:] - positions[:-1]) * frame_rate
    v[-1] = v[-2]
    rel = orientations[1:] @ np.swapaxes(orientations[:-1], -1, -2)
    w = np.empty(positions.shape, dtype=np.float64)
    w[:-1] = matrix_to_axis_angle(rel) * frame_rate
    w[-1] = w[-2]
    return v, w


def forward_kinematics_frame(
    skeleton: SkeletonSpec, root_translation: np.ndarray, rot6d: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Global joint positions [J,3] and orientations [J,3,3] for one frame."""
    local = rot6d_to_matrix(rot6d)
    pos, ori = _fk(skeleton, np.asarray(root_translation)[None], local[None])
    return pos[0], ori[0]


def _fk(skeleton: SkeletonSpec, root: np.ndarray, local: np.ndarray):
    """Vectorized FK. root [T,3], local [T,J,3,3] -> ([T,J,3], [T,J,3,3])."""
    t, j = local.shape[0], skeleton.joint_count
    pos = np.empty((t, j, 3))
    ori = np.empty((t, j, 3, 3))
    pos[:, 0] = root + skeleton.offsets[0]
    ori[:, 0] = local[:, 0]
    for k in range(1, j):
        p = skeleton.parents[k]
        ori[:, k] = ori[:, p] @ local[:, k]
        pos[:, k] = pos[:, p] + (ori[:, p] @ skeleton.offsets[k])
    return pos, ori


def relative_to_global(motion: MotionSequence) -> GlobalMotion:
    """R2G: forward kinematics plus finite-difference velocities."""
    local = rot6d_to_matrix(motion.rot6d)
    pos, ori = _fk(motion.skeleton, motion.root, local)
    v, w = finite_difference_velocities(pos, ori, motion.frame_rate)
    return GlobalMotion(motion.skeleton, pos, ori, v, w, motion.frame_rate)


def global_to_relative(g: GlobalMotion) -> MotionSequence:
    """G2R: invert forward kinematics back to root translation + local 6-DOF."""
    validate_rotation(g.orientations)
    skeleton = g.skeleton
    t, j = len(g), skeleton.joint_count
    local = np.empty((t, j, 3, 3))
    local[:, 0] = g.orientations[:, 0]
    for k in range(1, j):
        p = skeleton.parents[k]
        local[:, k] = np.swapaxes(g.orientations[:, p], -1, -2) @ g.orientations[:, k]
    root = g.positions[:, 0] - skeleton.offsets[0]
    rot6d = matrix_to_rot6d(local)
    return MotionSequence(skeleton, root, rot6d, g.frame_rate, positions=g.positions.copy())


def global_joint_positions(motion: MotionSequence) -> np.ndarray:
    """[T,J,3] global joint positions via FK (no velocity work)."""
    local = rot6d_to_matrix(motion.rot6d)
    pos, _ = _fk(motion.skeleton, motion.root, local)
    return pos
