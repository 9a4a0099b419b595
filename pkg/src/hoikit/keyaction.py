"""Sparse key-action extraction and interpolation for dense HOI motion.

A key-action set is a subset of frame indices (always containing the first
and last frame) such that interpolating between consecutive keys
reconstructs the dense sequence within a weighted minimax position error:
the error of a reconstruction is the maximum over frames and tracked
points of w_n * ||p - p_hat||. Tracked points are the global joint
positions plus, when an object trajectory is supplied, the object center
and four virtual corner points that make object rotation visible to the
metric.

Extraction is recursive: reconstruct each segment from its two end keys,
insert the worst frame as a new key while the segment error exceeds the
threshold. Ties pick the smallest frame index, so extraction is
deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .kinematics import _fk, global_joint_positions
from .motion import ContactChannels, MotionSequence, ObjectTrajectory, SkeletonSpec
from .rotation import axis_angle_to_matrix, matrix_to_axis_angle, matrix_to_rot6d, rot6d_to_matrix

DEFAULT_EPSILON = 0.05  # meters
DEFAULT_CORNER_EXTENT = 0.1  # meters, virtual object corner offset

# tetrahedral corner directions: span all three axes so any rotation change
# moves at least one corner
_CORNER_DIRS = np.array(
    [[1.0, 1.0, 1.0], [1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]]
)


@dataclass
class JointWeights:
    """Nonnegative importance weight per joint, plus one for object points."""

    joints: np.ndarray
    object_weight: float = 1.0

    def __post_init__(self):
        self.joints = np.asarray(self.joints, dtype=np.float64)
        if self.joints.ndim != 1:
            raise ValidationError("joint weights must be a flat array")
        if np.any(self.joints < 0) or self.object_weight < 0:
            raise ValidationError("weights must be nonnegative")
        if not (np.any(self.joints > 0) or self.object_weight > 0):
            raise ValidationError("at least one weight must be positive")


def default_weights(skeleton: SkeletonSpec, body: float = 1.0, critical: float = 2.0) -> JointWeights:
    """Uniform body weights with a higher weight on hands and feet."""
    w = np.full(skeleton.joint_count, body)
    for role in ("left_hand", "right_hand", "left_foot", "right_foot"):
        w[skeleton.roles[role]] = critical
    return JointWeights(w, object_weight=1.0)


@dataclass
class ReconstructionReport:
    """Worst weighted position error of a reconstruction, with its location."""

    max_error: float
    argmax_frame: int
    argmax_point: int
    segment_errors: dict[tuple[int, int], float] = field(default_factory=dict)


@dataclass
class KeyActionSet:
    """Sorted key frames with the pose/object/contact payload at each key."""

    skeleton: SkeletonSpec
    frame_rate: float
    source_length: int
    indices: np.ndarray  # [K] int
    root: np.ndarray  # [K,3]
    rot6d: np.ndarray  # [K,J,6]
    obj_positions: np.ndarray | None = None  # [K,3]
    obj_rotations: np.ndarray | None = None  # [K,3,3]
    contacts: np.ndarray | None = None  # [K,4]

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        if len(self.indices) < 2:
            raise ValidationError("a key action set needs at least two keys")
        if np.any(np.diff(self.indices) <= 0):
            raise ValidationError("key indices must be strictly increasing")
        if self.indices[0] != 0 or self.indices[-1] != self.source_length - 1:
            raise ValidationError("key set must contain frames 0 and T-1")

    def __len__(self) -> int:
        return len(self.indices)

    @classmethod
    def from_sequence(
        cls,
        motion: MotionSequence,
        indices: np.ndarray,
        objects: ObjectTrajectory | None = None,
        contacts: ContactChannels | None = None,
    ) -> "KeyActionSet":
        idx = np.asarray(indices, dtype=np.int64)
        return cls(
            skeleton=motion.skeleton,
            frame_rate=motion.frame_rate,
            source_length=len(motion),
            indices=idx,
            root=motion.root[idx].copy(),
            rot6d=motion.rot6d[idx].copy(),
            obj_positions=None if objects is None else objects.positions[idx].copy(),
            obj_rotations=None if objects is None else objects.rotations[idx].copy(),
            contacts=None if contacts is None else contacts.values[idx].copy(),
        )


def tracked_points(
    motion: MotionSequence,
    objects: ObjectTrajectory | None,
    weights: JointWeights,
    corner_extent: float = DEFAULT_CORNER_EXTENT,
) -> tuple[np.ndarray, np.ndarray]:
    """Point trajectories [T,N,3] the error metric runs on, with weights [N].

    N = J joints, plus object center and 4 virtual corners when an object
    trajectory is given.
    """
    if len(weights.joints) != motion.skeleton.joint_count:
        raise ValidationError("weight count disagrees with skeleton")
    pts = global_joint_positions(motion)
    w = weights.joints
    if objects is not None:
        if len(objects) != len(motion):
            raise ValidationError("object trajectory length differs from motion")
        corners = objects.positions[:, None, :] + np.einsum(
            "tij,cj->tci", objects.rotations, corner_extent * _CORNER_DIRS
        )
        pts = np.concatenate([pts, objects.positions[:, None, :], corners], axis=1)
        w = np.concatenate([w, np.full(5, weights.object_weight)])
    return pts, w


def reconstruction_error(
    reference: np.ndarray,
    reconstructed: np.ndarray,
    weights: np.ndarray,
    key_indices: np.ndarray | None = None,
) -> ReconstructionReport:
    """Weighted minimax error between two point-trajectory arrays [T,N,3].

    Returns the max over frames and points of weights[n] * Euclidean
    distance, the first (frame, point) attaining it, and per-segment
    maxima when key indices are supplied.
    """
    reference = np.asarray(reference, dtype=np.float64)
    reconstructed = np.asarray(reconstructed, dtype=np.float64)
    if reference.shape != reconstructed.shape:
        raise ValidationError("reference and reconstruction shapes differ")
    err = np.linalg.norm(reference - reconstructed, axis=-1) * np.asarray(weights)
    flat = int(np.argmax(err))
    t, n = np.unravel_index(flat, err.shape)
    segments: dict[tuple[int, int], float] = {}
    if key_indices is not None:
        idx = np.asarray(key_indices, dtype=np.int64)
        for a, b in zip(idx[:-1], idx[1:]):
            segments[(int(a), int(b))] = float(err[a : b + 1].max())
    return ReconstructionReport(float(err[t, n]), int(t), int(n), segments)


def _slerp_block(r_a: np.ndarray, r_b: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Slerp between matrix stacks r_a, r_b [...,3,3] at fractions u [L]."""
    rel = matrix_to_axis_angle(r_b @ np.swapaxes(r_a, -1, -2))
    steps = u.reshape((-1,) + (1,) * rel.ndim)
    return axis_angle_to_matrix(steps * rel[None]) @ r_a[None]


class _Interpolator:
    """Shared segment interpolation used by both extraction and interpolate()."""

    def __init__(self, keys: KeyActionSet):
        self.keys = keys
        self.rot = rot6d_to_matrix(keys.rot6d)  # [K,J,3,3]
        self.obj_rot = keys.obj_rotations

    def segment(self, a: int, b: int):
        """Interior frames of key span (a, b): fractions and interpolated state."""
        ia, ib = int(self.keys.indices[a]), int(self.keys.indices[b])
        length = ib - ia - 1
        if length <= 0:
            return None
        u = (np.arange(1, length + 1)) / (ib - ia)
        root = (1 - u[:, None]) * self.keys.root[a] + u[:, None] * self.keys.root[b]
        rot = _slerp_block(self.rot[a], self.rot[b], u)
        out = {"root": root, "rot": rot}
        if self.keys.obj_positions is not None:
            out["obj_pos"] = (1 - u[:, None]) * self.keys.obj_positions[a] + u[
                :, None
            ] * self.keys.obj_positions[b]
            out["obj_rot"] = _slerp_block(self.obj_rot[a], self.obj_rot[b], u)
        if self.keys.contacts is not None:
            out["contacts"] = np.repeat(self.keys.contacts[a][None], length, axis=0)
        return out


def interpolate(
    keys: KeyActionSet,
) -> tuple[MotionSequence, ObjectTrajectory | None, ContactChannels | None]:
    """Reconstruct dense motion from key actions.

    Translations and object positions are linear between keys, rotations
    spherical, contact channels zero-order-held from the left key. Frames
    at key indices are copied verbatim.
    """
    t = keys.source_length
    j = keys.skeleton.joint_count
    root = np.zeros((t, 3))
    rot = np.zeros((t, j, 3, 3))
    has_obj = keys.obj_positions is not None
    has_contacts = keys.contacts is not None
    obj_pos = np.zeros((t, 3)) if has_obj else None
    obj_rot = np.zeros((t, 3, 3)) if has_obj else None
    contacts = np.zeros((t, 4)) if has_contacts else None

    interp = _Interpolator(keys)
    for k in range(len(keys) - 1):
        seg = interp.segment(k, k + 1)
        if seg is None:
            continue
        lo, hi = int(keys.indices[k]) + 1, int(keys.indices[k + 1])
        root[lo:hi] = seg["root"]
        rot[lo:hi] = seg["rot"]
        if has_obj:
            obj_pos[lo:hi] = seg["obj_pos"]
            obj_rot[lo:hi] = seg["obj_rot"]
        if has_contacts:
            contacts[lo:hi] = seg["contacts"]
    idx = keys.indices
    root[idx] = keys.root
    rot[idx] = interp.rot
    rot6d = matrix_to_rot6d(rot)
    rot6d[idx] = keys.rot6d  # keys stay bit-exact, not just within tolerance
    motion = MotionSequence(keys.skeleton, root, rot6d, keys.frame_rate)
    objects = None
    if has_obj:
        obj_pos[idx] = keys.obj_positions
        obj_rot[idx] = keys.obj_rotations
        objects = ObjectTrajectory(obj_pos, obj_rot, keys.frame_rate)
    channels = None
    if has_contacts:
        contacts[idx] = keys.contacts
        channels = ContactChannels(contacts)
    return motion, objects, channels


class _DenseState:
    """Dense-frame arrays shared by extraction and the oracle."""

    def __init__(self, motion, objects, weights, corner_extent):
        self.skeleton = motion.skeleton
        self.corner_extent = corner_extent
        self.root = motion.root
        self.rot = rot6d_to_matrix(motion.rot6d)
        self.obj_pos = None if objects is None else objects.positions
        self.obj_rot = None if objects is None else objects.rotations
        self.ref_pts, self.w = tracked_points(motion, objects, weights, corner_extent)

    def span_error(self, lo: int, hi: int) -> tuple[float, int]:
        """(max weighted error, worst frame) reconstructing interior of [lo, hi]."""
        length = hi - lo - 1
        if length <= 0:
            return 0.0, -1
        u = np.arange(1, length + 1) / (hi - lo)
        root = (1 - u[:, None]) * self.root[lo] + u[:, None] * self.root[hi]
        rot = _slerp_block(self.rot[lo], self.rot[hi], u)
        pos, _ = _fk(self.skeleton, root, rot)
        if self.obj_pos is not None:
            op = (1 - u[:, None]) * self.obj_pos[lo] + u[:, None] * self.obj_pos[hi]
            orot = _slerp_block(self.obj_rot[lo], self.obj_rot[hi], u)
            corners = op[:, None, :] + np.einsum(
                "tij,cj->tci", orot, self.corner_extent * _CORNER_DIRS
            )
            pos = np.concatenate([pos, op[:, None, :], corners], axis=1)
        err = np.linalg.norm(self.ref_pts[lo + 1 : hi] - pos, axis=-1) * self.w
        per_frame = err.max(axis=1)
        worst = int(np.argmax(per_frame))
        return float(per_frame[worst]), lo + 1 + worst


def extract_key_actions(
    motion: MotionSequence,
    objects: ObjectTrajectory | None = None,
    contacts: ContactChannels | None = None,
    weights: JointWeights | None = None,
    epsilon: float = DEFAULT_EPSILON,
    corner_extent: float = DEFAULT_CORNER_EXTENT,
) -> KeyActionSet:
    """Recursive key-action extraction at minimax threshold epsilon (meters).

    Starts from keys {0, T-1}; while any segment's reconstruction error
    exceeds epsilon, the frame with the largest weighted error inside the
    worst segment becomes a new key and the segment splits. The returned
    set always satisfies the public post-condition
    ``reconstruction_error(original, interpolate(result)) <= epsilon``.
    """
    if epsilon <= 0:
        raise ValidationError("epsilon must be positive")
    weights = weights if weights is not None else default_weights(motion.skeleton)
    state = _DenseState(motion, objects, weights, corner_extent)
    t = len(motion)
    key_idx = {0, t - 1}
    stack = [(0, t - 1)]
    while stack:
        lo, hi = stack.pop()
        if hi - lo < 2:
            continue
        err, frame = state.span_error(lo, hi)
        if err > epsilon:
            key_idx.add(frame)
            stack.append((lo, frame))
            stack.append((frame, hi))
    # safety net: extraction and the public check share their arithmetic up
    # to one rot6d encode/decode cycle; re-verify through the public path
    # and patch any borderline frame so the post-condition holds exactly
    for _ in range(t):
        keys = KeyActionSet.from_sequence(motion, np.array(sorted(key_idx)), objects, contacts)
        rec_motion, rec_obj, _ = interpolate(keys)
        rec_pts, _w = tracked_points(rec_motion, rec_obj, weights, corner_extent)
        report = reconstruction_error(state.ref_pts, rec_pts, state.w)
        if report.max_error <= epsilon:
            break
        key_idx.add(report.argmax_frame)
    return KeyActionSet.from_sequence(motion, np.array(sorted(key_idx)), objects, contacts)


def optimal_key_actions_oracle(
    motion: MotionSequence,
    objects: ObjectTrajectory | None = None,
    contacts: ContactChannels | None = None,
    weights: JointWeights | None = None,
    epsilon: float = DEFAULT_EPSILON,
    corner_extent: float = DEFAULT_CORNER_EXTENT,
    max_frames: int = 30,
) -> KeyActionSet:
    """Minimum-cardinality key set meeting the epsilon bound (test oracle).

    Dynamic programming over all segment endpoints: an edge (i, j) is
    usable when interpolating i..j alone stays within epsilon, and the
    shortest 0 -> T-1 path by node count is a minimal key set. Quadratic
    in T, so refuses long sequences.
    """
    t = len(motion)
    if t > max_frames:
        raise ValidationError(f"oracle limited to T <= {max_frames}, got {t}")
    if epsilon <= 0:
        raise ValidationError("epsilon must be positive")
    weights = weights if weights is not None else default_weights(motion.skeleton)
    state = _DenseState(motion, objects, weights, corner_extent)

    def span_ok(i: int, j: int) -> bool:
        err, _ = state.span_error(i, j)
        return err <= epsilon

    best = np.full(t, np.inf)
    prev = np.full(t, -1, dtype=np.int64)
    best[0] = 1
    for j in range(1, t):
        for i in range(j):
            if not np.isfinite(best[i]):
                continue
            if best[i] + 1 >= best[j]:
                continue
            if span_ok(i, j):
                best[j] = best[i] + 1
                prev[j] = i
    if not np.isfinite(best[t - 1]):  # unreachable: adjacent spans are always ok
        raise ValidationError("oracle failed to cover the sequence")
    path = [t - 1]
    while path[-1] != 0:
        path.append(int(prev[path[-1]]))
    return KeyActionSet.from_sequence(motion, np.array(sorted(path)), objects, contacts)


@dataclass
class TrainingWindow:
    """One diffusion training sample: a dense initial state plus the next keys.

    ``valid`` masks padded slots (padding repeats the final key action).
    ``key_offsets`` hold each key's frame distance from the initial frame.
    ``waypoint_slots`` and ``prompt`` are the condition payload; the target
    condition is always the last valid slot's object position.
    """

    start_frame: int
    frame_rate: float
    initial_root: np.ndarray  # [3]
    initial_rot6d: np.ndarray  # [J,6]
    initial_obj: np.ndarray  # [12]
    initial_contacts: np.ndarray  # [4]
    key_root: np.ndarray  # [W,3]
    key_rot6d: np.ndarray  # [W,J,6]
    key_obj: np.ndarray  # [W,12]
    key_contacts: np.ndarray  # [W,4]
    key_offsets: np.ndarray  # [W] frames from start_frame
    valid: np.ndarray  # [W] 0/1
    prompt: str = ""
    waypoint_slots: tuple[int, ...] = ()
    geom_id: int = 0

    @property
    def window_key_count(self) -> int:
        return self.key_root.shape[0]

    @property
    def joint_count(self) -> int:
        return self.key_rot6d.shape[1]


def build_training_windows(
    motion: MotionSequence,
    keys: KeyActionSet,
    objects: ObjectTrajectory | None = None,
    contacts: ContactChannels | None = None,
    window_key_count: int = 6,
    stride: int = 1,
    prompt: str = "",
) -> list[TrainingWindow]:
    """Slide a window over the key actions of one sequence.

    Each window pairs the dense frame at key s with the following
    ``window_key_count`` key actions; windows advance by ``stride`` keys.
    The trailing partial window repeats the final key action under a
    validity mask.
    """
    if window_key_count < 1:
        raise ValidationError("window_key_count must be >= 1")
    if stride < 1:
        raise ValidationError("stride must be >= 1")
    if keys is None or len(keys) < 2:
        raise ValidationError("need a non-empty key action set")
    if keys.obj_positions is None or keys.contacts is None:
        raise ValidationError("training windows need object poses and contacts")
    k = len(keys)
    j = motion.skeleton.joint_count
    obj_flat = np.concatenate([keys.obj_positions, keys.obj_rotations.reshape(-1, 9)], axis=1)
    dense_obj = None if objects is None else objects.flat()
    dense_contacts = None if contacts is None else contacts.values

    windows: list[TrainingWindow] = []
    s = 0
    while s <= k - 2:
        real = min(window_key_count, k - 1 - s)
        sel = np.arange(s + 1, s + 1 + real)
        pad = window_key_count - real
        take = np.concatenate([sel, np.full(pad, sel[-1])]).astype(np.int64)
        start = int(keys.indices[s])
        win = TrainingWindow(
            start_frame=start,
            frame_rate=motion.frame_rate,
            initial_root=motion.root[start].copy(),
            initial_rot6d=motion.rot6d[start].copy(),
            initial_obj=(
                obj_flat[s].copy() if dense_obj is None else dense_obj[start].copy()
            ),
            initial_contacts=(
                keys.contacts[s].copy() if dense_contacts is None else dense_contacts[start].copy()
            ),
            key_root=keys.root[take].copy(),
            key_rot6d=keys.rot6d[take].copy(),
            key_obj=obj_flat[take].copy(),
            key_contacts=keys.contacts[take].copy(),
            key_offsets=(keys.indices[take] - start).astype(np.float64),
            valid=np.concatenate([np.ones(real), np.zeros(pad)]),
            prompt=prompt,
        )
        windows.append(win)
        if pad > 0:
            break
        s += stride
    return windows
