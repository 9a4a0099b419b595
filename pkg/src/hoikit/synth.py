"""Deterministic procedural corpus: an actor carries a box along waypoints.

Each sequence scripts three phases on a ground plane: walk to the box
(resting at carry height on an imaginary stand), carry it through one or
two waypoints to the target while the heading follows the path tangent,
then release and step back. During the carry the box is kinematically
attached to the midpoint between the hands, whose lateral spread fixes the
box width, so the hands lie exactly on the box faces and distance-based
contact labeling yields clean ground truth. All randomness flows from one
seed via per-sequence sub-streams; identical seeds give identical corpora.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import TriangleMesh, box_mesh, detect_contacts
from .kinematics import forward_kinematics_frame, relative_to_global
from .motion import (
    ContactChannels,
    MotionSequence,
    ObjectTrajectory,
    SkeletonSpec,
    default_skeleton,
)
from .rotation import axis_angle_to_matrix, matrix_to_rot6d, slerp
from .seeding import named_rng

BOX_DEPTH_HALF = 0.12  # meters, along the carry direction
BOX_HEIGHT_HALF = 0.08
ARM_DOWN_TILT_REST = np.radians(75.0)
ARM_DOWN_TILT_CARRY = np.radians(45.0)
ARM_SWING_IN_CARRY = np.radians(28.0)
TRANSITION_FRAMES = 6

PROMPTS = (
    "carry the box to the target",
    "move the box along the waypoints",
    "lift the box and place it down",
    "take the box to the goal",
)


@dataclass
class TaskSpec:
    """Generation conditions recorded with each synthetic sequence."""

    seq_id: int
    prompt: str
    t_total: int
    frame_rate: float
    start_obj: np.ndarray  # [3]
    target: np.ndarray  # [3]
    waypoints: np.ndarray  # [n,3] rows of (frame, x, y)
    mesh_name: str = "box"
    pick_frame: int = 0
    place_frame: int = 0

    def __post_init__(self):
        self.start_obj = np.asarray(self.start_obj, dtype=np.float64)
        self.target = np.asarray(self.target, dtype=np.float64)
        self.waypoints = np.asarray(self.waypoints, dtype=np.float64).reshape(-1, 3)

    def waypoint_tuples(self) -> tuple[tuple[int, float, float], ...]:
        return tuple((int(f), float(x), float(y)) for f, x, y in self.waypoints)


def _rz(angle: float) -> np.ndarray:
    return axis_angle_to_matrix(np.array([0.0, 0.0, angle]))


def _arm_rotations(skeleton: SkeletonSpec) -> tuple[np.ndarray, np.ndarray]:
    """(rest, carry) local rotations for [left_shoulder, right_shoulder]."""
    rx_rest = axis_angle_to_matrix(np.array([-ARM_DOWN_TILT_REST, 0.0, 0.0]))
    rx_carry = axis_angle_to_matrix(np.array([-ARM_DOWN_TILT_CARRY, 0.0, 0.0]))
    rest = np.stack([rx_rest, rx_rest])
    carry = np.stack(
        [_rz(ARM_SWING_IN_CARRY) @ rx_carry, _rz(-ARM_SWING_IN_CARRY) @ rx_carry]
    )
    return rest, carry


def _carry_geometry(skeleton: SkeletonSpec) -> tuple[np.ndarray, np.ndarray]:
    """Hand-midpoint offset from the root joint (root frame) and box half extents.

    Computed by running FK on the carry pose once; the box width equals the
    hand separation so the palms sit exactly on the side faces.
    """
    j = skeleton.joint_count
    rot6d = np.tile(matrix_to_rot6d(np.eye(3)), (j, 1))
    _, carry = _arm_rotations(skeleton)
    ls, rs = _shoulder_indices(skeleton)
    rot6d[ls] = matrix_to_rot6d(carry[0])
    rot6d[rs] = matrix_to_rot6d(carry[1])
    pos, _ = forward_kinematics_frame(skeleton, np.zeros(3), rot6d)
    lh = skeleton.roles["left_hand"]
    rh = skeleton.roles["right_hand"]
    mid = (pos[lh] + pos[rh]) / 2.0 - pos[0]
    half_width = float(np.linalg.norm(pos[lh] - pos[rh]) / 2.0)
    return mid, np.array([half_width, BOX_DEPTH_HALF, BOX_HEIGHT_HALF])


def _shoulder_indices(skeleton: SkeletonSpec) -> tuple[int, int]:
    ls = skeleton.parents[skeleton.roles["left_hand"]]
    rs = skeleton.parents[skeleton.roles["right_hand"]]
    return int(ls), int(rs)


def synth_box_mesh(skeleton: SkeletonSpec | None = None) -> TriangleMesh:
    """The carried box, sized to the skeleton's carry-pose hand spread."""
    skeleton = skeleton or default_skeleton()
    _, half = _carry_geometry(skeleton)
    return box_mesh(half)


def _smoothstep(u: np.ndarray) -> np.ndarray:
    return u * u * (3.0 - 2.0 * u)


def _eased_path(nodes: np.ndarray, frames_per_segment: list[int]) -> np.ndarray:
    """Piecewise smoothstep interpolation through nodes; rows are frames."""
    out = [nodes[0][None]]
    for seg, n in enumerate(frames_per_segment):
        u = _smoothstep(np.arange(1, n + 1) / n)
        out.append(nodes[seg] + u[:, None] * (nodes[seg + 1] - nodes[seg]))
    return np.concatenate(out)


def _headings(xy: np.ndarray, initial: float) -> np.ndarray:
    """Per-frame heading angle from the travel direction, box-filtered."""
    d = np.diff(xy, axis=0)
    raw = np.empty(len(xy))
    prev = initial
    for t in range(len(xy)):
        if t < len(d) and np.linalg.norm(d[t]) > 1e-9:
            prev = float(np.arctan2(d[t, 1], d[t, 0]))
        raw[t] = prev
    raw = np.unwrap(raw)
    width = 7
    pad = np.concatenate([np.full(width // 2, raw[0]), raw, np.full(width // 2, raw[-1])])
    kernel = np.ones(width) / width
    return np.convolve(pad, kernel, mode="valid")


def generate_sequence(
    seed: int, seq_id: int, skeleton: SkeletonSpec | None = None
) -> tuple[MotionSequence, ObjectTrajectory, ContactChannels, TaskSpec]:
    """One scripted carry sequence with ground-truth contacts and conditions."""
    skeleton = skeleton or default_skeleton()
    rng = named_rng(seed, "synth", seq_id)
    fps = 30.0
    mid_off, box_half = _carry_geometry(skeleton)
    carry_z = skeleton.offsets[0][2] + mid_off[2]

    # layout: box start, 1-2 waypoints, target, all at carry height
    start_xy = rng.uniform(-1.5, 1.5, size=2)
    n_wp = int(rng.integers(1, 3))
    points = [start_xy]
    for _ in range(n_wp + 1):
        step = rng.uniform(0.7, 1.4) * _unit(rng.uniform(-np.pi, np.pi))
        points.append(points[-1] + step)
    box_nodes_xy = np.stack(points)  # start, wp..., target
    spawn_xy = start_xy + rng.uniform(1.0, 1.8) * _unit(rng.uniform(-np.pi, np.pi))

    walk_frames = int(rng.integers(20, 31))
    seg_frames = [int(rng.integers(25, 41)) for _ in range(n_wp + 1)]
    hold = 5
    retreat_frames = int(rng.integers(10, 16))

    approach = np.arctan2(*(start_xy - spawn_xy)[::-1])
    heading_rot = _rz(approach)
    stance_xy = start_xy - (heading_rot @ mid_off)[:2]

    # phase frame spans
    pick = walk_frames
    carry_frames = hold + sum(seg_frames) + hold
    place = pick + carry_frames
    t_total = place + retreat_frames + 1

    # box path over the carry phase (frame pick .. place inclusive)
    carry_nodes = np.concatenate([box_nodes_xy[:1], box_nodes_xy, box_nodes_xy[-1:]])
    carry_xy = _eased_path(carry_nodes, [hold] + seg_frames + [hold])
    carry_heading = _headings(carry_xy, approach)

    # root path while walking in and retreating
    walk_xy = _eased_path(np.stack([spawn_xy, stance_xy]), [walk_frames])
    walk_heading = _headings(walk_xy, approach)
    retreat_dir = _unit(carry_heading[-1] + np.pi)
    final_stance = carry_xy[-1] - (_rz(carry_heading[-1]) @ mid_off)[:2]
    retreat_xy = _eased_path(
        np.stack([final_stance, final_stance + 0.4 * retreat_dir]), [retreat_frames]
    )

    j = skeleton.joint_count
    root = np.zeros((t_total, 3))
    rot6d = np.tile(matrix_to_rot6d(np.eye(3)), (t_total, j, 1))
    obj_pos = np.zeros((t_total, 3))
    obj_rot = np.zeros((t_total, 3, 3))
    rest_arm, carry_arm = _arm_rotations(skeleton)
    ls, rs = _shoulder_indices(skeleton)

    box_start = np.array([start_xy[0], start_xy[1], carry_z])
    box_target = np.array([carry_xy[-1, 0], carry_xy[-1, 1], carry_z])

    for t in range(t_total):
        if t <= pick:
            theta = walk_heading[min(t, walk_frames)]
            root_xy = walk_xy[min(t, walk_frames)]
            blend = max(0.0, 1.0 - (pick - t) / TRANSITION_FRAMES)
            box_p, box_r = box_start, _rz(approach)
        elif t <= place:
            k = t - pick
            theta = carry_heading[k]
            box_xy = carry_xy[k]
            box_p = np.array([box_xy[0], box_xy[1], carry_z])
            box_r = _rz(theta)
            root_xy = (box_p - skeleton.offsets[0] - _rz(theta) @ mid_off)[:2]
            blend = 1.0
        else:
            k = t - place
            theta = carry_heading[-1]
            root_xy = retreat_xy[min(k, retreat_frames)]
            blend = max(0.0, 1.0 - k / TRANSITION_FRAMES)
            box_p, box_r = box_target, _rz(theta)
        root[t, :2] = root_xy
        rot6d[t, 0] = matrix_to_rot6d(_rz(theta))
        rot6d[t, ls] = matrix_to_rot6d(slerp(rest_arm[0], carry_arm[0], np.asarray(blend)))
        rot6d[t, rs] = matrix_to_rot6d(slerp(rest_arm[1], carry_arm[1], np.asarray(blend)))
        obj_pos[t] = box_p
        obj_rot[t] = box_r

    motion = MotionSequence(skeleton, root, rot6d, fps)
    objects = ObjectTrajectory(obj_pos, obj_rot, fps)
    mesh = box_mesh(box_half)
    contacts = detect_contacts(relative_to_global(motion), objects, mesh)

    # waypoint conditions: the frames where the box reaches interior nodes
    wp_rows = []
    frame = pick + hold
    for i, n in enumerate(seg_frames):
        frame += n
        if i < n_wp:
            wp_rows.append([frame, box_nodes_xy[i + 1][0], box_nodes_xy[i + 1][1]])
    task = TaskSpec(
        seq_id=seq_id,
        prompt=PROMPTS[int(rng.integers(0, len(PROMPTS)))],
        t_total=t_total,
        frame_rate=fps,
        start_obj=box_start,
        target=box_target,
        waypoints=np.array(wp_rows if wp_rows else np.zeros((0, 3))),
        pick_frame=pick,
        place_frame=place,
    )
    return motion, objects, contacts, task


def _unit(angle: float) -> np.ndarray:
    return np.array([np.cos(angle), np.sin(angle)])


def generate_corpus(
    seed: int, count: int, skeleton: SkeletonSpec | None = None
) -> list[tuple[MotionSequence, ObjectTrajectory, ContactChannels, TaskSpec]]:
    """``count`` deterministic sequences for one corpus seed."""
    skeleton = skeleton or default_skeleton()
    return [generate_sequence(seed, i, skeleton) for i in range(count)]
