"""Generation-quality and tracking-quality metrics plus report emission.

Distance metrics are reported in millimeters, rotation errors in radians
(object orientation differences from ground truth use Frobenius norms).
MPJPE is root-relative by default since the root translation error is
reported separately.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, fields

import numpy as np

from .errors import ValidationError
from .geometry import TriangleMesh, signed_distance
from .kinematics import finite_difference_velocities
from .motion import ContactChannels, GlobalMotion, ObjectTrajectory
from .rotation import geodesic_angle
from .tracking import RolloutLog, SuccessCriteria, reached_target

MM = 1000.0
DEFAULT_FOOT_CONTACT_HEIGHT = 0.05  # meters
DEFAULT_FOOT_H_MAX = 0.05  # meters, skating height falloff


@dataclass
class GenerationMetrics:
    """One Table-1-style row; unavailable entries stay None."""

    t_start: float | None = None  # mm
    t_end: float | None = None  # mm
    t_xy: float | None = None  # mm
    h_feet: float | None = None  # mm
    foot_slide: float | None = None  # mm
    c_prec: float | None = None
    c_rec: float | None = None
    c_f1: float | None = None
    c_pct: float | None = None
    p_hand: float | None = None  # mm
    mpjpe: float | None = None  # mm
    t_root: float | None = None  # mm
    t_obj: float | None = None  # mm
    o_obj: float | None = None  # Frobenius


@dataclass
class TrackingMetrics:
    """One Table-3-style row."""

    succ_cont: bool = False
    succ_tgt: bool = False
    ttr: float = 0.0
    e_pos: float | None = None  # mm
    e_rot: float | None = None  # rad
    e_pos_obj: float | None = None  # mm
    e_rot_obj: float | None = None  # rad
    e_acc_obj: float | None = None  # mm/s^2
    e_vel_obj: float | None = None  # mm/s


def condition_matching(
    gen_objects: ObjectTrajectory,
    start: np.ndarray,
    target: np.ndarray,
    waypoints: tuple[tuple[int, float, float], ...] = (),
) -> tuple[float, float, float | None]:
    """(T_s, T_e, T_xy) in millimeters.

    T_s and T_e are 3D distances of the generated object trajectory's
    first/last position from the conditioned start/target; T_xy is the
    mean planar (x, y) distance at the waypoint frames, None without
    waypoints.
    """
    if target is None:
        raise ValidationError("condition matching needs a target position")
    pos = gen_objects.positions
    t_s = float(np.linalg.norm(pos[0] - np.asarray(start))) * MM
    t_e = float(np.linalg.norm(pos[-1] - np.asarray(target))) * MM
    if not waypoints:
        return t_s, t_e, None
    dists = []
    for frame, x, y in waypoints:
        if not 0 <= frame < len(gen_objects):
            raise ValidationError(f"waypoint frame {frame} outside trajectory")
        dists.append(np.linalg.norm(pos[frame, :2] - np.array([x, y])))
    return t_s, t_e, float(np.mean(dists)) * MM


def foot_metrics(
    g: GlobalMotion,
    contact_height: float = DEFAULT_FOOT_CONTACT_HEIGHT,
    h_max: float = DEFAULT_FOOT_H_MAX,
) -> tuple[float, float]:
    """(H_feet, FS) in millimeters.

    H_feet is the mean foot-joint height over frames labeled in contact
    (height below ``contact_height``). Foot sliding weighs the horizontal
    per-frame displacement of feet below ``h_max`` by (2 - 2^(h/h_max)),
    so displacement counts fully on the ground and fades to zero at
    ``h_max``.
    """
    feet = [g.skeleton.roles[r] for r in ("left_foot", "right_foot")]
    heights = g.positions[:, feet, 2]  # [T,2]
    in_contact = heights < contact_height
    h_feet = float(heights[in_contact].mean()) * MM if np.any(in_contact) else 0.0

    disp = np.linalg.norm(np.diff(g.positions[:, feet, :2], axis=0), axis=-1)  # [T-1,2]
    h = heights[:-1]
    qualify = h < h_max
    if not np.any(qualify):
        return h_feet, 0.0
    scale = 2.0 - np.power(2.0, np.clip(h / h_max, 0.0, 1.0))
    fs = float((disp[qualify] * scale[qualify]).mean()) * MM
    return h_feet, fs


def contact_metrics(
    predicted: ContactChannels, truth: ContactChannels, channels: tuple[int, ...] = (0, 1)
) -> tuple[float, float, float, float]:
    """(precision, recall, F1, contact fraction), pooled over hand channels.

    Probabilities threshold at 0.5. With no predicted positives the
    precision is 0 unless there are also no true positives; with no true
    positives the recall is 1. C_% is the fraction of frames with any
    predicted contact on the scored channels.
    """
    if len(predicted) != len(truth):
        raise ValidationError("contact series lengths differ")
    p = predicted.values[:, channels] >= 0.5
    g = truth.values[:, channels] >= 0.5
    tp = float(np.sum(p & g))
    fp = float(np.sum(p & ~g))
    fn = float(np.sum(~p & g))
    if tp + fp > 0:
        prec = tp / (tp + fp)
    else:
        prec = 1.0 if fn == 0 else 0.0
    rec = tp / (tp + fn) if tp + fn > 0 else 1.0
    f1 = 2 * prec * rec / (prec + rec) if prec + rec > 0 else 0.0
    c_pct = float(np.mean(np.any(p, axis=1)))
    return prec, rec, f1, c_pct


def hand_penetration(g: GlobalMotion, objects: ObjectTrajectory, mesh: TriangleMesh) -> float:
    """Mean signed-distance penetration depth of the hands, in millimeters."""
    if len(g) != len(objects):
        raise ValidationError("motion and object trajectory lengths differ")
    hands = [g.skeleton.roles[r] for r in ("left_hand", "right_hand")]
    depths = []
    for t in range(len(g)):
        rot = objects.rotations[t]
        pos = objects.positions[t]
        for h in hands:
            local = rot.T @ (g.positions[t, h] - pos)
            depths.append(max(0.0, -signed_distance(mesh, local)))
    return float(np.mean(depths)) * MM


def gt_difference(
    gen_motion: GlobalMotion,
    gen_objects: ObjectTrajectory,
    gt_motion: GlobalMotion,
    gt_objects: ObjectTrajectory,
    root_relative: bool = True,
) -> tuple[float, float, float, float]:
    """(MPJPE, T_root, T_obj, O_obj): position errors in mm, O_obj Frobenius."""
    if len(gen_motion) != len(gt_motion) or len(gen_objects) != len(gt_objects):
        raise ValidationError("generated and ground-truth lengths differ")
    root = gen_motion.skeleton.roles["root"]
    gen_p = gen_motion.positions
    gt_p = gt_motion.positions
    if root_relative:
        gen_p = gen_p - gen_p[:, root : root + 1]
        gt_p = gt_p - gt_p[:, root : root + 1]
    mpjpe = float(np.linalg.norm(gen_p - gt_p, axis=-1).mean()) * MM
    t_root = float(
        np.linalg.norm(gen_motion.positions[:, root] - gt_motion.positions[:, root], axis=-1).mean()
    ) * MM
    t_obj = float(np.linalg.norm(gen_objects.positions - gt_objects.positions, axis=-1).mean()) * MM
    o_obj = float(
        np.linalg.norm(gen_objects.rotations - gt_objects.rotations, axis=(-2, -1)).mean()
    )
    return mpjpe, t_root, t_obj, o_obj


def _contact_success(log: RolloutLog, min_segment: int) -> bool:
    """Documented rule: every long expected-contact segment must be hit at
    least once on the right channel, and no frame may register contact on a
    channel that is not expected (wrong-body contact)."""
    expected = log.expected_contacts >= 0.5
    actual = log.actual_contacts >= 0.5
    if np.any(actual & ~expected):
        return False
    t_total = len(log)
    for ch in range(expected.shape[1]):
        t = 0
        while t < t_total:
            if not expected[t, ch]:
                t += 1
                continue
            start = t
            while t < t_total and expected[t, ch]:
                t += 1
            if t - start >= min_segment and not np.any(actual[start:t, ch]):
                return False
    return True


def tracking_metrics(log: RolloutLog, criteria: SuccessCriteria) -> TrackingMetrics:
    """Score one rollout; TTR is frames survived over reference length."""
    if len(log) == 0:
        raise ValidationError("empty rollout")
    kj = np.asarray(log.key_joints or log.skeleton.key_joints, dtype=np.int64)
    e_pos = float(np.linalg.norm(log.sim_positions[:, kj] - log.ref_positions[:, kj], axis=-1).mean()) * MM
    e_rot = float(geodesic_angle(log.sim_orientations[:, kj], log.ref_orientations[:, kj]).mean())
    e_pos_obj = float(np.linalg.norm(log.sim_obj_pos - log.ref_obj_pos, axis=-1).mean()) * MM
    e_rot_obj = float(geodesic_angle(log.sim_obj_rot, log.ref_obj_rot).mean())
    e_vel_obj = float(np.linalg.norm(log.sim_obj_vel - log.ref_obj_vel, axis=-1).mean()) * MM
    if len(log) >= 2:
        sim_acc = np.diff(log.sim_obj_vel, axis=0) * log.frame_rate
        ref_acc = np.diff(log.ref_obj_vel, axis=0) * log.frame_rate
        e_acc_obj = float(np.linalg.norm(sim_acc - ref_acc, axis=-1).mean()) * MM
    else:
        e_acc_obj = 0.0
    if log.termination_frame is None:
        ttr = 1.0
    else:
        ttr = log.termination_frame / log.source_length
    return TrackingMetrics(
        succ_cont=_contact_success(log, criteria.min_contact_segment),
        succ_tgt=reached_target(log, criteria.target_radius),
        ttr=ttr,
        e_pos=e_pos,
        e_rot=e_rot,
        e_pos_obj=e_pos_obj,
        e_rot_obj=e_rot_obj,
        e_acc_obj=e_acc_obj,
        e_vel_obj=e_vel_obj,
    )


GENERATION_COLUMNS = (
    ("T_s", "t_start"), ("T_e", "t_end"), ("T_xy", "t_xy"),
    ("H_feet", "h_feet"), ("FS", "foot_slide"),
    ("C_prec", "c_prec"), ("C_rec", "c_rec"), ("C_F1", "c_f1"), ("C_pct", "c_pct"),
    ("P_hand", "p_hand"),
    ("MPJPE", "mpjpe"), ("T_root", "t_root"), ("T_obj", "t_obj"), ("O_obj", "o_obj"),
)

TRACKING_COLUMNS = (
    ("Succ_cont", "succ_cont"), ("Succ_tgt", "succ_tgt"), ("TTR", "ttr"),
    ("E_pos", "e_pos"), ("E_rot", "e_rot"),
    ("E_pos_obj", "e_pos_obj"), ("E_rot_obj", "e_rot_obj"),
    ("E_acc_obj", "e_acc_obj"), ("E_vel_obj", "e_vel_obj"),
)


def _cell(value) -> str:
    if value is None:
        return "-"
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(float(value))


def _parse_cell(text: str):
    if text == "-":
        return None
    if text in ("true", "false"):
        return text == "true"
    return float(text)


def emit_report(records: list[tuple[str, object]], fmt: str = "table") -> str:
    """Render metric rows as an aligned table or lossless CSV.

    ``records`` holds (name, GenerationMetrics|TrackingMetrics) pairs; all
    rows must be of one kind. Column order follows the corresponding
    results table of the evaluation protocol. CSV floats use repr so a
    re-parse reproduces the records exactly.
    """
    if not records:
        raise ValidationError("need at least one metric record")
    kind = type(records[0][1])
    if any(type(r[1]) is not kind for r in records):
        raise ValidationError("mixed metric kinds in one report")
    columns = GENERATION_COLUMNS if kind is GenerationMetrics else TRACKING_COLUMNS
    header = ["Method"] + [c[0] for c in columns]
    rows = [[name] + [_cell(getattr(m, attr)) for _, attr in columns] for name, m in records]
    if fmt == "csv":
        out = io.StringIO()
        out.write(",".join(header) + "\n")
        for row in rows:
            out.write(",".join(row) + "\n")
        return out.getvalue()
    if fmt == "table":
        widths = [max(len(h), *(len(r[i]) for r in rows)) for i, h in enumerate(header)]
        lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip()]
        lines.append("  ".join("-" * w for w in widths))
        for row in rows:
            lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
        return "\n".join(lines) + "\n"
    raise ValidationError(f"unknown report format {fmt!r}")


def parse_report_csv(text: str) -> list[tuple[str, object]]:
    """Invert emit_report(..., fmt='csv')."""
    lines = [ln for ln in text.splitlines() if ln]
    header = lines[0].split(",")
    gen_header = ["Method"] + [c[0] for c in GENERATION_COLUMNS]
    trk_header = ["Method"] + [c[0] for c in TRACKING_COLUMNS]
    if header == gen_header:
        kind, columns = GenerationMetrics, GENERATION_COLUMNS
    elif header == trk_header:
        kind, columns = TrackingMetrics, TRACKING_COLUMNS
    else:
        raise ValidationError("unrecognized report header")
    records = []
    for line in lines[1:]:
        cells = line.split(",")
        values = {attr: _parse_cell(c) for (_, attr), c in zip(columns, cells[1:])}
        records.append((cells[0], kind(**values)))
    return records
