"""Versioned motion container: one file format for every artifact kind.

A container is an ordered list of tagged chunks. Each chunk payload is a
flat mapping of named values (ints, floats, strings, float64/int64
arrays), written either as compact little-endian binary or as a
line-oriented text form; the reader sniffs the form and rejects unknown
container versions. Frame data is stored as one record per frame with a
fixed field order: root translation, 6-DOF rotations, optional joint
positions, object pose (position + row-major rotation), contact channels.

Chunk tags: ``motion`` (dense sequence), ``keyset`` (key actions),
``bps`` (basis-point geometry code), ``rollout`` (tracking log),
``windows`` (training windows), ``task`` (generation conditions),
``cond`` (assembled condition bundle).
"""

from __future__ import annotations

import struct
from typing import Iterable

import numpy as np

from .diffusion import ConditionBundle
from .errors import ContainerError, ValidationError
from .geometry import BasisPointSet, BpsFeature
from .keyaction import KeyActionSet, TrainingWindow
from .motion import ContactChannels, MotionSequence, ObjectTrajectory, SkeletonSpec
from .synth import TaskSpec
from .tracking import RolloutLog

MAGIC = b"HOIC"
TEXT_MAGIC = "hoic"
FORMAT_VERSION = 1

Payload = dict[str, object]
Chunk = tuple[str, Payload]

_INT, _FLOAT, _STR, _F8, _I8 = range(5)


# ---------------------------------------------------------------------------
# low-level chunk I/O


def _entry_code(value) -> int:
    if isinstance(value, bool):
        raise ContainerError("store booleans as ints")
    if isinstance(value, (int, np.integer)):
        return _INT
    if isinstance(value, (float, np.floating)):
        return _FLOAT
    if isinstance(value, str):
        return _STR
    if isinstance(value, np.ndarray):
        if value.dtype.kind == "f":
            return _F8
        if value.dtype.kind == "i":
            return _I8
    raise ContainerError(f"unsupported payload value type {type(value)!r}")


def write_chunks(path, chunks: Iterable[Chunk], text: bool = False) -> None:
    chunks = list(chunks)
    if text:
        _write_text(path, chunks)
    else:
        _write_binary(path, chunks)


def read_chunks(path) -> list[Chunk]:
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == MAGIC:
        return _read_binary(path)
    try:
        if head.decode("utf-8").startswith(TEXT_MAGIC):
            return _read_text(path)
    except UnicodeDecodeError:
        pass
    raise ContainerError(f"{path}: not a motion container")


def _write_binary(path, chunks: list[Chunk]) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(chunks)))
        for tag, payload in chunks:
            tag_b = tag.encode("ascii")
            fh.write(struct.pack("<B", len(tag_b)))
            fh.write(tag_b)
            fh.write(struct.pack("<I", len(payload)))
            for name, value in payload.items():
                name_b = name.encode("utf-8")
                code = _entry_code(value)
                fh.write(struct.pack("<B", len(name_b)))
                fh.write(name_b)
                fh.write(struct.pack("<B", code))
                if code == _INT:
                    fh.write(struct.pack("<q", int(value)))
                elif code == _FLOAT:
                    fh.write(struct.pack("<d", float(value)))
                elif code == _STR:
                    data = value.encode("utf-8")
                    fh.write(struct.pack("<I", len(data)))
                    fh.write(data)
                else:
                    arr = np.ascontiguousarray(value, dtype="<f8" if code == _F8 else "<i8")
                    fh.write(struct.pack("<B", arr.ndim))
                    fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
                    fh.write(arr.tobytes())


def _read_binary(path) -> list[Chunk]:
    with open(path, "rb") as fh:
        data = fh.read()
    try:
        if data[:4] != MAGIC:
            raise ContainerError(f"{path}: bad magic")
        version, n_chunks = struct.unpack_from("<II", data, 4)
        if version != FORMAT_VERSION:
            raise ContainerError(f"{path}: unknown container version {version}")
        pos = 12
        chunks: list[Chunk] = []
        for _ in range(n_chunks):
            (tlen,) = struct.unpack_from("<B", data, pos)
            pos += 1
            tag = data[pos : pos + tlen].decode("ascii")
            pos += tlen
            (n_entries,) = struct.unpack_from("<I", data, pos)
            pos += 4
            payload: Payload = {}
            for _ in range(n_entries):
                (nlen,) = struct.unpack_from("<B", data, pos)
                pos += 1
                name = data[pos : pos + nlen].decode("utf-8")
                pos += nlen
                (code,) = struct.unpack_from("<B", data, pos)
                pos += 1
                if code == _INT:
                    (value,) = struct.unpack_from("<q", data, pos)
                    pos += 8
                elif code == _FLOAT:
                    (value,) = struct.unpack_from("<d", data, pos)
                    pos += 8
                elif code == _STR:
                    (slen,) = struct.unpack_from("<I", data, pos)
                    pos += 4
                    value = data[pos : pos + slen].decode("utf-8")
                    pos += slen
                elif code in (_F8, _I8):
                    (ndim,) = struct.unpack_from("<B", data, pos)
                    pos += 1
                    shape = struct.unpack_from(f"<{ndim}Q", data, pos)
                    pos += 8 * ndim
                    dtype = "<f8" if code == _F8 else "<i8"
                    size = int(np.prod(shape)) if ndim else 1
                    value = np.frombuffer(data, dtype=dtype, count=size, offset=pos).reshape(shape).copy()
                    pos += 8 * size
                else:
                    raise ContainerError(f"{path}: unknown entry code {code}")
                payload[name] = value
            chunks.append((tag, payload))
        return chunks
    except ContainerError:
        raise
    except (struct.error, IndexError, UnicodeDecodeError, ValueError) as exc:
        raise ContainerError(f"{path}: truncated or corrupt container: {exc}") from exc


def _escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace("\n", "\\n")


def _unescape(text: str) -> str:
    out = []
    i = 0
    while i < len(text):
        if text[i] == "\\" and i + 1 < len(text):
            out.append("\n" if text[i + 1] == "n" else text[i + 1])
            i += 2
        else:
            out.append(text[i])
            i += 1
    return "".join(out)


def _write_text(path, chunks: list[Chunk]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{TEXT_MAGIC} {FORMAT_VERSION}\n")
        for tag, payload in chunks:
            fh.write(f"chunk {tag}\n")
            for name, value in payload.items():
                code = _entry_code(value)
                if code == _INT:
                    fh.write(f"i {name} {int(value)}\n")
                elif code == _FLOAT:
                    fh.write(f"f {name} {float(value)!r}\n")
                elif code == _STR:
                    fh.write(f"s {name} {_escape(value)}\n")
                else:
                    arr = np.asarray(value)
                    kind = "f8" if code == _F8 else "i8"
                    dims = "x".join(str(d) for d in arr.shape)
                    fh.write(f"a {name} {kind} {dims}\n")
                    if arr.size:
                        rows = arr.reshape(-1, arr.shape[-1]) if arr.ndim > 1 else arr[None]
                        for row in rows:
                            if code == _F8:
                                fh.write(" ".join(repr(float(v)) for v in row) + "\n")
                            else:
                                fh.write(" ".join(str(int(v)) for v in row) + "\n")
            fh.write("end\n")


def _read_text(path) -> list[Chunk]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    head = lines[0].split()
    if len(head) != 2 or head[0] != TEXT_MAGIC:
        raise ContainerError(f"{path}: bad text header")
    if int(head[1]) != FORMAT_VERSION:
        raise ContainerError(f"{path}: unknown container version {head[1]}")
    chunks: list[Chunk] = []
    i = 1
    try:
        while i < len(lines):
            line = lines[i]
            i += 1
            if not line:
                continue
            if not line.startswith("chunk "):
                raise ContainerError(f"{path}: expected chunk header, got {line!r}")
            tag = line.split(maxsplit=1)[1]
            payload: Payload = {}
            while lines[i] != "end":
                kind, rest = lines[i].split(" ", 1)
                i += 1
                if kind == "i":
                    name, value = rest.split(" ", 1)
                    payload[name] = int(value)
                elif kind == "f":
                    name, value = rest.split(" ", 1)
                    payload[name] = float(value)
                elif kind == "s":
                    parts = rest.split(" ", 1)
                    payload[parts[0]] = _unescape(parts[1]) if len(parts) > 1 else ""
                elif kind == "a":
                    name, dtype, dims = rest.split(" ")
                    shape = tuple(int(d) for d in dims.split("x")) if dims else ()
                    size = int(np.prod(shape)) if shape else 0
                    n_rows = 0 if size == 0 else (int(np.prod(shape[:-1])) if len(shape) > 1 else 1)
                    values: list = []
                    for _ in range(n_rows):
                        values.extend(lines[i].split())
                        i += 1
                    arr = np.array(
                        [float(v) for v in values] if dtype == "f8" else [int(v) for v in values],
                        dtype=np.float64 if dtype == "f8" else np.int64,
                    )
                    payload[name] = arr.reshape(shape)
                else:
                    raise ContainerError(f"{path}: unknown entry kind {kind!r}")
            i += 1  # skip 'end'
            chunks.append((tag, payload))
    except (IndexError, ValueError) as exc:
        raise ContainerError(f"{path}: malformed text container: {exc}") from exc
    return chunks


# ---------------------------------------------------------------------------
# typed payload codecs


def _skeleton_payload(skeleton: SkeletonSpec) -> Payload:
    return {
        "joint_names": ",".join(skeleton.names),
        "parents": skeleton.parents.astype(np.int64),
        "offsets": skeleton.offsets,
        "roles": ",".join(f"{k}:{v}" for k, v in sorted(skeleton.roles.items())),
        "key_joints": np.asarray(skeleton.key_joints, dtype=np.int64),
    }


def _payload_skeleton(payload: Payload) -> SkeletonSpec:
    roles = {}
    if payload["roles"]:
        for pair in payload["roles"].split(","):
            k, v = pair.split(":")
            roles[k] = int(v)
    return SkeletonSpec(
        names=tuple(payload["joint_names"].split(",")),
        parents=payload["parents"],
        offsets=payload["offsets"],
        roles=roles,
        key_joints=tuple(int(x) for x in payload["key_joints"]),
    )


def motion_payload(
    motion: MotionSequence,
    objects: ObjectTrajectory | None = None,
    contacts: ContactChannels | None = None,
) -> Payload:
    """Dense sequence as per-frame records in the documented field order."""
    t, j = len(motion), motion.skeleton.joint_count
    cols = [motion.root, motion.rot6d.reshape(t, -1)]
    if motion.positions is not None:
        cols.append(motion.positions.reshape(t, -1))
    if objects is not None:
        if len(objects) != t:
            raise ValidationError("object trajectory length differs from motion")
        cols.append(objects.flat())
    if contacts is not None:
        if len(contacts) != t:
            raise ValidationError("contact channel length differs from motion")
        cols.append(contacts.values)
    payload: Payload = {
        "T": t,
        "J": j,
        "fps": float(motion.frame_rate),
        "has_positions": int(motion.positions is not None),
        "has_object": int(objects is not None),
        "has_contacts": int(contacts is not None),
    }
    payload.update(_skeleton_payload(motion.skeleton))
    payload["frames"] = np.concatenate(cols, axis=1)
    return payload


def payload_motion(
    payload: Payload,
) -> tuple[MotionSequence, ObjectTrajectory | None, ObjectTrajectory | None]:
    skeleton = _payload_skeleton(payload)
    t, j = int(payload["T"]), skeleton.joint_count
    frames = payload["frames"]
    width = 3 + 6 * j + 3 * j * int(payload["has_positions"]) + 12 * int(payload["has_object"]) + 4 * int(payload["has_contacts"])
    if frames.shape != (t, width):
        raise ContainerError(f"frame block has shape {frames.shape}, expected {(t, width)}")
    pos = 3 + 6 * j
    root = frames[:, :3]
    rot6d = frames[:, 3:pos].reshape(t, j, 6)
    positions = None
    if payload["has_positions"]:
        positions = frames[:, pos : pos + 3 * j].reshape(t, j, 3)
        pos += 3 * j
    objects = None
    if payload["has_object"]:
        objects = ObjectTrajectory.from_flat(frames[:, pos : pos + 12], float(payload["fps"]))
        pos += 12
    contacts = None
    if payload["has_contacts"]:
        contacts = ContactChannels(frames[:, pos : pos + 4])
    motion = MotionSequence(skeleton, root, rot6d, float(payload["fps"]), positions)
    return motion, objects, contacts


def keyset_payload(keys: KeyActionSet) -> Payload:
    payload: Payload = {
        "source_length": int(keys.source_length),
        "K": len(keys),
        "J": keys.skeleton.joint_count,
        "fps": float(keys.frame_rate),
        "has_object": int(keys.obj_positions is not None),
        "has_contacts": int(keys.contacts is not None),
        "indices": keys.indices.astype(np.int64),
    }
    payload.update(_skeleton_payload(keys.skeleton))
    payload["root"] = keys.root
    payload["rot6d"] = keys.rot6d.reshape(len(keys), -1)
    if keys.obj_positions is not None:
        payload["obj_positions"] = keys.obj_positions
        payload["obj_rotations"] = keys.obj_rotations.reshape(len(keys), 9)
    if keys.contacts is not None:
        payload["contacts"] = keys.contacts
    return payload


def payload_keyset(payload: Payload) -> KeyActionSet:
    skeleton = _payload_skeleton(payload)
    k = int(payload["K"])
    has_obj = bool(payload["has_object"])
    return KeyActionSet(
        skeleton=skeleton,
        frame_rate=float(payload["fps"]),
        source_length=int(payload["source_length"]),
        indices=payload["indices"],
        root=payload["root"],
        rot6d=payload["rot6d"].reshape(k, skeleton.joint_count, 6),
        obj_positions=payload["obj_positions"] if has_obj else None,
        obj_rotations=payload["obj_rotations"].reshape(k, 3, 3) if has_obj else None,
        contacts=payload["contacts"] if payload["has_contacts"] else None,
    )


def bps_payload(basis: BasisPointSet, feature: BpsFeature) -> Payload:
    payload: Payload = {
        "seed": int(basis.seed),
        "radius": float(basis.radius),
        "count": len(basis),
        "points": basis.points,
        "vectors": feature.vectors,
        "has_projected": int(feature.projected is not None),
    }
    if feature.projected is not None:
        payload["projected"] = feature.projected
    return payload


def payload_bps(payload: Payload) -> tuple[BasisPointSet, BpsFeature]:
    basis = BasisPointSet(payload["points"], int(payload["seed"]), float(payload["radius"]))
    projected = payload["projected"] if payload["has_projected"] else None
    return basis, BpsFeature(payload["vectors"], projected)


def rollout_payload(log: RolloutLog) -> Payload:
    t = len(log)
    payload: Payload = {
        "T": t,
        "J": log.skeleton.joint_count,
        "fps": float(log.frame_rate),
        "source_length": int(log.source_length),
        "termination_frame": -1 if log.termination_frame is None else int(log.termination_frame),
        "termination_reason": log.termination_reason or "",
        "has_target": int(log.target_position is not None),
    }
    payload.update(_skeleton_payload(log.skeleton))
    payload["reward_key_joints"] = np.asarray(log.key_joints, dtype=np.int64)
    for name in (
        "sim_positions", "sim_orientations", "sim_lin_vel", "sim_ang_vel",
        "ref_positions", "ref_orientations", "ref_lin_vel", "ref_ang_vel",
        "sim_obj_pos", "sim_obj_rot", "sim_obj_vel", "sim_obj_angvel",
        "ref_obj_pos", "ref_obj_rot", "ref_obj_vel", "ref_obj_angvel",
        "expected_contacts", "actual_contacts", "reward_terms", "reward_total",
    ):
        payload[name] = getattr(log, name).reshape(t, -1)
    payload["object_corners"] = log.object_corners
    if log.target_position is not None:
        payload["target_position"] = log.target_position
    return payload


def payload_rollout(payload: Payload) -> RolloutLog:
    skeleton = _payload_skeleton(payload)
    t, j = int(payload["T"]), skeleton.joint_count
    term = int(payload["termination_frame"])
    return RolloutLog(
        skeleton=skeleton,
        frame_rate=float(payload["fps"]),
        sim_positions=payload["sim_positions"].reshape(t, j, 3),
        sim_orientations=payload["sim_orientations"].reshape(t, j, 3, 3),
        sim_lin_vel=payload["sim_lin_vel"].reshape(t, j, 3),
        sim_ang_vel=payload["sim_ang_vel"].reshape(t, j, 3),
        ref_positions=payload["ref_positions"].reshape(t, j, 3),
        ref_orientations=payload["ref_orientations"].reshape(t, j, 3, 3),
        ref_lin_vel=payload["ref_lin_vel"].reshape(t, j, 3),
        ref_ang_vel=payload["ref_ang_vel"].reshape(t, j, 3),
        sim_obj_pos=payload["sim_obj_pos"],
        sim_obj_rot=payload["sim_obj_rot"].reshape(t, 3, 3),
        sim_obj_vel=payload["sim_obj_vel"],
        sim_obj_angvel=payload["sim_obj_angvel"],
        ref_obj_pos=payload["ref_obj_pos"],
        ref_obj_rot=payload["ref_obj_rot"].reshape(t, 3, 3),
        ref_obj_vel=payload["ref_obj_vel"],
        ref_obj_angvel=payload["ref_obj_angvel"],
        expected_contacts=payload["expected_contacts"],
        actual_contacts=payload["actual_contacts"],
        object_corners=payload["object_corners"],
        reward_terms=payload["reward_terms"],
        reward_total=payload["reward_total"].reshape(t),
        source_length=int(payload["source_length"]),
        termination_frame=None if term < 0 else term,
        termination_reason=payload["termination_reason"] or None,
        target_position=payload["target_position"] if payload["has_target"] else None,
        key_joints=tuple(int(x) for x in payload["reward_key_joints"]),
    )


def windows_payload(windows: list[TrainingWindow]) -> Payload:
    if not windows:
        raise ValidationError("no training windows to serialize")
    n = len(windows)
    j = windows[0].joint_count
    w = windows[0].window_key_count
    payload: Payload = {
        "count": n,
        "J": j,
        "window_key_count": w,
        "fps": float(windows[0].frame_rate),
        "start_frames": np.array([win.start_frame for win in windows], dtype=np.int64),
        "initial_root": np.stack([win.initial_root for win in windows]),
        "initial_rot6d": np.stack([win.initial_rot6d.reshape(-1) for win in windows]),
        "initial_obj": np.stack([win.initial_obj for win in windows]),
        "initial_contacts": np.stack([win.initial_contacts for win in windows]),
        "key_root": np.stack([win.key_root.reshape(-1) for win in windows]),
        "key_rot6d": np.stack([win.key_rot6d.reshape(-1) for win in windows]),
        "key_obj": np.stack([win.key_obj.reshape(-1) for win in windows]),
        "key_contacts": np.stack([win.key_contacts.reshape(-1) for win in windows]),
        "key_offsets": np.stack([win.key_offsets for win in windows]),
        "valid": np.stack([win.valid for win in windows]),
        "prompts": "\n".join(win.prompt for win in windows),
        "geom_ids": np.array([win.geom_id for win in windows], dtype=np.int64),
        "waypoint_slots": "\n".join(
            ",".join(str(s) for s in win.waypoint_slots) for win in windows
        ),
    }
    return payload


def payload_windows(payload: Payload) -> list[TrainingWindow]:
    n = int(payload["count"])
    j = int(payload["J"])
    w = int(payload["window_key_count"])
    prompts = payload["prompts"].split("\n") if payload["prompts"] else [""] * n
    wp_lines = payload["waypoint_slots"].split("\n")
    if len(prompts) != n:
        prompts = [""] * n
    if len(wp_lines) != n:
        wp_lines = [""] * n
    windows = []
    for i in range(n):
        slots = tuple(int(s) for s in wp_lines[i].split(",") if s)
        windows.append(
            TrainingWindow(
                start_frame=int(payload["start_frames"][i]),
                frame_rate=float(payload["fps"]),
                initial_root=payload["initial_root"][i],
                initial_rot6d=payload["initial_rot6d"][i].reshape(j, 6),
                initial_obj=payload["initial_obj"][i],
                initial_contacts=payload["initial_contacts"][i],
                key_root=payload["key_root"][i].reshape(w, 3),
                key_rot6d=payload["key_rot6d"][i].reshape(w, j, 6),
                key_obj=payload["key_obj"][i].reshape(w, 12),
                key_contacts=payload["key_contacts"][i].reshape(w, 4),
                key_offsets=payload["key_offsets"][i],
                valid=payload["valid"][i],
                prompt=prompts[i],
                waypoint_slots=slots,
                geom_id=int(payload["geom_ids"][i]),
            )
        )
    return windows


def task_payload(task: TaskSpec) -> Payload:
    return {
        "seq_id": int(task.seq_id),
        "prompt": task.prompt,
        "T": int(task.t_total),
        "fps": float(task.frame_rate),
        "start_obj": task.start_obj,
        "target": task.target,
        "waypoints": task.waypoints.reshape(-1, 3) if task.waypoints.size else np.zeros((0, 3)),
        "mesh_name": task.mesh_name,
        "pick_frame": int(task.pick_frame),
        "place_frame": int(task.place_frame),
    }


def payload_task(payload: Payload) -> TaskSpec:
    return TaskSpec(
        seq_id=int(payload["seq_id"]),
        prompt=payload["prompt"],
        t_total=int(payload["T"]),
        frame_rate=float(payload["fps"]),
        start_obj=payload["start_obj"],
        target=payload["target"],
        waypoints=payload["waypoints"],
        mesh_name=payload["mesh_name"],
        pick_frame=int(payload["pick_frame"]),
        place_frame=int(payload["place_frame"]),
    )


def cond_payload(cond: ConditionBundle) -> Payload:
    payload: Payload = {
        "s": cond.s,
        "mask": cond.mask,
        "e_text": cond.e_text,
        "geometry": cond.geometry.vectors,
        "has_projected": int(cond.geometry.projected is not None),
    }
    if cond.geometry.projected is not None:
        payload["projected"] = cond.geometry.projected
    return payload


def payload_cond(payload: Payload) -> ConditionBundle:
    projected = payload["projected"] if payload["has_projected"] else None
    return ConditionBundle(
        BpsFeature(payload["geometry"], projected),
        payload["s"],
        payload["mask"],
        payload["e_text"],
    )


DECODERS = {
    "motion": payload_motion,
    "keyset": payload_keyset,
    "bps": payload_bps,
    "rollout": payload_rollout,
    "windows": payload_windows,
    "task": payload_task,
    "cond": payload_cond,
}


def validate_file(path) -> dict[str, int]:
    """Decode every chunk through its typed codec; raise on anything unknown.

    Returns a tag -> count summary of the validated chunks.
    """
    summary: dict[str, int] = {}
    for tag, payload in read_chunks(path):
        decoder = DECODERS.get(tag)
        if decoder is None:
            raise ContainerError(f"{path}: unknown chunk tag {tag!r}")
        try:
            decoder(payload)
        except (KeyError, ValueError, ValidationError) as exc:
            raise ContainerError(f"{path}: invalid {tag} chunk: {exc}") from exc
        summary[tag] = summary.get(tag, 0) + 1
    return summary


def save_motion_file(
    path,
    motion: MotionSequence,
    objects: ObjectTrajectory | None = None,
    contacts: ContactChannels | None = None,
    task: TaskSpec | None = None,
    text: bool = False,
) -> None:
    chunks: list[Chunk] = [("motion", motion_payload(motion, objects, contacts))]
    if task is not None:
        chunks.append(("task", task_payload(task)))
    write_chunks(path, chunks, text=text)


def load_motion_file(path):
    """(motion, objects, contacts, task) from the first matching chunks."""
    motion = objects = contacts = task = None
    for tag, payload in read_chunks(path):
        if tag == "motion" and motion is None:
            motion, objects, contacts = payload_motion(payload)
        elif tag == "task" and task is None:
            task = payload_task(payload)
    if motion is None:
        raise ContainerError(f"{path}: no motion chunk")
    return motion, objects, contacts, task
