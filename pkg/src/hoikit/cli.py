"""Command-line pipeline: synth, extract, interp, train, sample, genlong,
rollout, metrics, report.

Every command validates its inputs before writing anything, derives all
randomness from the configured seed, and produces byte-identical artifacts
on reruns with the same config. Exit codes: 0 success, 1 validation
failure, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import container as cont
from .config import RunConfig, apply_overrides, load_config
from .diffusion import (
    DenoiserConfig,
    build_schedule,
    init_params,
    load_checkpoint,
    pack_window,
    sample,
    sample_to_keyset,
    save_checkpoint,
    toy_text_embed,
    train_denoiser,
    build_condition,
    window_condition_row,
    window_to_condition,
    autoregressive_generate,
    SampleResult,
)
from .errors import ContainerError, HoikitError, ValidationError
from .geometry import encode_bps, load_obj, sample_basis_points, save_obj
from .keyaction import (
    JointWeights,
    build_training_windows,
    default_weights,
    extract_key_actions,
    interpolate,
    reconstruction_error,
    tracked_points,
)
from .kinematics import relative_to_global
from .metrics import (
    GenerationMetrics,
    condition_matching,
    contact_metrics,
    emit_report,
    foot_metrics,
    gt_difference,
    hand_penetration,
    parse_report_csv,
    tracking_metrics,
)
from .motion import default_skeleton
from .synth import generate_sequence, synth_box_mesh
from .tracking import (
    NoiseModel,
    RewardWeights,
    SuccessCriteria,
    TerminationConfig,
    filter_successful_rollouts,
    oracle_rollout,
)


def _weights(cfg: RunConfig, skeleton) -> JointWeights:
    w = default_weights(skeleton, cfg.body_weight, cfg.critical_weight)
    w.object_weight = cfg.object_weight
    return w


def _reward_weights(cfg: RunConfig) -> RewardWeights:
    return RewardWeights(
        human_pos=cfg.w_jp, human_rot=cfg.w_jr, human_vel=cfg.w_jv,
        human_angvel=cfg.w_jw, human_contact=cfg.w_jc,
        object_pos=cfg.w_op, object_rot=cfg.w_or, object_vel=cfg.w_ov,
        object_angvel=cfg.w_ow, alpha=cfg.reward_alpha,
    )


def _termination(cfg: RunConfig) -> TerminationConfig:
    return TerminationConfig(
        object_deviation_limit=cfg.object_deviation_limit,
        missing_contact_limit=cfg.missing_contact_limit,
        humanoid_drift_limit=cfg.humanoid_drift_limit,
    )


def _denoiser_config(cfg: RunConfig, skeleton) -> DenoiserConfig:
    return DenoiserConfig(
        joint_count=skeleton.joint_count,
        window_slots=cfg.window_key_count + 1,
        width=cfg.width,
        hidden=cfg.hidden,
        blocks=cfg.blocks,
        basis_count=cfg.basis_count,
        projected_count=cfg.projected_count,
        time_scale=cfg.time_scale,
    )


def _list_inputs(path: str, suffix: str = ".hoi") -> list[str]:
    if os.path.isfile(path):
        return [path]
    if not os.path.isdir(path):
        raise ValidationError(f"input path {path} does not exist")
    names = sorted(n for n in os.listdir(path) if n.endswith(suffix))
    if not names:
        raise ValidationError(f"no {suffix} files under {path}")
    return [os.path.join(path, n) for n in names]


def _resolve_mesh(cfg: RunConfig, *search_dirs: str) -> str:
    """The object mesh: an explicit config path or box.obj next to the data."""
    candidates = [cfg.mesh_file] if cfg.mesh_file else []
    for d in search_dirs:
        if d:
            base = d if os.path.isdir(d) else os.path.dirname(d)
            candidates.append(os.path.join(base, "box.obj"))
    candidates.append(cfg.mesh_path())
    for path in candidates:
        if path and os.path.isfile(path):
            return path
    raise ValidationError(f"no object mesh found (looked at {candidates})")


def _geometry_feature(cfg: RunConfig, mesh_path: str):
    if not os.path.isfile(mesh_path):
        raise ValidationError(f"mesh file {mesh_path} not found")
    mesh = load_obj(mesh_path)
    basis = sample_basis_points(cfg.bps_seed, cfg.basis_count, cfg.bps_radius)
    return mesh, basis, encode_bps(mesh, basis)


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(cfg: RunConfig, args) -> int:
    skeleton = default_skeleton()
    out = args.out or cfg.data_dir
    os.makedirs(out, exist_ok=True)
    count = args.count or cfg.synth_count
    save_obj(os.path.join(out, "box.obj"), synth_box_mesh(skeleton))
    for i in range(count):
        motion, objects, contacts, task = generate_sequence(cfg.seed, i, skeleton)
        path = os.path.join(out, f"seq_{i:05d}.hoi")
        cont.save_motion_file(
            path, motion, objects, contacts, task, text=bool(cfg.text_containers)
        )
        cont.validate_file(path)
    print(f"synth: wrote {count} sequences to {out}")
    return 0


def cmd_extract(cfg: RunConfig, args) -> int:
    paths = _list_inputs(args.input or cfg.data_dir)
    out = args.out or cfg.out_dir
    os.makedirs(out, exist_ok=True)
    if cfg.epsilon <= 0:
        raise ValidationError("epsilon must be positive")
    summary = ["name,key_count,max_error"]
    for path in paths:
        motion, objects, contacts, task = cont.load_motion_file(path)
        weights = _weights(cfg, motion.skeleton)
        keys = extract_key_actions(
            motion, objects, contacts, weights, cfg.epsilon, cfg.corner_extent
        )
        rec_m, rec_o, _ = interpolate(keys)
        ref, wv = tracked_points(motion, objects, weights, cfg.corner_extent)
        rec, _ = tracked_points(rec_m, rec_o, weights, cfg.corner_extent)
        report = reconstruction_error(ref, rec, wv)
        if report.max_error > cfg.epsilon:
            print(f"extract: post-condition violated for {path}", file=sys.stderr)
            return 2
        name = os.path.splitext(os.path.basename(path))[0]
        chunks = [("keyset", cont.keyset_payload(keys))]
        if task is not None:
            chunks.append(("task", cont.task_payload(task)))
        cont.write_chunks(
            os.path.join(out, f"{name}.keys.hoi"), chunks, text=bool(cfg.text_containers)
        )
        summary.append(f"{name},{len(keys)},{report.max_error!r}")
    with open(os.path.join(out, "extract_summary.csv"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(summary) + "\n")
    print(f"extract: processed {len(paths)} sequences -> {out}")
    return 0


def cmd_interp(cfg: RunConfig, args) -> int:
    paths = _list_inputs(args.input or cfg.out_dir, suffix=".keys.hoi")
    out = args.out or cfg.out_dir
    os.makedirs(out, exist_ok=True)
    for path in paths:
        task = None
        keys = None
        for tag, payload in cont.read_chunks(path):
            if tag == "keyset":
                keys = cont.payload_keyset(payload)
            elif tag == "task":
                task = cont.payload_task(payload)
        if keys is None:
            raise ValidationError(f"{path}: no keyset chunk")
        motion, objects, contacts = interpolate(keys)
        name = os.path.basename(path).replace(".keys.hoi", "")
        cont.save_motion_file(
            os.path.join(out, f"{name}.dense.hoi"), motion, objects, contacts, task,
            text=bool(cfg.text_containers),
        )
    print(f"interp: wrote {len(paths)} dense sequences -> {out}")
    return 0


def _load_windows_and_conditions(cfg: RunConfig, data_dir: str):
    """Training windows + conditions from .win.hoi files or raw sequences."""
    skeleton = default_skeleton()
    layout = _denoiser_config(cfg, skeleton).layout()
    mesh, basis, feature = _geometry_feature(cfg, cfg.mesh_path())
    win_files = sorted(
        os.path.join(data_dir, n) for n in os.listdir(data_dir) if n.endswith(".win.hoi")
    ) if os.path.isdir(data_dir) else []
    windows = []
    if win_files:
        for path in win_files:
            for tag, payload in cont.read_chunks(path):
                if tag == "windows":
                    windows.extend(cont.payload_windows(payload))
    else:
        for path in _list_inputs(data_dir):
            motion, objects, contacts, task = cont.load_motion_file(path)
            if objects is None or contacts is None:
                raise ValidationError(f"{path}: training needs object and contact data")
            weights = _weights(cfg, motion.skeleton)
            keys = extract_key_actions(
                motion, objects, contacts, weights, cfg.epsilon, cfg.corner_extent
            )
            windows.extend(
                build_training_windows(
                    motion, keys, objects, contacts,
                    window_key_count=cfg.window_key_count, stride=cfg.stride,
                    prompt=task.prompt if task else "",
                )
            )
    if not windows:
        raise ValidationError(f"no training windows found under {data_dir}")
    tensors = [pack_window(w, layout) for w in windows]
    conditions = [window_to_condition(w, feature, layout) for w in windows]
    return tensors, conditions


def cmd_train(cfg: RunConfig, args) -> int:
    data_dir = args.data or cfg.data_dir
    out = args.out or cfg.out_dir
    os.makedirs(out, exist_ok=True)
    tensors, conditions = _load_windows_and_conditions(cfg, data_dir)
    skeleton = default_skeleton()
    dcfg = _denoiser_config(cfg, skeleton)
    if args.resume:
        params = load_checkpoint(args.resume)
        if params.config != dcfg:
            raise ValidationError("checkpoint architecture disagrees with config")
    else:
        params = init_params(dcfg, cfg.seed)
    schedule = build_schedule(cfg.steps, cfg.beta_start, cfg.beta_end)
    log_rows = ["step,loss"]
    losses = train_denoiser(
        params, tensors, conditions, schedule,
        steps=args.train_steps or cfg.train_steps,
        batch_size=cfg.batch_size, lr=cfg.lr, seed=cfg.seed,
        log_cb=lambda s, l: log_rows.append(f"{s},{l!r}"),
    )
    save_checkpoint(os.path.join(out, "denoiser.hoip"), params)
    with open(os.path.join(out, "loss.csv"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(log_rows) + "\n")
    print(f"train: {len(tensors)} windows, final loss {losses[-1]:.6f} -> {out}")
    return 0


def _task_to_condition(cfg, task, motion, objects, feature, layout):
    """Single-window sampling condition from a stored task."""
    initial = np.concatenate(
        [objects.positions[0], objects.rotations[0].reshape(9), motion.root[0], motion.rot6d[0].reshape(-1)]
    )
    slots = layout.window_slots
    n_wp = len(task.waypoints)
    waypoints = []
    for i, (_, x, y) in enumerate(task.waypoint_tuples()):
        slot = max(1, min(slots - 2, round((i + 1) / (n_wp + 1) * (slots - 1))))
        waypoints.append((slot, x, y))
    return build_condition(
        feature, initial, task.target, toy_text_embed(task.prompt), layout,
        waypoints_xy=tuple(waypoints),
    )


def cmd_sample(cfg: RunConfig, args) -> int:
    params = load_checkpoint(args.checkpoint)
    skeleton = default_skeleton()
    layout = params.config.layout()
    mesh, basis, feature = _geometry_feature(cfg, cfg.mesh_path())
    schedule = build_schedule(cfg.steps, cfg.beta_start, cfg.beta_end)
    out = args.out or cfg.out_dir
    os.makedirs(out, exist_ok=True)
    paths = _list_inputs(args.tasks)
    for path in paths:
        motion, objects, contacts, task = cont.load_motion_file(path)
        if task is None or objects is None:
            raise ValidationError(f"{path}: sampling needs a task chunk and object data")
        cond = _task_to_condition(cfg, task, motion, objects, feature, layout)
        result = sample(params, cond, schedule, seed=cfg.seed + task.seq_id)
        keys = sample_to_keyset(result, skeleton, motion.frame_rate)
        dense_m, dense_o, dense_c = interpolate(keys)
        name = os.path.splitext(os.path.basename(path))[0]
        cont.write_chunks(
            os.path.join(out, f"{name}.genkeys.hoi"),
            [("keyset", cont.keyset_payload(keys)), ("task", cont.task_payload(task)),
             ("cond", cont.cond_payload(cond))],
            text=bool(cfg.text_containers),
        )
        gen_path = os.path.join(out, f"{name}.gen.hoi")
        cont.save_motion_file(
            gen_path, dense_m, dense_o, dense_c, task, text=bool(cfg.text_containers)
        )
        cont.validate_file(gen_path)
    print(f"sample: generated {len(paths)} sequences -> {out}")
    return 0


def cmd_genlong(cfg: RunConfig, args) -> int:
    params = load_checkpoint(args.checkpoint)
    skeleton = default_skeleton()
    layout = params.config.layout()
    mesh, basis, feature = _geometry_feature(cfg, cfg.mesh_path())
    schedule = build_schedule(cfg.steps, cfg.beta_start, cfg.beta_end)
    out = args.out or cfg.out_dir
    os.makedirs(out, exist_ok=True)
    path = _list_inputs(args.tasks)[0]
    motion, objects, contacts, task = cont.load_motion_file(path)
    if task is None or objects is None:
        raise ValidationError(f"{path}: long generation needs a task chunk")
    horizon = args.windows
    if horizon < 1:
        raise ValidationError("need at least one window")
    start = objects.positions[0]
    initial = np.concatenate(
        [objects.positions[0], objects.rotations[0].reshape(9),
         motion.root[0], motion.rot6d[0].reshape(-1)]
    )
    conditions = []
    for w in range(horizon):
        frac = (w + 1) / horizon
        target = start + frac * (task.target - start)
        conditions.append(
            build_condition(feature, initial, target, toy_text_embed(task.prompt), layout)
        )
    poses, obj_rows, contacts_g, frames = autoregressive_generate(
        params, conditions, cfg.n_over, schedule, seed=cfg.seed
    )
    result = SampleResult(poses, obj_rows, contacts_g, frames, None)
    keys = sample_to_keyset(result, skeleton, motion.frame_rate)
    dense_m, dense_o, dense_c = interpolate(keys)
    cont.write_chunks(
        os.path.join(out, "long.genkeys.hoi"),
        [("keyset", cont.keyset_payload(keys)), ("task", cont.task_payload(task))],
        text=bool(cfg.text_containers),
    )
    cont.save_motion_file(
        os.path.join(out, "long.gen.hoi"), dense_m, dense_o, dense_c, task,
        text=bool(cfg.text_containers),
    )
    print(f"genlong: {horizon} windows, {len(keys)} keys -> {out}")
    return 0


def cmd_rollout(cfg: RunConfig, args) -> int:
    paths = _list_inputs(args.data or cfg.data_dir)
    out = args.out or cfg.out_dir
    os.makedirs(out, exist_ok=True)
    mesh = load_obj(cfg.mesh_path())
    corners = mesh.bounding_corners()
    weights = _reward_weights(cfg)
    termination = _termination(cfg)
    noise = NoiseModel(sigma_pos=cfg.noise_sigma_pos, sigma_rot=cfg.noise_sigma_rot)
    criteria = SuccessCriteria(cfg.target_radius, cfg.min_contact_segment)
    logs = []
    records = []
    for path in paths:
        motion, objects, contacts, task = cont.load_motion_file(path)
        if objects is None or contacts is None:
            raise ValidationError(f"{path}: rollout needs object and contact data")
        target = task.target if task is not None else objects.positions[-1]
        log = oracle_rollout(
            motion, objects, contacts, corners, noise,
            seed=cfg.seed, weights=weights, termination=termination,
            target_position=target,
        )
        logs.append(log)
        name = os.path.splitext(os.path.basename(path))[0]
        cont.write_chunks(
            os.path.join(out, f"{name}.rollout.hoi"),
            [("rollout", cont.rollout_payload(log))],
            text=bool(cfg.text_containers),
        )
        records.append((name, tracking_metrics(log, criteria)))
    with open(os.path.join(out, "tracking.csv"), "w", encoding="utf-8") as fh:
        fh.write(emit_report(records, fmt="csv"))
    skeleton = default_skeleton()
    windows = filter_successful_rollouts(
        logs, criteria, weights=_weights(cfg, skeleton), epsilon=cfg.epsilon,
        window_key_count=cfg.window_key_count, stride=cfg.stride,
    )
    if windows:
        cont.write_chunks(
            os.path.join(out, "finetune.win.hoi"),
            [("windows", cont.windows_payload(windows))],
            text=bool(cfg.text_containers),
        )
    print(
        f"rollout: {len(paths)} sequences, {len(windows)} fine-tune windows -> {out}"
    )
    return 0


def _motion_inputs(path: str) -> list[str]:
    """Containers with a dense motion chunk (prefers *.gen.hoi, skips keysets)."""
    paths = _list_inputs(path)
    gen = [p for p in paths if p.endswith(".gen.hoi")]
    if gen:
        return gen
    return [p for p in paths if not p.endswith((".keys.hoi", ".genkeys.hoi", ".win.hoi", ".rollout.hoi"))]


def cmd_metrics(cfg: RunConfig, args) -> int:
    gen_paths = _motion_inputs(args.gen)
    gt_paths = _motion_inputs(args.gt)
    out = args.out or cfg.out_dir
    os.makedirs(out, exist_ok=True)
    gt_by_name = {os.path.basename(p).split(".")[0]: p for p in gt_paths}
    mesh = load_obj(cfg.mesh_path())
    records = []
    for gen_path in gen_paths:
        name = os.path.basename(gen_path).split(".")[0]
        if name not in gt_by_name:
            raise ValidationError(f"no ground-truth sequence for {name}")
        gen_m, gen_o, gen_c, task = cont.load_motion_file(gen_path)
        gt_m, gt_o, gt_c, gt_task = cont.load_motion_file(gt_by_name[name])
        task = task or gt_task
        gen_g = relative_to_global(gen_m)
        gt_g = relative_to_global(gt_m)
        row = GenerationMetrics()
        if task is not None and gen_o is not None:
            row.t_start, row.t_end, row.t_xy = condition_matching(
                gen_o, task.start_obj, task.target,
                _scaled_waypoints(task, len(gen_o)),
            )
        row.h_feet, row.foot_slide = foot_metrics(gen_g)
        if gen_c is not None and gt_c is not None and len(gen_c) == len(gt_c):
            row.c_prec, row.c_rec, row.c_f1, row.c_pct = contact_metrics(gen_c, gt_c)
        if gen_o is not None:
            row.p_hand = hand_penetration(gen_g, gen_o, mesh)
        if len(gen_m) == len(gt_m) and gen_o is not None and gt_o is not None:
            row.mpjpe, row.t_root, row.t_obj, row.o_obj = gt_difference(
                gen_g, gen_o, gt_g, gt_o
            )
        records.append((name, row))
    csv_text = emit_report(records, fmt="csv")
    with open(os.path.join(out, "generation.csv"), "w", encoding="utf-8") as fh:
        fh.write(csv_text)
    table = emit_report(records, fmt="table")
    with open(os.path.join(out, "generation.txt"), "w", encoding="utf-8") as fh:
        fh.write(table)
    print(table, end="")
    return 0


def _scaled_waypoints(task, gen_len: int):
    """Map waypoint frames from the reference timeline onto the generated one."""
    rows = []
    for frame, x, y in task.waypoint_tuples():
        scaled = int(round(frame / max(task.t_total - 1, 1) * (gen_len - 1)))
        rows.append((min(max(scaled, 0), gen_len - 1), x, y))
    return tuple(rows)


def cmd_report(cfg: RunConfig, args) -> int:
    with open(args.input, "r", encoding="utf-8") as fh:
        records = parse_report_csv(fh.read())
    print(emit_report(records, fmt=args.format), end="")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hoikit",
        description="Humanoid-object interaction motion toolkit",
    )
    parser.add_argument("--config", help="run config file (key = value lines)")
    parser.add_argument("--seed", type=int, help="override the root seed")
    parser.add_argument("--out-dir", dest="out_dir", help="override the output directory")
    parser.add_argument("--data-dir", dest="data_dir", help="override the data directory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate the synthetic carry-box corpus")
    p.add_argument("--out")
    p.add_argument("--count", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("extract", help="extract key actions from dense motions")
    p.add_argument("--input")
    p.add_argument("--out")
    p.add_argument("--epsilon", type=float)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("interp", help="interpolate key sets back to dense motion")
    p.add_argument("--input")
    p.add_argument("--out")
    p.set_defaults(func=cmd_interp)

    p = sub.add_parser("train", help="train the denoiser on extracted windows")
    p.add_argument("--data")
    p.add_argument("--out")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--train-steps", dest="train_steps", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", help="sample key-action windows for stored tasks")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--tasks", required=True, help="file or dir of task containers")
    p.add_argument("--out")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("genlong", help="autoregressive long-horizon generation")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--tasks", required=True)
    p.add_argument("--windows", type=int, default=3)
    p.add_argument("--out")
    p.set_defaults(func=cmd_genlong)

    p = sub.add_parser("rollout", help="oracle rollouts, tracking metrics, fine-tune filter")
    p.add_argument("--data")
    p.add_argument("--out")
    p.set_defaults(func=cmd_rollout)

    p = sub.add_parser("metrics", help="generation metrics of gen vs ground truth")
    p.add_argument("--gen", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("report", help="re-render a metrics CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--format", default="table", choices=["table", "csv"])
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        apply_overrides(
            cfg,
            {
                "seed": args.seed,
                "out_dir": args.out_dir,
                "data_dir": args.data_dir,
                "epsilon": getattr(args, "epsilon", None),
            },
        )
        return args.func(cfg, args)
    except (ValidationError, ContainerError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except HoikitError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
