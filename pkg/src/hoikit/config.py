"""Run configuration: one text file of ``key = value`` lines.

Command-line flags override config-file values, which override the
defaults below. Environment variables override paths only:
``HOIKIT_DATA_DIR`` and ``HOIKIT_OUT_DIR``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields

from .errors import ValidationError


@dataclass
class RunConfig:
    # reproducibility: every stochastic stage derives from this seed
    seed: int = 12345
    # paths
    data_dir: str = "data"
    out_dir: str = "out"
    mesh_file: str = ""  # empty: <data_dir>/box.obj
    # key actions
    epsilon: float = 0.05
    body_weight: float = 1.0
    critical_weight: float = 2.0
    object_weight: float = 1.0
    corner_extent: float = 0.1
    window_key_count: int = 6
    stride: int = 2
    # diffusion schedule (200 or 1000 are the supported presets)
    steps: int = 200
    beta_start: float = 1e-4
    beta_end: float = 2e-2
    # denoiser
    width: int = 64
    hidden: int = 128
    blocks: int = 2
    basis_count: int = 1024
    projected_count: int = 256
    bps_seed: int = 42
    bps_radius: float = 1.0
    time_scale: float = 50.0
    # training
    train_steps: int = 3000
    batch_size: int = 16
    lr: float = 1e-2
    # generation
    n_over: int = 2
    sample_count: int = 1
    # synthetic corpus
    synth_count: int = 220
    # rewards
    reward_alpha: float = 0.5
    w_jp: float = 1.0
    w_jr: float = 1.0
    w_jv: float = 1.0
    w_jw: float = 1.0
    w_jc: float = 1.0
    w_op: float = 1.0
    w_or: float = 1.0
    w_ov: float = 1.0
    w_ow: float = 1.0
    # termination
    object_deviation_limit: float = 0.5
    missing_contact_limit: int = 10
    humanoid_drift_limit: float = 0.5
    # rollout noise model
    noise_sigma_pos: float = 0.0
    noise_sigma_rot: float = 0.0
    # metrics
    contact_threshold: float = 0.05
    target_radius: float = 0.5
    min_contact_segment: int = 5
    # output form: 1 writes text containers instead of binary
    text_containers: int = 0

    def mesh_path(self) -> str:
        return self.mesh_file or os.path.join(self.data_dir, "box.obj")


def load_config(path: str | None) -> RunConfig:
    """Parse a config file; unknown keys are an error."""
    cfg = RunConfig()
    if path is None:
        return _apply_env(cfg)
    known = {f.name: f.type for f in fields(RunConfig)}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValidationError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in known:
                raise ValidationError(f"{path}:{lineno}: unknown config key {key!r}")
            setattr(cfg, key, _coerce(value, getattr(cfg, key)))
    return _apply_env(cfg)


def _coerce(text: str, default):
    if isinstance(default, int):
        try:
            return int(text)
        except ValueError as exc:
            raise ValidationError(f"expected integer, got {text!r}") from exc
    if isinstance(default, float):
        try:
            return float(text)
        except ValueError as exc:
            raise ValidationError(f"expected number, got {text!r}") from exc
    return text


def _apply_env(cfg: RunConfig) -> RunConfig:
    if os.environ.get("HOIKIT_DATA_DIR"):
        cfg.data_dir = os.environ["HOIKIT_DATA_DIR"]
    if os.environ.get("HOIKIT_OUT_DIR"):
        cfg.out_dir = os.environ["HOIKIT_OUT_DIR"]
    return cfg


def apply_overrides(cfg: RunConfig, overrides: dict) -> RunConfig:
    """Apply non-None CLI flag values on top of the config."""
    for key, value in overrides.items():
        if value is None:
            continue
        if not hasattr(cfg, key):
            raise ValidationError(f"unknown config field {key!r}")
        setattr(cfg, key, value)
    return cfg
