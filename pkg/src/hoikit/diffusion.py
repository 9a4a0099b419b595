"""DDPM machinery and a desk-scale conditional sequence denoiser.

The forward process corrupts a clean window tensor tau_0 over N steps with
q(tau_n | tau_{n-1}) = Normal(sqrt(1 - beta_n) tau_{n-1}, beta_n I), whose
closed-form marginal is tau_n = sqrt(abar_n) tau_0 + sqrt(1 - abar_n) eps.
The denoiser predicts tau_0 directly and is trained with a masked L1
objective; the reverse step uses the standard posterior mean with fixed
variance (1 - abar_{n-1}) / (1 - abar_n) * beta_n and adds no noise at the
final step.

The denoiser itself is a small residual mixer written in plain numpy with
hand-derived gradients: per window slot it concatenates the noisy slot,
the masked condition motion, the projected object geometry code, and a
fused noise-level/text embedding, then alternates slot-mixing and
channel-mixing residual blocks. It is sized to train on a CPU in minutes,
not to reproduce full-scale results.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import TrainingError, ValidationError
from .geometry import BpsFeature, project_geometry
from .keyaction import KeyActionSet, TrainingWindow
from .motion import MotionSequence, SkeletonSpec
from .seeding import named_rng

TEXT_DIM = 512
DEFAULT_TIME_SCALE = 50.0  # frames; offsets are stored divided by this


# ---------------------------------------------------------------------------
# noise schedule


@dataclass
class NoiseSchedule:
    """Linear beta schedule with derived quantities; step index n is 1-based."""

    betas: np.ndarray  # [N]
    alphas: np.ndarray  # [N]
    alpha_bars: np.ndarray  # [N]
    posterior_var: np.ndarray  # [N]

    @property
    def steps(self) -> int:
        return len(self.betas)

    def alpha_bar(self, n: int) -> float:
        """abar_n with the abar_0 = 1 convention."""
        if n == 0:
            return 1.0
        return float(self.alpha_bars[n - 1])


def build_schedule(n_steps: int, beta_start: float = 1e-4, beta_end: float = 2e-2) -> NoiseSchedule:
    """Linear schedule beta_start..beta_end over n_steps."""
    if n_steps < 1:
        raise ValidationError("schedule needs at least one step")
    if not (0 < beta_start <= beta_end < 1):
        raise ValidationError("need 0 < beta_start <= beta_end < 1")
    betas = np.linspace(beta_start, beta_end, n_steps)
    alphas = 1.0 - betas
    alpha_bars = np.cumprod(alphas)
    prev = np.concatenate([[1.0], alpha_bars[:-1]])
    posterior = (1.0 - prev) / (1.0 - alpha_bars) * betas
    return NoiseSchedule(betas, alphas, alpha_bars, posterior)


def forward_noise(tau0: np.ndarray, n: int, noise: np.ndarray, schedule: NoiseSchedule) -> np.ndarray:
    """Closed-form marginal of the forward process at step n (1-based)."""
    if not 1 <= n <= schedule.steps:
        raise ValidationError(f"step {n} outside 1..{schedule.steps}")
    ab = schedule.alpha_bar(n)
    return np.sqrt(ab) * tau0 + np.sqrt(1.0 - ab) * noise


# ---------------------------------------------------------------------------
# window tensors and conditions


@dataclass
class TensorLayout:
    """Slot layout of the window tensor and the condition motion rows."""

    joint_count: int
    window_slots: int  # 1 initial + window_key_count key slots
    time_scale: float = DEFAULT_TIME_SCALE

    @property
    def pose_dim(self) -> int:
        return 3 + 6 * self.joint_count

    @property
    def slot_dim(self) -> int:
        # pose + object pose (12) + contacts (4) + time-offset channel
        return self.pose_dim + 12 + 4 + 1

    @property
    def cond_row_dim(self) -> int:
        # object pose first, then the human pose
        return 12 + self.pose_dim


@dataclass
class SampleTensor:
    """One window as a dense real tensor plus its slot validity mask."""

    values: np.ndarray  # [slots, slot_dim]
    valid: np.ndarray  # [slots] 0/1
    layout: TensorLayout

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.valid = np.asarray(self.valid, dtype=np.float64)
        if self.values.shape != (self.layout.window_slots, self.layout.slot_dim):
            raise ValidationError("sample tensor shape disagrees with layout")
        if np.any(self.values[self.valid < 0.5] != 0.0):
            raise ValidationError("masked slots must carry zeros")


def pack_window(win: TrainingWindow, layout: TensorLayout) -> SampleTensor:
    """TrainingWindow -> window tensor; padded slots are zeroed out."""
    if win.window_key_count + 1 != layout.window_slots:
        raise ValidationError("window size disagrees with layout")
    rows = [
        np.concatenate(
            [
                win.initial_root,
                win.initial_rot6d.reshape(-1),
                win.initial_obj,
                win.initial_contacts,
                [0.0],
            ]
        )
    ]
    for k in range(win.window_key_count):
        rows.append(
            np.concatenate(
                [
                    win.key_root[k],
                    win.key_rot6d[k].reshape(-1),
                    win.key_obj[k],
                    win.key_contacts[k],
                    [win.key_offsets[k] / layout.time_scale],
                ]
            )
        )
    values = np.stack(rows)
    valid = np.concatenate([[1.0], win.valid])
    values[valid < 0.5] = 0.0
    return SampleTensor(values, valid, layout)


def unpack_tensor(tensor: SampleTensor) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Split a window tensor into (X poses, O object rows, H contacts, frame offsets).

    Contacts are clamped to [0,1]; offsets are denormalized to frames.
    """
    lay = tensor.layout
    d = lay.pose_dim
    x = tensor.values[:, :d]
    o = tensor.values[:, d : d + 12]
    h = np.clip(tensor.values[:, d + 12 : d + 16], 0.0, 1.0)
    offsets = tensor.values[:, d + 16] * lay.time_scale
    return x, o, h, offsets


@dataclass
class ConditionBundle:
    """Conditioning signals: object geometry, masked motion rows, text embedding.

    The geometry is carried as the raw basis-point code so the projection
    to the low-dimensional code can be trained jointly with the denoiser;
    ``projected`` caches the result of the trained projection when known.
    """

    geometry: BpsFeature
    s: np.ndarray  # [slots, 12 + pose_dim]
    mask: np.ndarray  # [slots, 12 + pose_dim] 0/1
    e_text: np.ndarray  # [TEXT_DIM]

    def __post_init__(self):
        self.s = np.asarray(self.s, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=np.float64)
        self.e_text = np.asarray(self.e_text, dtype=np.float64)
        if self.s.shape != self.mask.shape:
            raise ValidationError("condition motion and mask shapes differ")

    def masked_s(self) -> np.ndarray:
        """Condition rows with masked entries forced to zero."""
        return self.s * self.mask


def toy_text_embed(prompt: str, dim: int = TEXT_DIM) -> np.ndarray:
    """Deterministic stand-in text embedding: hashed-bucket bag of words.

    Lowercased alphanumeric tokens are hashed (sha256) to buckets with a
    sign bit; the sum is L2-normalized. The empty prompt maps to the zero
    vector.
    """
    import hashlib
    import re

    vec = np.zeros(dim)
    for token in re.findall(r"[a-z0-9]+", prompt.lower()):
        digest = hashlib.sha256(token.encode("utf-8")).digest()
        bucket = int.from_bytes(digest[:8], "little") % dim
        sign = 1.0 if digest[8] % 2 == 0 else -1.0
        vec[bucket] += sign
    norm = np.linalg.norm(vec)
    return vec / norm if norm > 0 else vec


def build_condition(
    geometry: BpsFeature,
    initial_row: np.ndarray,
    target_xyz: np.ndarray,
    e_text: np.ndarray,
    layout: TensorLayout,
    waypoints_xy: tuple[tuple[int, float, float], ...] = (),
    target_slot: int | None = None,
) -> ConditionBundle:
    """Assemble the masked-motion condition for one window.

    Slot 0 carries the full initial object+human row; each waypoint slot
    carries the object (x, y); the target slot carries the object
    (x, y, z). Everything else stays zero with mask 0.
    """
    slots = layout.window_slots
    if target_slot is None:
        target_slot = slots - 1
    if not 0 < target_slot < slots:
        raise ValidationError("target slot outside the window")
    initial_row = np.asarray(initial_row, dtype=np.float64)
    if initial_row.shape != (layout.cond_row_dim,):
        raise ValidationError("initial condition row has the wrong width")
    s = np.zeros((slots, layout.cond_row_dim))
    mask = np.zeros_like(s)
    s[0] = initial_row
    mask[0] = 1.0
    for slot, x, y in waypoints_xy:
        if not 0 < slot < slots:
            raise ValidationError(f"waypoint slot {slot} outside the window")
        s[slot, 0] = x
        s[slot, 1] = y
        mask[slot, 0:2] = 1.0
    target_xyz = np.asarray(target_xyz, dtype=np.float64)
    s[target_slot, 0:3] = target_xyz
    mask[target_slot, 0:3] = 1.0
    return ConditionBundle(geometry, s, mask, np.asarray(e_text, dtype=np.float64))


def window_condition_row(win: TrainingWindow) -> np.ndarray:
    """Initial condition row [object 12 | root 3 | rot6d 6J] of a window."""
    return np.concatenate([win.initial_obj, win.initial_root, win.initial_rot6d.reshape(-1)])


def window_to_condition(
    win: TrainingWindow, geometry: BpsFeature, layout: TensorLayout
) -> ConditionBundle:
    """Training-time condition for a window.

    The target is the last valid slot's object position. Waypoint slots
    come from the window when set; otherwise the middle valid key slot
    serves as a single (x, y) waypoint, matching how sampling conditions
    are laid out.
    """
    last_valid = int(np.nonzero(np.concatenate([[1.0], win.valid]) > 0.5)[0][-1])
    if win.waypoint_slots:
        wp_slots = [s for s in win.waypoint_slots if 0 < s < last_valid]
    else:
        mid = (1 + last_valid) // 2
        wp_slots = [mid] if 0 < mid < last_valid else []
    waypoints = tuple(
        (s, float(win.key_obj[s - 1][0]), float(win.key_obj[s - 1][1])) for s in wp_slots
    )
    target = win.key_obj[last_valid - 1][:3] if last_valid >= 1 else win.initial_obj[:3]
    return build_condition(
        geometry,
        window_condition_row(win),
        target,
        toy_text_embed(win.prompt),
        layout,
        waypoints_xy=waypoints,
        target_slot=last_valid if last_valid >= 1 else layout.window_slots - 1,
    )


# ---------------------------------------------------------------------------
# denoiser parameters


@dataclass
class DenoiserConfig:
    """Architecture hyperparameters; defaults train on a CPU in minutes."""

    joint_count: int
    window_slots: int = 7
    width: int = 64
    hidden: int = 128
    blocks: int = 2
    text_dim: int = TEXT_DIM
    basis_count: int = 1024
    projected_count: int = 256
    time_scale: float = DEFAULT_TIME_SCALE

    def layout(self) -> TensorLayout:
        return TensorLayout(self.joint_count, self.window_slots, self.time_scale)

    @property
    def slot_dim(self) -> int:
        return self.layout().slot_dim

    @property
    def cond_row_dim(self) -> int:
        return self.layout().cond_row_dim

    @property
    def geom_dim(self) -> int:
        return 3 * self.projected_count

    @property
    def in_dim(self) -> int:
        # [noisy slot | masked S | mask | projected geometry | fused cond]
        return self.slot_dim + 2 * self.cond_row_dim + self.geom_dim + self.width


def _param_shapes(cfg: DenoiserConfig) -> list[tuple[str, tuple[int, ...]]]:
    shapes = [
        ("geom_proj", (cfg.projected_count, cfg.basis_count)),
        ("noise_w1", (cfg.width,)),
        ("noise_b1", (cfg.width,)),
        ("noise_w2", (cfg.width, cfg.width)),
        ("noise_b2", (cfg.width,)),
        ("text_w", (cfg.text_dim, cfg.width)),
        ("text_b", (cfg.width,)),
        ("in_w", (cfg.in_dim, cfg.width)),
        ("in_b", (cfg.width,)),
    ]
    for k in range(cfg.blocks):
        shapes += [
            (f"mix_m{k}", (cfg.window_slots, cfg.window_slots)),
            (f"mix_b{k}", (cfg.width,)),
            (f"ch_w1_{k}", (cfg.width, cfg.hidden)),
            (f"ch_b1_{k}", (cfg.hidden,)),
            (f"ch_w2_{k}", (cfg.hidden, cfg.width)),
            (f"ch_b2_{k}", (cfg.width,)),
        ]
    shapes += [
        ("out_w", (cfg.width, cfg.slot_dim)),
        ("out_b", (cfg.slot_dim,)),
        # blend logits: on condition-given entries the output is a convex mix
        # of the given value and the network prediction, so the shared output
        # head never competes with in-filled values; initialized strongly
        # toward copying
        ("cond_skip", (cfg.cond_row_dim,)),
    ]
    return shapes


@dataclass
class DenoiserParams:
    """All learnable state as one flat float64 vector with named views."""

    config: DenoiserConfig
    vector: np.ndarray
    seed: int = 0
    _slices: dict[str, tuple[slice, tuple[int, ...]]] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.vector = np.asarray(self.vector, dtype=np.float64)
        offset = 0
        slices = {}
        for name, shape in _param_shapes(self.config):
            size = int(np.prod(shape))
            slices[name] = (slice(offset, offset + size), shape)
            offset += size
        if self.vector.shape != (offset,):
            raise ValidationError(f"parameter vector must have length {offset}")
        self._slices = slices

    def view(self, name: str) -> np.ndarray:
        sl, shape = self._slices[name]
        return self.vector[sl].reshape(shape)

    def group_names(self) -> list[str]:
        return list(self._slices)

    def group_slice(self, name: str) -> slice:
        return self._slices[name][0]


def init_params(cfg: DenoiserConfig, seed: int) -> DenoiserParams:
    """Seeded scaled-Gaussian initialization."""
    rng = named_rng(seed, "denoiser-init")
    chunks = []
    for name, shape in _param_shapes(cfg):
        fan_in = shape[0] if len(shape) == 2 else max(int(np.prod(shape)), 1)
        scale = 1.0 / np.sqrt(fan_in)
        if name == "cond_skip":
            chunks.append(np.full(int(np.prod(shape)), 4.0))  # sigmoid(4) ~ 0.98
        elif name.endswith(("_b", "b1", "b2")) or "_b" in name:
            chunks.append(np.zeros(int(np.prod(shape))))
        else:
            chunks.append(rng.normal(0.0, scale, size=int(np.prod(shape))))
    return DenoiserParams(cfg, np.concatenate(chunks), seed=seed)


def save_checkpoint(path, params: DenoiserParams) -> None:
    """Versioned binary: magic, config header, flat float64 parameter block."""
    header = json.dumps(
        {
            "config": params.config.__dict__,
            "seed": params.seed,
            "size": int(params.vector.size),
        },
        sort_keys=True,
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(b"HOIP")
        fh.write(struct.pack("<I", 1))
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(params.vector.astype("<f8").tobytes())


def load_checkpoint(path) -> DenoiserParams:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != b"HOIP":
        raise ValidationError(f"not a checkpoint file: {path}")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != 1:
        raise ValidationError(f"unknown checkpoint version {version}")
    (hlen,) = struct.unpack_from("<I", data, 8)
    header = json.loads(data[12 : 12 + hlen].decode("utf-8"))
    cfg = DenoiserConfig(**header["config"])
    vec = np.frombuffer(data[12 + hlen :], dtype="<f8").copy()
    if vec.size != header["size"]:
        raise ValidationError("checkpoint parameter block truncated")
    return DenoiserParams(cfg, vec, seed=header["seed"])


# ---------------------------------------------------------------------------
# denoiser forward/backward


def _denoise_forward(params: DenoiserParams, tau_n: np.ndarray, n_norm: float, cond: ConditionBundle):
    """Predict tau_0; returns (prediction, cache for backward)."""
    cfg = params.config
    p = params.view
    g = np.asarray(cond.geometry.vectors, dtype=np.float64)
    if g.shape != (cfg.basis_count, 3):
        raise ValidationError("geometry code has the wrong basis count")
    ghat = project_geometry(g, p("geom_proj"))  # [proj, 3]
    gflat = ghat.reshape(-1)

    pre_n = n_norm * p("noise_w1") + p("noise_b1")
    h_n = np.tanh(pre_n)
    emb_n = h_n @ p("noise_w2") + p("noise_b2")
    emb_t = cond.e_text @ p("text_w") + p("text_b")
    fused = emb_n + emb_t  # [width]

    s_masked = cond.masked_s()
    slots = cfg.window_slots
    x = np.concatenate(
        [
            tau_n,
            s_masked,
            cond.mask,
            np.tile(gflat, (slots, 1)),
            np.tile(fused, (slots, 1)),
        ],
        axis=1,
    )
    h = x @ p("in_w") + p("in_b")
    cache_blocks = []
    for k in range(cfg.blocks):
        pre_mix = p(f"mix_m{k}") @ h + p(f"mix_b{k}")
        z_mix = np.tanh(pre_mix)
        h_mid = h + z_mix
        pre_ch = h_mid @ p(f"ch_w1_{k}") + p(f"ch_b1_{k}")
        z_ch = np.tanh(pre_ch)
        h_out = h_mid + z_ch @ p(f"ch_w2_{k}")
        h_out = h_out + p(f"ch_b2_{k}")
        cache_blocks.append((h, z_mix, h_mid, z_ch))
        h = h_out
    raw = h @ p("out_w") + p("out_b")
    # conditioned entries: convex blend of the given value and the prediction
    d = cfg.layout().pose_dim
    blend = 1.0 / (1.0 + np.exp(-p("cond_skip")))
    w_obj = cond.mask[:, :12] * blend[:12]
    w_pose = cond.mask[:, 12:] * blend[12:]
    out = raw.copy()
    out[:, d : d + 12] = (1.0 - w_obj) * raw[:, d : d + 12] + w_obj * s_masked[:, :12]
    out[:, :d] = (1.0 - w_pose) * raw[:, :d] + w_pose * s_masked[:, 12:]
    cache = {
        "x": x,
        "h_final": h,
        "blocks": cache_blocks,
        "h_n": h_n,
        "n_norm": n_norm,
        "g": g,
        "e_text": cond.e_text,
        "s_masked": s_masked,
        "mask": cond.mask,
        "raw": raw,
        "blend": blend,
        "slots": slots,
    }
    return out, cache


def _denoise_backward(params: DenoiserParams, cache: dict, d_out: np.ndarray) -> np.ndarray:
    """Gradient of a scalar loss wrt the flat parameter vector."""
    cfg = params.config
    p = params.view
    grad = np.zeros_like(params.vector)

    def acc(name: str, value: np.ndarray):
        sl = params.group_slice(name)
        grad[sl] += value.reshape(-1)

    h = cache["h_final"]
    d = cfg.layout().pose_dim
    sm = cache["s_masked"]
    mask = cache["mask"]
    raw = cache["raw"]
    blend = cache["blend"]
    # blend layer: out = (1 - m b) raw + m b s  per conditioned column
    d_blend_obj = (d_out[:, d : d + 12] * mask[:, :12] * (sm[:, :12] - raw[:, d : d + 12])).sum(axis=0)
    d_blend_pose = (d_out[:, :d] * mask[:, 12:] * (sm[:, 12:] - raw[:, :d])).sum(axis=0)
    d_logit = np.concatenate([d_blend_obj, d_blend_pose]) * blend * (1.0 - blend)
    acc("cond_skip", d_logit)
    d_raw = d_out.copy()
    d_raw[:, d : d + 12] = d_out[:, d : d + 12] * (1.0 - mask[:, :12] * blend[:12])
    d_raw[:, :d] = d_out[:, :d] * (1.0 - mask[:, 12:] * blend[12:])
    acc("out_w", h.T @ d_raw)
    acc("out_b", d_raw.sum(axis=0))
    dh = d_raw @ p("out_w").T

    for k in reversed(range(cfg.blocks)):
        h_in, z_mix, h_mid, z_ch = cache["blocks"][k]
        # channel mix: h_out = h_mid + tanh(h_mid W1 + b1) W2 + b2
        acc(f"ch_b2_{k}", dh.sum(axis=0))
        acc(f"ch_w2_{k}", z_ch.T @ dh)
        d_pre_ch = (dh @ p(f"ch_w2_{k}").T) * (1.0 - z_ch**2)
        acc(f"ch_w1_{k}", h_mid.T @ d_pre_ch)
        acc(f"ch_b1_{k}", d_pre_ch.sum(axis=0))
        dh_mid = dh + d_pre_ch @ p(f"ch_w1_{k}").T
        # slot mix: h_mid = h_in + tanh(M h_in + b)
        d_pre_mix = dh_mid * (1.0 - z_mix**2)
        acc(f"mix_m{k}", d_pre_mix @ h_in.T)
        acc(f"mix_b{k}", d_pre_mix.sum(axis=0))
        dh = dh_mid + p(f"mix_m{k}").T @ d_pre_mix

    x = cache["x"]
    acc("in_w", x.T @ dh)
    acc("in_b", dh.sum(axis=0))
    dx = dh @ p("in_w").T

    slot_dim = cfg.slot_dim
    crd = cfg.cond_row_dim
    g_lo = slot_dim + 2 * crd
    g_hi = g_lo + cfg.geom_dim
    d_gflat = dx[:, g_lo:g_hi].sum(axis=0)
    acc("geom_proj", d_gflat.reshape(cfg.projected_count, 3) @ cache["g"].T)
    d_fused = dx[:, g_hi:].sum(axis=0)

    acc("text_w", np.outer(cache["e_text"], d_fused))
    acc("text_b", d_fused)
    acc("noise_b2", d_fused)
    acc("noise_w2", np.outer(cache["h_n"], d_fused))
    d_hn = p("noise_w2") @ d_fused
    d_pre_n = d_hn * (1.0 - cache["h_n"] ** 2)
    acc("noise_w1", d_pre_n * cache["n_norm"])
    acc("noise_b1", d_pre_n)
    return grad


def denoise(params: DenoiserParams, tau_n: np.ndarray, n: int, cond: ConditionBundle, schedule: NoiseSchedule) -> np.ndarray:
    """Denoiser prediction of tau_0 from the noisy tensor at step n."""
    out, _ = _denoise_forward(params, tau_n, n / schedule.steps, cond)
    return out


def training_loss(
    params: DenoiserParams,
    tau0: SampleTensor,
    n: int,
    cond: ConditionBundle,
    noise: np.ndarray,
    schedule: NoiseSchedule,
) -> tuple[float, np.ndarray]:
    """Masked L1 reconstruction loss and its exact parameter gradient.

    The loss is the mean absolute error between the denoiser prediction
    and tau_0 over valid slots only.
    """
    tau_n = forward_noise(tau0.values, n, noise, schedule)
    pred, cache = _denoise_forward(params, tau_n, n / schedule.steps, cond)
    if not np.all(np.isfinite(pred)):
        raise TrainingError(
            f"non-finite denoiser output at step n={n}; "
            f"param norm {np.linalg.norm(params.vector):.3e}"
        )
    valid = tau0.valid[:, None]
    count = float(valid.sum() * tau0.values.shape[1])
    resid = (pred - tau0.values) * valid
    loss = float(np.abs(resid).sum() / count)
    d_out = np.sign(resid) * valid / count
    return loss, _denoise_backward(params, cache, d_out)


def reverse_step(
    params: DenoiserParams,
    tau_n: np.ndarray,
    n: int,
    cond: ConditionBundle,
    schedule: NoiseSchedule,
    noise: np.ndarray | None = None,
    denoiser=None,
) -> np.ndarray:
    """One posterior sampling step tau_n -> tau_{n-1}.

    The posterior mean combines the predicted tau_0 and tau_n with the
    standard DDPM coefficients; variance is the fixed posterior variance,
    and the n=1 step is deterministic. ``denoiser`` can override the
    learned model (used by oracle tests).
    """
    if not 1 <= n <= schedule.steps:
        raise ValidationError(f"step {n} outside 1..{schedule.steps}")
    if denoiser is None:
        pred = denoise(params, tau_n, n, cond, schedule)
    else:
        pred = denoiser(tau_n, n, cond)
    ab_n = schedule.alpha_bar(n)
    ab_prev = schedule.alpha_bar(n - 1)
    beta_n = float(schedule.betas[n - 1])
    alpha_n = float(schedule.alphas[n - 1])
    coef0 = np.sqrt(ab_prev) * beta_n / (1.0 - ab_n)
    coefn = np.sqrt(alpha_n) * (1.0 - ab_prev) / (1.0 - ab_n)
    mean = coef0 * pred + coefn * tau_n
    if n == 1:
        return mean
    var = float(schedule.posterior_var[n - 1])
    if noise is None:
        return mean
    return mean + np.sqrt(var) * noise


@dataclass
class SampleResult:
    """Unpacked generation output for one window."""

    poses: np.ndarray  # [slots, pose_dim]
    object_rows: np.ndarray  # [slots, 12]
    contacts: np.ndarray  # [slots, 4]
    offsets: np.ndarray  # [slots] frames, monotone
    tensor: SampleTensor


def sample(
    params: DenoiserParams,
    cond: ConditionBundle,
    schedule: NoiseSchedule,
    seed: int,
    denoiser=None,
    stochastic: bool = True,
) -> SampleResult:
    """Draw one window by iterating the reverse process from pure noise."""
    cfg = params.config
    layout = cfg.layout()
    rng = named_rng(seed, "sample")
    tau = rng.standard_normal((cfg.window_slots, cfg.slot_dim))
    for n in range(schedule.steps, 0, -1):
        noise = rng.standard_normal(tau.shape) if (stochastic and n > 1) else None
        tau = reverse_step(params, tau, n, cond, schedule, noise, denoiser=denoiser)
        if not np.all(np.isfinite(tau)):
            raise TrainingError(f"non-finite sample values at reverse step {n}")
    tensor = SampleTensor(tau, np.ones(cfg.window_slots), layout)
    x, o, h, offsets = unpack_tensor(tensor)
    offsets = _monotone_offsets(offsets)
    return SampleResult(x, o, h, offsets, tensor)


def _monotone_offsets(offsets: np.ndarray) -> np.ndarray:
    """Round predicted frame offsets and force strict monotone growth."""
    out = np.round(offsets).astype(np.int64)
    out[0] = 0
    for i in range(1, len(out)):
        out[i] = max(out[i], out[i - 1] + 1)
    return out.astype(np.float64)


def sample_to_keyset(result: SampleResult, skeleton: SkeletonSpec, frame_rate: float) -> KeyActionSet:
    """Turn generated window slots into a key-action set on a dense timeline.

    Object rotations are projected back onto SO(3) since the denoiser
    emits unconstrained reals.
    """
    from .rotation import nearest_rotation

    offsets = result.offsets.astype(np.int64)
    t = int(offsets[-1]) + 1
    j = skeleton.joint_count
    root = result.poses[:, :3]
    rot6d = result.poses[:, 3:].reshape(len(offsets), j, 6)
    obj_pos = result.object_rows[:, :3]
    obj_rot = nearest_rotation(result.object_rows[:, 3:].reshape(-1, 3, 3))
    return KeyActionSet(
        skeleton=skeleton,
        frame_rate=frame_rate,
        source_length=t,
        indices=offsets,
        root=root.copy(),
        rot6d=rot6d.copy(),
        obj_positions=obj_pos.copy(),
        obj_rotations=obj_rot,
        contacts=result.contacts.copy(),
    )


def autoregressive_generate(
    params: DenoiserParams,
    conditions: list[ConditionBundle],
    n_over: int,
    schedule: NoiseSchedule,
    seed: int,
    denoiser=None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Long-horizon generation over overlapping windows.

    Each window after the first is re-conditioned on the last ``n_over``
    generated key actions (written into its leading condition slots with a
    full mask), and the overlapping slots appear once in the output.
    Returns (poses, object rows, contacts, global frame indices) with
    len(conditions) * (slots - n_over) + n_over keys on a strictly
    increasing timeline.
    """
    if not conditions:
        raise ValidationError("need at least one window condition")
    cfg = params.config
    slots = cfg.window_slots
    if not 1 <= n_over < slots:
        raise ValidationError("n_over must lie in [1, window_slots)")
    layout = cfg.layout()
    poses, objects, contacts, frames = [], [], [], []
    base_frame = 0.0
    prev: SampleResult | None = None
    for w, cond in enumerate(conditions):
        if prev is not None:
            s = cond.s.copy()
            mask = cond.mask.copy()
            for i in range(n_over):
                src = slots - n_over + i
                row = np.concatenate([prev.object_rows[src], prev.poses[src]])
                s[i] = row
                mask[i] = 1.0
            cond = ConditionBundle(cond.geometry, s, mask, cond.e_text)
        result = sample(params, cond, schedule, seed + w, denoiser=denoiser)
        start = 0 if prev is None else n_over
        if prev is not None:
            base_frame = frames[-1] - result.offsets[n_over - 1]
        for i in range(start, slots):
            poses.append(result.poses[i])
            objects.append(result.object_rows[i])
            contacts.append(result.contacts[i])
            frames.append(base_frame + result.offsets[i])
        prev = result
    frames_arr = np.array(frames)
    # windows join on predicted offsets; enforce a strictly increasing timeline
    for i in range(1, len(frames_arr)):
        frames_arr[i] = max(frames_arr[i], frames_arr[i - 1] + 1)
    return (
        np.stack(poses),
        np.stack(objects),
        np.stack(contacts),
        frames_arr,
    )


# ---------------------------------------------------------------------------
# training loop


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0


def adam_step(
    params: DenoiserParams,
    grad: np.ndarray,
    state: AdamState,
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """In-place Adam update of the flat parameter vector."""
    state.step += 1
    state.m = beta1 * state.m + (1 - beta1) * grad
    state.v = beta2 * state.v + (1 - beta2) * grad**2
    mh = state.m / (1 - beta1**state.step)
    vh = state.v / (1 - beta2**state.step)
    params.vector -= lr * mh / (np.sqrt(vh) + eps)


def evaluate_loss(
    params: DenoiserParams,
    tensors: list[SampleTensor],
    conditions: list[ConditionBundle],
    schedule: NoiseSchedule,
    seed: int = 0,
) -> float:
    """Mean training loss over a fixed evaluation draw of (n, noise) pairs."""
    rng = named_rng(seed, "eval")
    total = 0.0
    for tensor, cond in zip(tensors, conditions):
        n = int(rng.integers(1, schedule.steps + 1))
        noise = rng.standard_normal(tensor.values.shape)
        loss, _ = training_loss(params, tensor, n, cond, noise, schedule)
        total += loss
    return total / len(tensors)


def train_denoiser(
    params: DenoiserParams,
    tensors: list[SampleTensor],
    conditions: list[ConditionBundle],
    schedule: NoiseSchedule,
    steps: int,
    batch_size: int,
    lr: float,
    seed: int,
    final_lr_frac: float = 0.05,
    log_cb=None,
) -> list[float]:
    """Deterministic single-threaded Adam training; returns per-step losses.

    The learning rate decays linearly to ``final_lr_frac * lr``; the L1
    objective's sign gradients otherwise leave an error floor proportional
    to the step size.
    """
    if len(tensors) != len(conditions) or not tensors:
        raise ValidationError("need matching, non-empty tensors and conditions")
    rng = named_rng(seed, "train")
    state = AdamState(np.zeros_like(params.vector), np.zeros_like(params.vector))
    losses = []
    n_data = len(tensors)
    for step in range(steps):
        idx = rng.integers(0, n_data, size=min(batch_size, n_data))
        total = 0.0
        grad = np.zeros_like(params.vector)
        for i in idx:
            n = int(rng.integers(1, schedule.steps + 1))
            noise = rng.standard_normal(tensors[i].values.shape)
            loss, g = training_loss(params, tensors[i], n, conditions[i], noise, schedule)
            total += loss
            grad += g
        total /= len(idx)
        grad /= len(idx)
        frac = step / max(steps - 1, 1)
        adam_step(params, grad, state, lr=lr * (1.0 - (1.0 - final_lr_frac) * frac))
        losses.append(total)
        if log_cb is not None:
            log_cb(step, total)
    return losses
