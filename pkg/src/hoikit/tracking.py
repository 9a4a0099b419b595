"""Tracking support: observations, rewards, early termination, oracle rollouts.

Rewards follow the tracking form w * exp(-k * error): position, rotation,
linear and angular velocity terms with decay coefficients 100, 10, 0.1,
0.1 for the humanoid (key joints only) and 100, 10, 5, 5 for the object,
plus a contact-agreement term w * ||expected XNOR actual||. The blended
reward is alpha * human + (1 - alpha) * object.

Interaction early termination fires at the earliest frame where (i) the
mean deviation of the object's bounding-box corners from their reference
exceeds the limit (default 0.5 m), (ii) expected body-object contact has
been missing for more than the frame limit (default 10; the episode ends
on the 11th consecutive missing frame), or (iii) the humanoid's mean
key-joint drift exceeds its limit. Within one frame the precedence is
object-deviation, then contact-absence, then humanoid-drift.

Because physics simulation is out of scope, oracle_rollout replays the
reference through a configurable noise model (zero, Gaussian jitter, or
scripted faults) and fills a RolloutLog with rewards and termination, so
the reward/termination/metric stack is exercisable end to end.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .keyaction import (
    JointWeights,
    TrainingWindow,
    build_training_windows,
    extract_key_actions,
)
from .kinematics import finite_difference_velocities, global_to_relative, relative_to_global
from .motion import ContactChannels, GlobalMotion, MotionSequence, ObjectTrajectory, SkeletonSpec
from .rotation import (
    axis_angle_to_matrix,
    geodesic_angle,
    matrix_to_rot6d,
    rotation_difference,
)

REASON_OBJECT_DEVIATION = "object-deviation"
REASON_CONTACT_ABSENCE = "contact-absence"
REASON_HUMANOID_DRIFT = "humanoid-drift"

REWARD_TERMS = (
    "human_pos",
    "human_rot",
    "human_vel",
    "human_angvel",
    "human_contact",
    "object_pos",
    "object_rot",
    "object_vel",
    "object_angvel",
)


@dataclass
class HumanoidSimState:
    """Per-link simulated (or reference) humanoid state at one time step."""

    positions: np.ndarray  # [J,3]
    orientations: np.ndarray  # [J,3,3]
    linear_velocity: np.ndarray  # [J,3]
    angular_velocity: np.ndarray  # [J,3]
    body_shape: np.ndarray | None = None


@dataclass
class ObjectSimState:
    position: np.ndarray  # [3]
    orientation: np.ndarray  # [3,3]
    linear_velocity: np.ndarray  # [3]
    angular_velocity: np.ndarray  # [3]
    contacts: np.ndarray | None = None  # [4] booleans


@dataclass
class RewardWeights:
    """Reward term weights; the paper leaves the values unpublished."""

    human_pos: float = 1.0
    human_rot: float = 1.0
    human_vel: float = 1.0
    human_angvel: float = 1.0
    human_contact: float = 1.0
    object_pos: float = 1.0
    object_rot: float = 1.0
    object_vel: float = 1.0
    object_angvel: float = 1.0
    alpha: float = 0.5
    key_joints: tuple[int, ...] = ()

    def __post_init__(self):
        vals = [
            self.human_pos, self.human_rot, self.human_vel, self.human_angvel,
            self.human_contact, self.object_pos, self.object_rot, self.object_vel,
            self.object_angvel,
        ]
        if any(v < 0 for v in vals):
            raise ValidationError("reward weights must be nonnegative")
        if sum(vals[:5]) <= 0 or sum(vals[5:]) <= 0:
            raise ValidationError("human and object weight sums must be positive")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValidationError("alpha must lie in [0,1]")

    def human_max(self) -> float:
        """Upper bound of the human reward (perfect tracking, full agreement)."""
        return (
            self.human_pos + self.human_rot + self.human_vel + self.human_angvel
            + 2.0 * self.human_contact
        )

    def object_max(self) -> float:
        return self.object_pos + self.object_rot + self.object_vel + self.object_angvel


@dataclass
class TerminationConfig:
    object_deviation_limit: float = 0.5  # meters, mean over box corners
    missing_contact_limit: int = 10  # consecutive frames
    humanoid_drift_limit: float = 0.5  # meters, mean over key joints

    def __post_init__(self):
        if min(self.object_deviation_limit, self.humanoid_drift_limit) <= 0:
            raise ValidationError("termination limits must be positive")
        if self.missing_contact_limit <= 0:
            raise ValidationError("missing-contact limit must be positive")


def xnor(expected: np.ndarray, actual: np.ndarray) -> np.ndarray:
    """Per-channel agreement: 1.0 where the booleans match, else 0.0."""
    e = np.asarray(expected).astype(bool)
    a = np.asarray(actual).astype(bool)
    return (e == a).astype(np.float64)


def build_humanoid_obs(sim: HumanoidSimState, ref_next: HumanoidSimState) -> np.ndarray:
    """Reference-state observation for the humanoid, flattened.

    Field order: rotation difference (6-DOF per link), position delta,
    linear velocity delta, angular velocity delta, then the reference
    orientation (6-DOF) and position.
    """
    if sim.positions.shape != ref_next.positions.shape:
        raise ValidationError("simulated and reference joint counts differ")
    rot_diff = rotation_difference(ref_next.orientations, sim.orientations)
    parts = [
        matrix_to_rot6d(rot_diff).reshape(-1),
        (ref_next.positions - sim.positions).reshape(-1),
        (ref_next.linear_velocity - sim.linear_velocity).reshape(-1),
        (ref_next.angular_velocity - sim.angular_velocity).reshape(-1),
        matrix_to_rot6d(ref_next.orientations).reshape(-1),
        ref_next.positions.reshape(-1),
    ]
    return np.concatenate(parts)


def build_object_obs(
    sim: ObjectSimState, ref_next: ObjectSimState, expected_next: np.ndarray
) -> np.ndarray:
    """Object observation with the contact-agreement (XNOR) channels.

    Field order: rotation difference (6-DOF), position delta, velocity
    delta, angular velocity delta, expected-XNOR-actual contacts, the
    reference orientation (6-DOF), reference position, expected contacts.
    """
    actual = sim.contacts if sim.contacts is not None else np.zeros(4)
    rot_diff = rotation_difference(ref_next.orientation, sim.orientation)
    parts = [
        matrix_to_rot6d(rot_diff),
        ref_next.position - sim.position,
        ref_next.linear_velocity - sim.linear_velocity,
        ref_next.angular_velocity - sim.angular_velocity,
        xnor(expected_next, actual),
        matrix_to_rot6d(ref_next.orientation),
        ref_next.position,
        np.asarray(expected_next, dtype=np.float64),
    ]
    return np.concatenate(parts)


def _key_joint_indices(weights: RewardWeights, skeleton: SkeletonSpec | None) -> np.ndarray:
    if weights.key_joints:
        return np.asarray(weights.key_joints, dtype=np.int64)
    if skeleton is not None and skeleton.key_joints:
        return np.asarray(skeleton.key_joints, dtype=np.int64)
    raise ValidationError("no key joints configured")


def human_tracking_reward(
    sim: HumanoidSimState,
    ref: HumanoidSimState,
    expected_contacts: np.ndarray,
    actual_contacts: np.ndarray,
    weights: RewardWeights,
    skeleton: SkeletonSpec | None = None,
) -> tuple[float, dict[str, float]]:
    """Key-joint tracking reward with contact agreement.

    Position/velocity errors are Euclidean norms of the concatenated
    key-joint deltas; the rotation error is the geodesic angle summed over
    key joints. Decay coefficients are 100, 10, 0.1, 0.1.
    """
    kj = _key_joint_indices(weights, skeleton)
    dp = np.linalg.norm(ref.positions[kj] - sim.positions[kj])
    dq = float(geodesic_angle(ref.orientations[kj], sim.orientations[kj]).sum())
    dv = np.linalg.norm(ref.linear_velocity[kj] - sim.linear_velocity[kj])
    dw = np.linalg.norm(ref.angular_velocity[kj] - sim.angular_velocity[kj])
    agree = np.linalg.norm(xnor(expected_contacts, actual_contacts))
    terms = {
        "human_pos": weights.human_pos * float(np.exp(-100.0 * dp)),
        "human_rot": weights.human_rot * float(np.exp(-10.0 * dq)),
        "human_vel": weights.human_vel * float(np.exp(-0.1 * dv)),
        "human_angvel": weights.human_angvel * float(np.exp(-0.1 * dw)),
        "human_contact": weights.human_contact * float(agree),
    }
    return sum(terms.values()), terms


def object_reward(
    sim: ObjectSimState, ref: ObjectSimState, weights: RewardWeights
) -> tuple[float, dict[str, float]]:
    """Object tracking reward; decay coefficients 100, 10, 5, 5."""
    dp = np.linalg.norm(ref.position - sim.position)
    dq = float(geodesic_angle(ref.orientation, sim.orientation))
    dv = np.linalg.norm(ref.linear_velocity - sim.linear_velocity)
    dw = np.linalg.norm(ref.angular_velocity - sim.angular_velocity)
    terms = {
        "object_pos": weights.object_pos * float(np.exp(-100.0 * dp)),
        "object_rot": weights.object_rot * float(np.exp(-10.0 * dq)),
        "object_vel": weights.object_vel * float(np.exp(-5.0 * dv)),
        "object_angvel": weights.object_angvel * float(np.exp(-5.0 * dw)),
    }
    return sum(terms.values()), terms


def total_reward(human: float, obj: float, alpha: float) -> float:
    if not 0.0 <= alpha <= 1.0:
        raise ValidationError("alpha must lie in [0,1]")
    return alpha * human + (1.0 - alpha) * obj


@dataclass
class RolloutLog:
    """Aligned simulated/reference series with rewards and termination."""

    skeleton: SkeletonSpec
    frame_rate: float
    sim_positions: np.ndarray  # [T,J,3]
    sim_orientations: np.ndarray  # [T,J,3,3]
    sim_lin_vel: np.ndarray
    sim_ang_vel: np.ndarray
    ref_positions: np.ndarray
    ref_orientations: np.ndarray
    ref_lin_vel: np.ndarray
    ref_ang_vel: np.ndarray
    sim_obj_pos: np.ndarray  # [T,3]
    sim_obj_rot: np.ndarray  # [T,3,3]
    sim_obj_vel: np.ndarray
    sim_obj_angvel: np.ndarray
    ref_obj_pos: np.ndarray
    ref_obj_rot: np.ndarray
    ref_obj_vel: np.ndarray
    ref_obj_angvel: np.ndarray
    expected_contacts: np.ndarray  # [T,4] probabilities
    actual_contacts: np.ndarray  # [T,4] 0/1
    object_corners: np.ndarray  # [8,3] mesh-frame box corners
    reward_terms: np.ndarray  # [T,9] in REWARD_TERMS order
    reward_total: np.ndarray  # [T]
    source_length: int = 0  # reference frames before truncation
    termination_frame: int | None = None
    termination_reason: str | None = None
    target_position: np.ndarray | None = None
    key_joints: tuple[int, ...] = ()

    def __post_init__(self):
        if self.source_length == 0:
            self.source_length = self.sim_positions.shape[0]

    def __len__(self) -> int:
        return self.sim_positions.shape[0]

    def sim_state(self, t: int) -> HumanoidSimState:
        return HumanoidSimState(
            self.sim_positions[t], self.sim_orientations[t],
            self.sim_lin_vel[t], self.sim_ang_vel[t],
        )

    def ref_state(self, t: int) -> HumanoidSimState:
        return HumanoidSimState(
            self.ref_positions[t], self.ref_orientations[t],
            self.ref_lin_vel[t], self.ref_ang_vel[t],
        )

    def sim_object(self, t: int) -> ObjectSimState:
        return ObjectSimState(
            self.sim_obj_pos[t], self.sim_obj_rot[t], self.sim_obj_vel[t],
            self.sim_obj_angvel[t], self.actual_contacts[t],
        )

    def ref_object(self, t: int) -> ObjectSimState:
        return ObjectSimState(
            self.ref_obj_pos[t], self.ref_obj_rot[t], self.ref_obj_vel[t],
            self.ref_obj_angvel[t],
        )


def check_early_termination(
    log: RolloutLog, config: TerminationConfig
) -> tuple[bool, int | None, str | None]:
    """Earliest interaction-termination violation in the rollout prefix."""
    t_total = len(log)
    if t_total == 0:
        raise ValidationError("empty rollout prefix")
    corners = log.object_corners
    sim_c = log.sim_obj_pos[:, None, :] + np.einsum("tij,cj->tci", log.sim_obj_rot, corners)
    ref_c = log.ref_obj_pos[:, None, :] + np.einsum("tij,cj->tci", log.ref_obj_rot, corners)
    obj_dev = np.linalg.norm(sim_c - ref_c, axis=-1).mean(axis=1)
    kj = np.asarray(log.key_joints or log.skeleton.key_joints, dtype=np.int64)
    drift = np.linalg.norm(log.sim_positions[:, kj] - log.ref_positions[:, kj], axis=-1).mean(axis=1)
    expected = log.expected_contacts >= 0.5
    missing = np.any(expected & (log.actual_contacts < 0.5), axis=1)
    run = 0
    for t in range(t_total):
        if obj_dev[t] > config.object_deviation_limit:
            return True, t, REASON_OBJECT_DEVIATION
        run = run + 1 if missing[t] else 0
        if run > config.missing_contact_limit:
            return True, t, REASON_CONTACT_ABSENCE
        if drift[t] > config.humanoid_drift_limit:
            return True, t, REASON_HUMANOID_DRIFT
    return False, None, None


@dataclass
class ScriptedFault:
    """Injected defect: applies from ``frame`` for ``duration`` frames."""

    frame: int
    duration: int | None = None  # None: until the end
    object_offset: np.ndarray | None = None  # [3] added to object position
    drop_contact: tuple[int, ...] = ()  # channels forced to no-contact
    human_offset: np.ndarray | None = None  # [3] added to every link

    def active(self, t: int, total: int) -> bool:
        end = total if self.duration is None else self.frame + self.duration
        return self.frame <= t < end


@dataclass
class NoiseModel:
    """Perturbation applied to the reference to fake a tracking policy."""

    sigma_pos: float = 0.0  # meters, Gaussian on link/object positions
    sigma_rot: float = 0.0  # radians, Gaussian axis-angle on orientations
    faults: list[ScriptedFault] = field(default_factory=list)


def oracle_rollout(
    motion: MotionSequence,
    objects: ObjectTrajectory,
    contacts: ContactChannels,
    object_corners: np.ndarray,
    noise: NoiseModel,
    seed: int,
    weights: RewardWeights,
    termination: TerminationConfig,
    target_position: np.ndarray | None = None,
) -> RolloutLog:
    """Replay the reference through the noise model and score it.

    Simulated states are the reference states perturbed per the noise
    model, with velocities recomputed kinematically from the perturbed
    series. The log carries per-frame reward terms and is truncated at the
    termination frame (inclusive) when termination fires.
    """
    from .seeding import named_rng

    if not (len(motion) == len(objects) == len(contacts)):
        raise ValidationError("reference series lengths differ")
    ref = relative_to_global(motion)
    t_total = len(motion)
    j = motion.skeleton.joint_count
    ref_obj_vel, ref_obj_angvel = finite_difference_velocities(
        objects.positions, objects.rotations, motion.frame_rate
    )

    rng = named_rng(seed, "rollout")
    sim_pos = ref.positions.copy()
    sim_ori = ref.orientations.copy()
    sim_obj_pos = objects.positions.copy()
    sim_obj_rot = objects.rotations.copy()
    expected = contacts.values.copy()
    actual = (contacts.values >= 0.5).astype(np.float64)

    if noise.sigma_pos > 0:
        sim_pos += rng.normal(0.0, noise.sigma_pos, size=sim_pos.shape)
        sim_obj_pos += rng.normal(0.0, noise.sigma_pos, size=sim_obj_pos.shape)
    if noise.sigma_rot > 0:
        sim_ori = axis_angle_to_matrix(rng.normal(0.0, noise.sigma_rot, size=(t_total, j, 3))) @ sim_ori
        sim_obj_rot = axis_angle_to_matrix(rng.normal(0.0, noise.sigma_rot, size=(t_total, 3))) @ sim_obj_rot
    for fault in noise.faults:
        for t in range(t_total):
            if not fault.active(t, t_total):
                continue
            if fault.object_offset is not None:
                sim_obj_pos[t] += np.asarray(fault.object_offset)
            if fault.human_offset is not None:
                sim_pos[t] += np.asarray(fault.human_offset)
            for ch in fault.drop_contact:
                actual[t, ch] = 0.0

    sim_vel, sim_angvel = finite_difference_velocities(sim_pos, sim_ori, motion.frame_rate)
    sim_obj_vel, sim_obj_angvel = finite_difference_velocities(
        sim_obj_pos, sim_obj_rot, motion.frame_rate
    )

    terms = np.zeros((t_total, len(REWARD_TERMS)))
    totals = np.zeros(t_total)
    log = RolloutLog(
        skeleton=motion.skeleton,
        frame_rate=motion.frame_rate,
        sim_positions=sim_pos, sim_orientations=sim_ori,
        sim_lin_vel=sim_vel, sim_ang_vel=sim_angvel,
        ref_positions=ref.positions, ref_orientations=ref.orientations,
        ref_lin_vel=ref.linear_velocity, ref_ang_vel=ref.angular_velocity,
        sim_obj_pos=sim_obj_pos, sim_obj_rot=sim_obj_rot,
        sim_obj_vel=sim_obj_vel, sim_obj_angvel=sim_obj_angvel,
        ref_obj_pos=objects.positions.copy(), ref_obj_rot=objects.rotations.copy(),
        ref_obj_vel=ref_obj_vel, ref_obj_angvel=ref_obj_angvel,
        expected_contacts=expected, actual_contacts=actual,
        object_corners=np.asarray(object_corners, dtype=np.float64),
        reward_terms=terms, reward_total=totals,
        target_position=None if target_position is None else np.asarray(target_position),
        key_joints=tuple(weights.key_joints) or tuple(motion.skeleton.key_joints),
    )
    for t in range(t_total):
        h_total, h_terms = human_tracking_reward(
            log.sim_state(t), log.ref_state(t), expected[t] >= 0.5, actual[t],
            weights, motion.skeleton,
        )
        o_total, o_terms = object_reward(log.sim_object(t), log.ref_object(t), weights)
        for i, name in enumerate(REWARD_TERMS):
            terms[t, i] = h_terms.get(name, o_terms.get(name, 0.0))
        totals[t] = total_reward(h_total, o_total, weights.alpha)

    fired, frame, reason = check_early_termination(log, termination)
    if fired:
        end = frame + 1
        for name in (
            "sim_positions", "sim_orientations", "sim_lin_vel", "sim_ang_vel",
            "ref_positions", "ref_orientations", "ref_lin_vel", "ref_ang_vel",
            "sim_obj_pos", "sim_obj_rot", "sim_obj_vel", "sim_obj_angvel",
            "ref_obj_pos", "ref_obj_rot", "ref_obj_vel", "ref_obj_angvel",
            "expected_contacts", "actual_contacts", "reward_terms", "reward_total",
        ):
            setattr(log, name, getattr(log, name)[:end])
        log.termination_frame = frame
        log.termination_reason = reason
    return log


def reached_target(log: RolloutLog, radius: float = 0.5) -> bool:
    """Final simulated object position within ``radius`` of the target.

    The boundary is closed: a distance of exactly ``radius`` counts as
    success.
    """
    if log.target_position is None:
        return False
    return float(np.linalg.norm(log.sim_obj_pos[-1] - log.target_position)) <= radius


@dataclass
class SuccessCriteria:
    target_radius: float = 0.5  # meters
    min_contact_segment: int = 5  # frames


def filter_successful_rollouts(
    rollouts: list[RolloutLog],
    criteria: SuccessCriteria,
    weights: JointWeights | None = None,
    epsilon: float = 0.05,
    window_key_count: int = 6,
    stride: int = 1,
    prompt: str = "",
) -> list[TrainingWindow]:
    """Convert surviving rollouts back into diffusion training windows.

    A rollout qualifies when it ran to completion (no termination) and its
    object reached the target. The executed global motion goes back
    through inverse kinematics, key extraction, and window construction.
    """
    windows: list[TrainingWindow] = []
    for log in rollouts:
        if log.termination_frame is not None:
            continue
        if not reached_target(log, criteria.target_radius):
            continue
        g = GlobalMotion(
            log.skeleton, log.sim_positions, log.sim_orientations,
            log.sim_lin_vel, log.sim_ang_vel, log.frame_rate,
        )
        motion = global_to_relative(g)
        objects = ObjectTrajectory(log.sim_obj_pos, log.sim_obj_rot, log.frame_rate)
        contacts = ContactChannels(log.actual_contacts)
        keys = extract_key_actions(motion, objects, contacts, weights=weights, epsilon=epsilon)
        windows.extend(
            build_training_windows(
                motion, keys, objects, contacts,
                window_key_count=window_key_count, stride=stride, prompt=prompt,
            )
        )
    return windows
