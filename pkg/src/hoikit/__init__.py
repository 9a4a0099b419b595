"""hoikit: humanoid-object interaction motion toolkit.

A numpy library for weighted key-action extraction and interpolation,
basis-point-set object encoding, a desk-scale conditional diffusion
generator over human/object/contact windows, tracking rewards with
interaction early termination, and the matching evaluation metrics. The
``hoikit`` command line drives the full synthetic pipeline.
"""

from .diffusion import (
    ConditionBundle,
    DenoiserConfig,
    DenoiserParams,
    NoiseSchedule,
    SampleTensor,
    autoregressive_generate,
    build_condition,
    build_schedule,
    forward_noise,
    init_params,
    reverse_step,
    sample,
    toy_text_embed,
    train_denoiser,
    training_loss,
)
from .errors import (
    ContainerError,
    DegenerateRotationError,
    HoikitError,
    TrainingError,
    ValidationError,
)
from .geometry import (
    BasisPointSet,
    BpsFeature,
    TriangleMesh,
    detect_contacts,
    encode_bps,
    project_geometry,
    sample_basis_points,
    signed_distance,
)
from .keyaction import (
    JointWeights,
    KeyActionSet,
    ReconstructionReport,
    TrainingWindow,
    build_training_windows,
    default_weights,
    extract_key_actions,
    interpolate,
    optimal_key_actions_oracle,
    reconstruction_error,
    tracked_points,
)
from .kinematics import (
    finite_difference_velocities,
    global_to_relative,
    relative_to_global,
)
from .metrics import (
    GenerationMetrics,
    TrackingMetrics,
    condition_matching,
    contact_metrics,
    emit_report,
    foot_metrics,
    gt_difference,
    hand_penetration,
    tracking_metrics,
)
from .motion import (
    ContactChannels,
    GlobalMotion,
    MotionSequence,
    ObjectPose,
    ObjectTrajectory,
    PoseFrame,
    SkeletonSpec,
    default_skeleton,
)
from .rotation import (
    matrix_to_rot6d,
    rot6d_to_matrix,
    rotation_difference,
    slerp,
)
from .tracking import (
    HumanoidSimState,
    NoiseModel,
    ObjectSimState,
    RewardWeights,
    RolloutLog,
    ScriptedFault,
    TerminationConfig,
    build_humanoid_obs,
    build_object_obs,
    check_early_termination,
    filter_successful_rollouts,
    human_tracking_reward,
    object_reward,
    oracle_rollout,
    total_reward,
)

__version__ = "0.1.0"
