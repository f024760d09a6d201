"""Pose-level repetitive action counting.

A small numpy library that classifies per-frame body poses into action
classes with a from-scratch transformer encoder, then counts repetitions
with a threshold-trigger state machine over the per-class score series.
"""

from .counter import CountResult, TriggerConfig, count_repetitions, reference_count, select_class, smooth_scores
from .data import (
    DEFAULT_CLASSES,
    GroundTruthCount,
    Keypoint,
    LabeledPoseSample,
    PoseFrame,
    PoseSequence,
    SaliencyAnnotation,
    build_training_set,
    load_keypoint_file,
    normalize_pose,
    parse_annotation_csv,
    parse_count_csv,
    parse_keypoint_csv,
    write_annotation_csv,
    write_count_csv,
    write_keypoint_csv,
)
from .evaluation import EvalResult, evaluate, mae, obo
from .model import (
    EncoderOutput,
    ModelConfig,
    ModelParams,
    ScoreMatrix,
    encode,
    embed_keypoints,
    encoder_layer,
    forward_frame,
    init_params,
    load_checkpoint,
    pose_mapping,
    save_checkpoint,
    score_video,
)
from .training import (
    EpochStats,
    OptimizerState,
    TrainConfig,
    bce_loss,
    cosine_distance,
    make_targets,
    mine_triplets,
    optimizer_step,
    total_loss,
    train,
    triplet_loss,
    write_history_csv,
)

__version__ = "0.1.0"
