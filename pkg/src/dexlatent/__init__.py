"""Shared latent action space for dexterous hands.

Per-hand encoder/decoder heads map joint vectors into one Gaussian latent
space and back, trained self-supervised from uniformly sampled poses with
reconstruction, fingertip-retargeting (via differentiable forward
kinematics), and KL objectives. The package also ships the evaluation metric
suite and a CLI for training, evaluating, and retargeting trajectories.
"""

from .autodiff import Tape, Tensor, backward
from .hands import (
    HandSpec,
    JointPose,
    example_hand_names,
    expand_mimic,
    fingertip_displacement,
    forward_kinematics,
    load_example_hand,
    load_hand_spec,
    parse_hand_spec,
    sample_pose,
)
from .losses import LossBreakdown, LossWeights, PairSet, kl_loss, pinch_weight, total_loss
from .metrics import MetricsConfig, MetricsReport, full_report
from .model import LatentCode, LatentModel, load_checkpoint, save_checkpoint
from .trajectory import Trajectory, load_trajectory, save_trajectory
from .training import AdamOptimizer, TrainConfig, TrainLog, train

__version__ = "0.1.0"

__all__ = [
    "AdamOptimizer",
    "HandSpec",
    "JointPose",
    "LatentCode",
    "LatentModel",
    "LossBreakdown",
    "LossWeights",
    "MetricsConfig",
    "MetricsReport",
    "PairSet",
    "Tape",
    "Tensor",
    "TrainConfig",
    "TrainLog",
    "Trajectory",
    "backward",
    "example_hand_names",
    "expand_mimic",
    "fingertip_displacement",
    "forward_kinematics",
    "full_report",
    "kl_loss",
    "load_checkpoint",
    "load_example_hand",
    "load_hand_spec",
    "load_trajectory",
    "parse_hand_spec",
    "pinch_weight",
    "sample_pose",
    "save_checkpoint",
    "save_trajectory",
    "total_loss",
    "train",
]
