"""Losses, metrics, synthetic scenes and the optimization loop."""

from training.checkpoint import Checkpoint, decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint
from training.evaluate import evaluate, predicted_avatar, resolve_holdout, score_views, write_report
from training.losses import (
    LossReport,
    LossWeights,
    acap_loss,
    asap_loss,
    assemble_total,
    color_loss,
    mask_loss,
    mean_nn_spacing,
    total_loss,
)
from training.metrics import psnr, ssim
from training.optimizer import AdamState, TrainConfig, adamw_step, clip_gradients, global_norm
from training.perceptual import FeaturePyramid, default_pyramid, perceptual_loss
from training.scene import (
    SceneConfig,
    SyntheticScene,
    View,
    crop_head,
    head_box,
    make_synthetic_scene,
    network_inputs,
    read_scene,
    write_scene,
)
from training.trainer import Trainer, TrainingData, prepare_training_data, step_rng, train_step

__all__ = [
    "AdamState",
    "Checkpoint",
    "FeaturePyramid",
    "LossReport",
    "LossWeights",
    "SceneConfig",
    "SyntheticScene",
    "TrainConfig",
    "Trainer",
    "TrainingData",
    "View",
    "acap_loss",
    "adamw_step",
    "asap_loss",
    "assemble_total",
    "clip_gradients",
    "color_loss",
    "crop_head",
    "decode_checkpoint",
    "default_pyramid",
    "encode_checkpoint",
    "evaluate",
    "global_norm",
    "head_box",
    "load_checkpoint",
    "make_synthetic_scene",
    "mask_loss",
    "mean_nn_spacing",
    "network_inputs",
    "perceptual_loss",
    "predicted_avatar",
    "prepare_training_data",
    "psnr",
    "read_scene",
    "resolve_holdout",
    "save_checkpoint",
    "score_views",
    "ssim",
    "step_rng",
    "total_loss",
    "train_step",
    "write_report",
    "write_scene",
]
