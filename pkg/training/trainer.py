"""
trainer.py
----------
One optimization step:

    source view -> predict canonical Gaussians (head tokens shrunk at a random ratio)
    for each sampled target view: skin to the target pose, render, photometric losses
    mean over targets + canonical regularizers -> backward -> clip -> AdamW

Target views of step k are drawn from (data_seed, k), the head-token mask
from (mask_seed, k), so a run is a pure function of its seeds and resumes
bit-exactly from any checkpoint.
"""

from __future__ import annotations

import json
import sys
from collections.abc import Callable
from dataclasses import dataclass
from pathlib import Path
from typing import TextIO

import numpy as np
from loguru import logger
from tqdm import tqdm

from autodiff import GradTape, Tensor, backward
from avatar.gaussians import activate_raw
from body.body_model import forward_kinematics
from core.state_manager import RunState, RunStatus
from network.config import NetworkConfig
from network.lhm import ForwardMode, predict_gaussians
from network.weights import NetworkWeights, init_weights
from performance.fps_optimizer import FPSOptimizer
from performance.thread_manager import TileWorkerPool
from rendering.config import RenderConfig
from rendering.rasterizer import render
from skinning.config import SkinConfig
from skinning.lbs import pose_gaussians
from skinning.skin_field import SkinField
from training.checkpoint import Checkpoint
from training.losses import (
    LossReport,
    LossWeights,
    acap_loss,
    asap_loss,
    assemble_total,
    color_loss,
    mask_loss,
    mean_nn_spacing,
    report_of,
)
from training.optimizer import AdamState, TrainConfig, adamw_step, clip_gradients
from training.perceptual import FeaturePyramid, default_pyramid, perceptual_loss
from training.scene import SyntheticScene, network_inputs
from utils.config import LOG_EVERY
from utils.errors import ConfigError, NonFiniteError


def step_rng(seed: int, step: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, step]))


@dataclass(frozen=True)
class TrainingData:
    """Per-scene constants shared by every step."""

    scene: SyntheticScene
    cfg: NetworkConfig
    image: np.ndarray
    head_crop: np.ndarray
    field: SkinField
    transforms: dict[int, np.ndarray]
    target_scale: float
    skin_cfg: SkinConfig
    render_cfg: RenderConfig
    pyramid: FeaturePyramid


def prepare_training_data(
    scene: SyntheticScene,
    cfg: NetworkConfig,
    loss_weights: LossWeights = LossWeights(),
    skin_cfg: SkinConfig = SkinConfig(),
    render_cfg: RenderConfig = RenderConfig(),
    pyramid: FeaturePyramid | None = None,
) -> TrainingData:
    if len(scene.anchors) != cfg.n_points:
        raise ConfigError(f"scene has {len(scene.anchors)} anchor points, network expects {cfg.n_points}")
    image, crop = network_inputs(scene.source.rgb, scene.source.head_box, cfg)
    target_scale = loss_weights.asap_target_scale or mean_nn_spacing(scene.anchors.positions)
    transforms = {v.index: forward_kinematics(scene.template, v.pose) for v in scene.views}
    return TrainingData(
        scene, cfg, image, crop, skin_cfg.build(scene.template), transforms, target_scale,
        skin_cfg, render_cfg, pyramid or default_pyramid(),
    )


def train_step(
    weights: NetworkWeights,
    adam: AdamState,
    data: TrainingData,
    cfg: TrainConfig,
    loss_weights: LossWeights,
    step: int,
    pool: TileWorkerPool | None = None,
) -> tuple[NetworkWeights, AdamState, LossReport]:
    train_views = data.scene.train_indices
    n_targets = min(cfg.targets_per_step, len(train_views))
    targets = step_rng(cfg.data_seed, step).choice(train_views, size=n_targets, replace=False)
    rng = step_rng(cfg.mask_seed, step)
    m_max = data.cfg.head_mask_max
    ratio = float(rng.uniform(0.0, m_max)) if m_max > 0.0 else 0.0
    mode = ForwardMode.train(ratio, int(rng.integers(2**31)))
    anchors = data.scene.anchors

    with GradTape() as tape:
        for tensor in weights.values():
            tape.watch(tensor)
        raw = predict_gaussians(data.image, data.head_crop, anchors, data.cfg, weights, mode)
        g = activate_raw(raw, anchors.positions, data.cfg.offset_cap, data.cfg.scale_floor)
        skin = data.skin_cfg.weights_for(data.field, g.positions.data, anchors.positions)

        sums: dict[str, Tensor] = {}
        for k in targets:
            view = data.scene.views[int(k)]
            posed = pose_gaussians(g, skin, data.transforms[view.index])
            rgb, alpha = render(posed, view.camera, data.render_cfg.background, data.render_cfg.tile_size, pool)
            for name, term in (
                ("color", color_loss(rgb, view.rgb)),
                ("mask", mask_loss(alpha, view.mask)),
                ("perceptual", perceptual_loss(rgb, view.rgb, data.pyramid)),
            ):
                sums[name] = term if name not in sums else sums[name] + term
        terms = {name: total * (1.0 / len(targets)) for name, total in sums.items()}
        terms["asap"] = asap_loss(g, data.target_scale)
        terms["acap"] = acap_loss(g.positions - anchors.positions, loss_weights.acap_threshold)
        total = assemble_total(terms, loss_weights)

    report = report_of(terms, total)
    grads = backward(tape, total)
    clipped, _ = clip_gradients({key: grads[t] for key, t in weights.items()}, cfg.grad_clip)
    params, adam = adamw_step(weights.arrays(), clipped, adam, cfg)
    return NetworkWeights.from_arrays(data.cfg, params), adam, report


class Trainer:
    """Fit loop with a line-oriented loss log and run-state bookkeeping."""

    def __init__(
        self,
        data: TrainingData,
        cfg: TrainConfig,
        loss_weights: LossWeights = LossWeights(),
        checkpoint: Checkpoint | None = None,
        pool: TileWorkerPool | None = None,
    ) -> None:
        self.data = data
        self.cfg = cfg
        self.loss_weights = loss_weights
        self.pool = pool
        if checkpoint is None:
            self.weights = init_weights(data.cfg, cfg.init_seed)
            self.adam = AdamState.zeros_like(self.weights.arrays())
            start = 0
        else:
            if checkpoint.cfg != data.cfg:
                raise ConfigError("checkpoint network configuration differs from the requested one")
            self.weights, self.adam, start = checkpoint.weights, checkpoint.adam, checkpoint.step
        self.state = RunState(step=start)
        self.meter = FPSOptimizer()

    def checkpoint(self) -> Checkpoint:
        meta = {"seeds": {"data": self.cfg.data_seed, "mask": self.cfg.mask_seed, "init": self.cfg.init_seed},
                "scene_seed": self.data.scene.config.seed}
        return Checkpoint(self.weights, self.adam, self.state.step, meta)

    def _dump(self, dump_dir: Path, exc: NonFiniteError) -> Path:
        path = dump_dir / f"nonfinite_step_{self.state.step}.json"
        payload = {
            "step": self.state.step,
            "error": str(exc),
            "last_total": self.state.last_total,
            "history_tail": self.state.history[-10:],
            "weight_norms": {k: float(np.linalg.norm(v)) for k, v in self.weights.arrays().items()},
        }
        path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")
        return path

    def fit(
        self,
        iterations: int,
        log: TextIO | None = None,
        dump_dir: Path | None = None,
        on_step: Callable[[int, LossReport], None] | None = None,
    ) -> list[LossReport]:
        reports: list[LossReport] = []
        self.state.set_status(RunStatus.TRAINING, f"{iterations} steps from {self.state.step}")
        steps = range(self.state.step, self.state.step + iterations)
        for step in tqdm(steps, desc="train", unit="step", disable=not sys.stderr.isatty()):
            try:
                self.weights, self.adam, report = train_step(
                    self.weights, self.adam, self.data, self.cfg, self.loss_weights, step, self.pool
                )
            except NonFiniteError as exc:
                self.state.set_status(RunStatus.ABORTED, str(exc))
                if dump_dir is not None:
                    logger.error("[TRAIN] non-finite value at step {}; dump in {}", step, self._dump(dump_dir, exc))
                raise
            self.state.record(report.total)
            self.meter.tick()
            reports.append(report)
            if log is not None:
                log.write(report.to_record(step) + "\n")
                log.flush()
            if on_step is not None:
                on_step(step, report)
            if step % LOG_EVERY == 0:
                logger.info("[TRAIN] step {} total {:.6f} ({:.2f} steps/s)", step, report.total, self.meter.fps)
        self.state.set_status(RunStatus.DONE, self.meter.summary("steps"))
        return reports
