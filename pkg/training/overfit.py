"""
overfit.py
----------
The desk-scale overfit run: the default network (64-wide tokens, two
layers, 500 points) fitted to a 500-Gaussian synthetic scene with 8
training and 4 holdout views at 128 px, for 2000 AdamW steps at the
default hyperparameters. configs/overfit.cfg holds the same values for
the command line.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from loguru import logger

from body.body_model import BodyTemplate
from network.config import NetworkConfig
from performance.thread_manager import TileWorkerPool
from rendering.config import RenderConfig
from skinning.config import SkinConfig
from training.evaluate import predicted_avatar, score_views
from training.losses import LossReport, LossWeights
from training.optimizer import TrainConfig
from training.scene import SceneConfig, make_synthetic_scene
from training.trainer import Trainer, prepare_training_data
from utils.config import (
    OVERFIT_CHECK_STEP,
    OVERFIT_HOLDOUT,
    OVERFIT_LAYERS,
    OVERFIT_POINTS,
    OVERFIT_RESOLUTION,
    OVERFIT_STEPS,
    OVERFIT_TOKEN_DIM,
    OVERFIT_VIEWS,
)


@dataclass(frozen=True)
class OverfitFixture:
    network: NetworkConfig
    scene: SceneConfig
    train: TrainConfig
    skin: SkinConfig = field(default_factory=SkinConfig)
    render: RenderConfig = field(default_factory=RenderConfig)
    loss: LossWeights = field(default_factory=LossWeights)


def overfit_fixture() -> OverfitFixture:
    return OverfitFixture(
        network=NetworkConfig(token_dim=OVERFIT_TOKEN_DIM, n_layers=OVERFIT_LAYERS, n_points=OVERFIT_POINTS),
        scene=SceneConfig(
            n_gaussians=OVERFIT_POINTS, n_views=OVERFIT_VIEWS, n_holdout=OVERFIT_HOLDOUT,
            resolution=OVERFIT_RESOLUTION,
        ),
        train=TrainConfig(iterations=OVERFIT_STEPS),
    )


@dataclass
class OverfitResult:
    reports: list[LossReport]
    train_report: dict[str, Any]
    holdout_report: dict[str, Any]

    def loss_ratio(self, step: int = OVERFIT_CHECK_STEP) -> float:
        """Total loss at ``step`` over the step-0 total."""
        return self.reports[step].total / self.reports[0].total

    @property
    def train_psnr(self) -> float:
        return self.train_report["mean"]["psnr"]

    @property
    def holdout_psnr(self) -> float:
        return self.holdout_report["mean"]["psnr"]


def run_overfit(
    template: BodyTemplate,
    fixture: OverfitFixture | None = None,
    iterations: int | None = None,
    pool: TileWorkerPool | None = None,
) -> OverfitResult:
    """Build the scene, train from scratch and score both splits with the infer-mode avatar."""
    fx = fixture or overfit_fixture()
    steps = fx.train.iterations if iterations is None else iterations
    scene = make_synthetic_scene(template, fx.scene, fx.skin, fx.render, pool)
    data = prepare_training_data(scene, fx.network, fx.loss, fx.skin, fx.render)
    trainer = Trainer(data, fx.train, fx.loss, pool=pool)
    logger.info("[OVERFIT] {} steps on {} training views", steps, len(scene.train_indices))
    reports = trainer.fit(steps)

    g, skin = predicted_avatar(trainer.weights, scene, fx.skin)
    result = OverfitResult(
        reports,
        score_views(g, skin, scene, scene.train_indices, fx.render, pool),
        score_views(g, skin, scene, scene.holdout_indices, fx.render, pool),
    )
    logger.info("[OVERFIT] train psnr {:.3f} holdout psnr {:.3f}", result.train_psnr, result.holdout_psnr)
    return result
