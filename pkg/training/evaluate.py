"""Holdout evaluation: render the reconstructed avatar at each view's pose and camera, score PSNR / SSIM."""

from __future__ import annotations

import json
from collections.abc import Sequence
from pathlib import Path
from typing import Any, Literal

import numpy as np
from loguru import logger

from avatar.gaussians import GaussianSet
from network.config import NetworkConfig
from network.lhm import reconstruct
from network.weights import NetworkWeights
from performance.thread_manager import TileWorkerPool
from rendering.config import RenderConfig
from skinning.config import SkinConfig
from training.metrics import psnr, ssim
from training.scene import SyntheticScene, network_inputs, pose_avatar, render_view
from utils.errors import ConfigError


def predicted_avatar(
    weights: NetworkWeights, scene: SyntheticScene, skin_cfg: SkinConfig = SkinConfig(),
) -> tuple[GaussianSet, np.ndarray]:
    """Infer-mode reconstruction from the scene's source view, with skin weights attached."""
    cfg: NetworkConfig = weights.cfg
    image, crop = network_inputs(scene.source.rgb, scene.source.head_box, cfg)
    g = reconstruct(image, crop, scene.anchors, cfg, weights)
    skin = skin_cfg.weights_for(skin_cfg.build(scene.template), g.positions.data, scene.anchors.positions)
    return g, skin


def score_views(
    g: GaussianSet,
    skin: np.ndarray,
    scene: SyntheticScene,
    views: Sequence[int],
    render_cfg: RenderConfig = RenderConfig(),
    pool: TileWorkerPool | None = None,
) -> dict[str, Any]:
    rows = []
    for k in views:
        view = scene.views[k]
        rgb, _ = render_view(pose_avatar(g, skin, scene.template, view.pose), view.camera, render_cfg, pool)
        rows.append({"view": int(k), "psnr": psnr(rgb, view.rgb), "ssim": ssim(rgb, view.rgb)})
        logger.debug("[EVAL] view {} psnr {:.3f} ssim {:.4f}", k, rows[-1]["psnr"], rows[-1]["ssim"])
    means = {
        "psnr": float(np.mean([r["psnr"] for r in rows])) if rows else float("nan"),
        "ssim": float(np.mean([r["ssim"] for r in rows])) if rows else float("nan"),
    }
    return {"rows": rows, "mean": means}


def resolve_holdout(scene: SyntheticScene, holdout: Sequence[int] | None) -> list[int]:
    if holdout is None:
        return scene.holdout_indices
    known = {v.index for v in scene.views}
    unknown = sorted(set(holdout) - known)
    if unknown:
        raise ConfigError(f"holdout views {unknown} do not exist in the scene")
    overlap = sorted(set(holdout) & set(scene.train_indices))
    if overlap:
        raise ConfigError(f"holdout views {overlap} are training views")
    return list(holdout)


def evaluate(
    weights: NetworkWeights | None,
    scene: SyntheticScene,
    holdout: Sequence[int] | None = None,
    skin_cfg: SkinConfig = SkinConfig(),
    render_cfg: RenderConfig = RenderConfig(),
    pool: TileWorkerPool | None = None,
    bypass_gt: bool = False,
    split: Literal["holdout", "train"] = "holdout",
) -> dict[str, Any]:
    """
    Metrics table over the holdout views (default: the scene's own holdout split).

    ``split="train"`` scores the training views instead, for checking how well
    a run fitted what it saw; an explicit ``holdout`` list is rejected there.

    ``bypass_gt`` scores the ground-truth avatar instead of the network output;
    it goes through the same posing and rendering path the scene was made with,
    so every row reports the PSNR cap.
    """
    if split == "train":
        if holdout is not None:
            raise ConfigError("a holdout list cannot be combined with the training split")
        views = scene.train_indices
    else:
        views = resolve_holdout(scene, holdout)
    if bypass_gt:
        g, skin = scene.gt, scene.gt_skin
    elif weights is None:
        raise ConfigError("evaluation needs a checkpoint unless the ground-truth bypass is requested")
    else:
        g, skin = predicted_avatar(weights, scene, skin_cfg)
    report = score_views(g, skin, scene, views, render_cfg, pool)
    report["source"] = "ground_truth" if bypass_gt else "network"
    report["split"] = split
    mean = report["mean"]
    logger.info("[EVAL] {} {} views: mean psnr {:.3f} ssim {:.4f}", len(views), split, mean["psnr"], mean["ssim"])
    return report


def write_report(report: dict[str, Any], path: str | Path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(report, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return path
