"""
scene.py
--------
Procedural synthetic scenes rendered by the system's own splatting renderer.

A scene is a ground-truth canonical avatar anchored on sampled body-surface
points, plus views at evenly spaced azimuths (training) and half-step offset
azimuths (holdout). View 0 is the frontal, rest-pose source view.

Scene directory:
    scene.json            config, anchor seed, per-view split and head box
    body.lbm              body template
    gt_avatar.lha         ground-truth Gaussians with skin weights
    view_XXX.cam          camera text block
    view_XXX.motion       single-frame motion text
    view_XXX_rgb.npy      float64 dumps (bit-exact)
    view_XXX_mask.npy
    view_XXX_rgb.png      8-bit previews
    view_XXX_mask.png
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, model_validator

from avatar.gaussians import GaussianSet
from avatar.lha_format import read_avatar, write_avatar
from body.body_model import BodyTemplate, Pose, SampledPoints, forward_kinematics, sample_surface_points
from body.lbm_format import load_body_model, write_body_model
from body.motion_format import read_motion, write_motion
from network.config import NetworkConfig
from performance.thread_manager import TileWorkerPool
from rendering.camera import Camera, load_camera, orbit_camera, write_camera
from rendering.config import RenderConfig
from rendering.image_io import read_raw, write_png, write_raw
from rendering.rasterizer import render
from skinning.config import SkinConfig
from skinning.lbs import blend_transforms, pose_gaussians
from skinning.skin_field import query_weights
from utils.config import (
    ACAP_THRESHOLD,
    FOCAL_RATIO,
    GT_COLOR_RANGE,
    GT_OPACITY_RANGE,
    GT_SCALE_RANGE,
    GT_SH_HIGHER_STD,
    HEAD_CROP_EXPAND,
    REGION_HEAD,
    SCENE_AVATAR,
    SCENE_BODY,
    SCENE_CAMERA_DISTANCE,
    SCENE_FILE,
    SCENE_GAUSSIANS,
    SCENE_HOLDOUT,
    SCENE_LOOK_AT,
    SCENE_POSE_MAX_ANGLE,
    SCENE_RESOLUTION,
    SCENE_SEED,
    SCENE_VIEWS,
    SH_C0,
)
from utils.errors import DegenerateError, FormatError

HeadBox = tuple[float, float, float]   # (x0, y0, side) in pixels


class SceneConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    n_gaussians: int = Field(default=SCENE_GAUSSIANS, ge=1)
    n_views: int = Field(default=SCENE_VIEWS, ge=1)
    n_holdout: int = Field(default=SCENE_HOLDOUT, ge=0)
    resolution: int = Field(default=SCENE_RESOLUTION, ge=8)
    seed: int = Field(default=SCENE_SEED, ge=0)
    pose_max_angle: float = Field(default=SCENE_POSE_MAX_ANGLE, ge=0.0)
    camera_distance: float = Field(default=SCENE_CAMERA_DISTANCE, gt=0.0)
    focal_ratio: float = Field(default=FOCAL_RATIO, gt=0.0)
    offset_max: float = Field(default=ACAP_THRESHOLD, ge=0.0)

    @model_validator(mode="after")
    def offsets_within_cap(self) -> SceneConfig:
        if self.offset_max > ACAP_THRESHOLD:
            raise ValueError(f"ground-truth offsets must stay within {ACAP_THRESHOLD} m")
        return self


@dataclass(frozen=True)
class View:
    index: int
    camera: Camera
    pose: Pose
    rgb: np.ndarray        # (H, W, 3)
    mask: np.ndarray       # (H, W, 1)
    head_box: HeadBox
    holdout: bool


@dataclass(frozen=True)
class SyntheticScene:
    config: SceneConfig
    template: BodyTemplate
    anchors: SampledPoints
    gt: GaussianSet
    gt_skin: np.ndarray    # (N, J)
    views: list[View]

    @property
    def source(self) -> View:
        return self.views[0]

    @property
    def train_indices(self) -> list[int]:
        return [v.index for v in self.views if not v.holdout]

    @property
    def holdout_indices(self) -> list[int]:
        return [v.index for v in self.views if v.holdout]


# ── Geometry helpers ──────────────────────────────────────────────────────────


def project_points(camera: Camera, points: np.ndarray) -> np.ndarray:
    """World points -> (N, 2) pixel coordinates; points behind the near plane raise."""
    cam = points @ camera.rotation.T + camera.translation
    if (cam[:, 2] <= camera.near).any():
        raise DegenerateError("head points lie behind the camera near plane")
    return np.stack([camera.fx * cam[:, 0] / cam[:, 2] + camera.cx, camera.fy * cam[:, 1] / cam[:, 2] + camera.cy], axis=1)


def head_box(camera: Camera, points: np.ndarray, expand: float = HEAD_CROP_EXPAND) -> HeadBox:
    """Square box around the projected head points, side expanded by ``expand``."""
    if len(points) == 0:
        raise DegenerateError("no head-labelled points to derive a head crop from")
    uv = project_points(camera, points)
    lo, hi = uv.min(axis=0), uv.max(axis=0)
    center = 0.5 * (lo + hi)
    side = max(float((hi - lo).max()) * expand, 1.0)
    return (float(center[0] - 0.5 * side), float(center[1] - 0.5 * side), side)


def crop_head(image: np.ndarray, box: HeadBox, resolution: int,
              background: tuple[float, float, float] = RenderConfig().background) -> np.ndarray:
    """Resample ``box`` of ``image`` to resolution × resolution (bilinear, background outside)."""
    x0, y0, side = box
    s = side / resolution
    inverse = np.array([[s, 0.0, x0 + 0.5 * s], [0.0, s, y0 + 0.5 * s]])
    out = cv2.warpAffine(
        np.ascontiguousarray(image, dtype=np.float64), inverse, (resolution, resolution),
        flags=cv2.INTER_LINEAR | cv2.WARP_INVERSE_MAP,
        borderMode=cv2.BORDER_CONSTANT, borderValue=tuple(float(c) for c in background),
    )
    return np.clip(out.reshape(resolution, resolution, -1), 0.0, 1.0)


def fit_image(image: np.ndarray, resolution: int) -> np.ndarray:
    if image.shape[:2] == (resolution, resolution):
        return np.asarray(image, dtype=np.float64)
    out = cv2.resize(np.ascontiguousarray(image, dtype=np.float64), (resolution, resolution), interpolation=cv2.INTER_AREA)
    return out.reshape(resolution, resolution, -1)


def network_inputs(image: np.ndarray, box: HeadBox, cfg: NetworkConfig) -> tuple[np.ndarray, np.ndarray]:
    """Body image and head crop at the network's resolutions."""
    return fit_image(image, cfg.body_resolution), crop_head(image, box, cfg.head_resolution)


# ── Generation ────────────────────────────────────────────────────────────────


def _ground_truth(anchors: SampledPoints, cfg: SceneConfig, rng: np.random.Generator) -> GaussianSet:
    n = len(anchors)
    directions = rng.normal(size=(n, 3))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    # margin keeps f32-rounded offsets inside the hinge
    positions = anchors.positions + directions * rng.uniform(0.0, 0.95 * cfg.offset_max, (n, 1))
    rotations = rng.normal(size=(n, 4))
    rotations /= np.linalg.norm(rotations, axis=1, keepdims=True)
    scales = rng.uniform(*GT_SCALE_RANGE, (n, 3))
    opacities = rng.uniform(*GT_OPACITY_RANGE, (n, 1))
    sh = np.zeros((n, 12))
    sh[:, :3] = (rng.uniform(*GT_COLOR_RANGE, (n, 3)) - 0.5) / SH_C0
    sh[:, 3:] = rng.normal(0.0, GT_SH_HIGHER_STD, (n, 9))
    return GaussianSet.from_arrays(positions, rotations, scales, opacities, sh).rounded_f32().validate()


def _view_pose(k: int, n_joints: int, cfg: SceneConfig, rng: np.random.Generator) -> Pose:
    if k == 0:
        return Pose.identity(n_joints)
    axis_angle = rng.uniform(-cfg.pose_max_angle, cfg.pose_max_angle, (n_joints, 3))
    axis_angle[0] = 0.0
    return Pose(axis_angle, np.zeros(3))


def _azimuth(k: int, cfg: SceneConfig) -> float:
    if k < cfg.n_views:
        return 2.0 * np.pi * k / cfg.n_views
    return 2.0 * np.pi * (k - cfg.n_views + 0.5) / cfg.n_holdout


def pose_avatar(g: GaussianSet, skin: np.ndarray, template: BodyTemplate, pose: Pose) -> GaussianSet:
    return pose_gaussians(g, skin, forward_kinematics(template, pose))


def render_view(
    posed: GaussianSet, camera: Camera, render_cfg: RenderConfig, pool: TileWorkerPool | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    rgb, alpha = render(posed, camera, render_cfg.background, render_cfg.tile_size, pool)
    return rgb.data.copy(), alpha.data.copy()


def posed_head_vertices(template: BodyTemplate, pose: Pose) -> np.ndarray:
    transforms = blend_transforms(template.skin_weights, forward_kinematics(template, pose))
    homogeneous = np.concatenate([template.vertices, np.ones((template.n_vertices, 1))], axis=1)
    posed = np.einsum("vab,vb->va", transforms, homogeneous)[:, :3]
    return posed[template.regions == REGION_HEAD]


def head_points(template: BodyTemplate, anchors: SampledPoints, anchor_skin: np.ndarray, pose: Pose) -> np.ndarray:
    """Head-labelled anchors skinned to ``pose``; the posed head vertices when no anchor is on the head."""
    mask = anchors.head_mask
    if not mask.any():
        return posed_head_vertices(template, pose)
    transforms = blend_transforms(anchor_skin[mask], forward_kinematics(template, pose))
    points = anchors.positions[mask]
    return np.einsum("nab,nb->na", transforms[:, :3, :3], points) + transforms[:, :3, 3]


def make_synthetic_scene(
    template: BodyTemplate,
    cfg: SceneConfig = SceneConfig(),
    skin_cfg: SkinConfig = SkinConfig(),
    render_cfg: RenderConfig = RenderConfig(),
    pool: TileWorkerPool | None = None,
) -> SyntheticScene:
    anchors = sample_surface_points(template, cfg.n_gaussians, cfg.seed)
    rng = np.random.default_rng([cfg.seed, 1])
    gt = _ground_truth(anchors, cfg, rng)
    field = skin_cfg.build(template)
    gt_skin = skin_cfg.weights_for(field, gt.positions.data, anchors.positions)
    gt_skin = gt_skin.astype(np.float32).astype(np.float64)
    anchor_skin = query_weights(field, anchors.positions)

    views = []
    for k in range(cfg.n_views + cfg.n_holdout):
        pose = _view_pose(k, template.n_joints, cfg, rng)
        camera = orbit_camera(_azimuth(k, cfg), cfg.camera_distance, np.array(SCENE_LOOK_AT),
                              cfg.resolution, cfg.resolution, cfg.focal_ratio)
        posed = pose_avatar(gt, gt_skin, template, pose)
        rgb, mask = render_view(posed, camera, render_cfg, pool)
        box = head_box(camera, head_points(template, anchors, anchor_skin, pose))
        views.append(View(k, camera, pose, rgb, mask, box, holdout=k >= cfg.n_views))
        logger.debug("[SCENE] view {} rendered (coverage {:.3f})", k, float(mask.mean()))
    logger.info("[SCENE] {} Gaussians, {} training + {} holdout views at {}px",
                cfg.n_gaussians, cfg.n_views, cfg.n_holdout, cfg.resolution)
    return SyntheticScene(cfg, template, anchors, gt, gt_skin, views)


# ── Directory I/O ─────────────────────────────────────────────────────────────


def _stem(k: int) -> str:
    return f"view_{k:03d}"


def write_scene(scene: SyntheticScene, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_body_model(scene.template, out / SCENE_BODY)
    write_avatar(scene.gt, out / SCENE_AVATAR, scene.gt_skin, np.arange(scene.template.n_joints))
    for view in scene.views:
        stem = _stem(view.index)
        write_camera(view.camera, out / f"{stem}.cam")
        write_motion([view.pose], out / f"{stem}.motion")
        write_raw(out / f"{stem}_rgb.npy", view.rgb)
        write_raw(out / f"{stem}_mask.npy", view.mask)
        write_png(out / f"{stem}_rgb.png", view.rgb)
        write_png(out / f"{stem}_mask.png", view.mask)
    manifest = {
        "config": scene.config.model_dump(),
        "views": [{"index": v.index, "holdout": v.holdout, "head_box": list(v.head_box)} for v in scene.views],
    }
    (out / SCENE_FILE).write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    logger.info("[SCENE] wrote {} views to {}", len(scene.views), out)
    return out


def read_scene(scene_dir: str | Path) -> SyntheticScene:
    root = Path(scene_dir)
    try:
        manifest = json.loads((root / SCENE_FILE).read_text(encoding="utf-8"))
        cfg = SceneConfig(**manifest["config"])
        entries = manifest["views"]
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{root / SCENE_FILE}: {exc}") from exc
    template = load_body_model(root / SCENE_BODY)
    avatar = read_avatar(root / SCENE_AVATAR)
    if avatar.skin_weights is None or avatar.n_joints != template.n_joints:
        raise FormatError(f"{SCENE_AVATAR}: skin block does not match {template.n_joints} body joints")
    anchors = sample_surface_points(template, cfg.n_gaussians, cfg.seed)
    views = []
    for entry in entries:
        k = int(entry["index"])
        stem = _stem(k)
        frames = read_motion(root / f"{stem}.motion")
        views.append(View(
            k, load_camera(root / f"{stem}.cam"), frames[0],
            read_raw(root / f"{stem}_rgb.npy"), read_raw(root / f"{stem}_mask.npy"),
            tuple(float(v) for v in entry["head_box"]), bool(entry["holdout"]),
        ))
    return SyntheticScene(cfg, template, anchors, avatar.gaussians, avatar.skin_weights, views)
