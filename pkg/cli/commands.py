"""
commands.py
-----------
One function per subcommand. Each takes the parsed flags and the merged
RunConfig and returns a process exit code; failures surface as LhmError
subclasses and are mapped to exit codes by cli.app.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np
from loguru import logger
from tqdm import tqdm

from avatar.lha_format import read_avatar, write_avatar
from body.body_model import BodyTemplate, Pose, forward_kinematics, sample_surface_points
from body.generator import generate_minibody
from body.lbm_format import load_body_model
from body.motion_format import read_motion
from cli.config_file import RunConfig
from cli.suites import assert_passed, run_suite
from network.config import NetworkConfig
from network.lhm import reconstruct
from performance.fps_optimizer import FPSOptimizer
from performance.thread_manager import shared_pool
from rendering.camera import Camera, load_camera, orbit_camera
from rendering.image_io import load_image, write_png, write_raw
from skinning.lbs import pose_gaussians
from skinning.skin_field import query_weights
from training.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from training.evaluate import evaluate, write_report
from training.scene import (
    SyntheticScene,
    crop_head,
    fit_image,
    head_box,
    head_points,
    make_synthetic_scene,
    read_scene,
    render_view,
    write_scene,
)
from training.trainer import Trainer, prepare_training_data
from utils.config import FOCAL_RATIO, SCENE_CAMERA_DISTANCE, SCENE_FILE, SCENE_LOOK_AT, SCENE_SEED, TRAIN_LOG_FILE
from utils.errors import ConfigError


def _require_file(path: Path | None, what: str) -> Path:
    if path is None or not Path(path).is_file():
        raise ConfigError(f"{what} {path} does not exist")
    return Path(path)


def _body(path: Path | None) -> BodyTemplate:
    return generate_minibody() if path is None else load_body_model(_require_file(path, "body model"))


def _scene_dir(path: Path) -> Path:
    if not (Path(path) / SCENE_FILE).is_file():
        raise ConfigError(f"{path} is not a scene directory (no {SCENE_FILE})")
    return Path(path)


# ── make-data ─────────────────────────────────────────────────────────────────


def cmd_make_data(args: argparse.Namespace, run: RunConfig) -> int:
    template = _body(args.body)
    scene = make_synthetic_scene(template, run.scene, run.skin, run.render, shared_pool())
    out = write_scene(scene, args.out)
    print(f"scene {out}: {len(scene.train_indices)} training + {len(scene.holdout_indices)} holdout views")
    return 0


# ── train ─────────────────────────────────────────────────────────────────────


def _train_network(run: RunConfig, scene: SyntheticScene, resume: Checkpoint | None) -> NetworkConfig:
    """The configured network, or one sized to the scene (or the resumed checkpoint) when none was given."""
    if "network" in run.explicit:
        return run.network
    if resume is not None:
        return resume.cfg
    return NetworkConfig(**{**run.network.model_dump(), "n_points": len(scene.anchors)})


def cmd_train(args: argparse.Namespace, run: RunConfig) -> int:
    scene_dir = _scene_dir(args.scene)
    resume = load_checkpoint(_require_file(args.resume, "checkpoint")) if args.resume is not None else None
    out = Path(args.out_checkpoint)
    out.parent.mkdir(parents=True, exist_ok=True)
    log_path = Path(args.log) if args.log is not None else out.parent / TRAIN_LOG_FILE

    scene = read_scene(scene_dir)
    data = prepare_training_data(scene, _train_network(run, scene, resume), run.loss, run.skin, run.render)
    trainer = Trainer(data, run.train, run.loss, resume, shared_pool())
    logger.info("[TRAIN] {} parameters, {} steps from step {}",
                trainer.weights.parameter_count(), run.train.iterations, trainer.state.step)
    with log_path.open("a" if resume is not None else "w", encoding="utf-8") as log:
        reports = trainer.fit(run.train.iterations, log=log, dump_dir=out.parent)
    save_checkpoint(trainer.checkpoint(), out, export_f32=args.export_f32)
    if reports:
        print(reports[-1].to_record(trainer.state.step - 1))
    else:
        print(f"step={trainer.state.step} no iterations run")
    return 0


# ── reconstruct ───────────────────────────────────────────────────────────────


def _fallback_crop(image: np.ndarray, points: np.ndarray, camera: Camera | None, resolution: int,
                   run: RunConfig) -> np.ndarray:
    """Head crop from the projected rest-pose head anchors (or head vertices) seen by ``camera``."""
    h, w = image.shape[:2]
    if camera is None:
        camera = orbit_camera(0.0, SCENE_CAMERA_DISTANCE, np.array(SCENE_LOOK_AT), w, h, FOCAL_RATIO)
    if (camera.width, camera.height) != (w, h):
        raise ConfigError(f"camera is {camera.width}x{camera.height}, image is {w}x{h}")
    return crop_head(image, head_box(camera, points), resolution, run.render.background)


def cmd_reconstruct(args: argparse.Namespace, run: RunConfig) -> int:
    image_path = _require_file(args.image, "image")
    ckpt = load_checkpoint(_require_file(args.checkpoint, "checkpoint"))
    cfg = ckpt.cfg
    if "network" in run.explicit and run.network != cfg:
        raise ConfigError("checkpoint network configuration differs from the configured one")
    camera = load_camera(_require_file(args.camera, "camera")) if args.camera is not None else None
    template = _body(args.body)

    image = load_image(image_path)
    if image.shape[2] != 3:
        raise ConfigError(f"{image_path} has {image.shape[2]} channels, expected RGB")
    anchors = sample_surface_points(template, cfg.n_points, int(ckpt.meta.get("scene_seed", SCENE_SEED)))
    field = run.skin.build(template)
    if args.head_crop is not None:
        crop = fit_image(load_image(_require_file(args.head_crop, "head crop")), cfg.head_resolution)
    else:
        rest = head_points(template, anchors, query_weights(field, anchors.positions), Pose.identity(template.n_joints))
        crop = _fallback_crop(image, rest, camera, cfg.head_resolution, run)
        logger.info("[CLI] head crop derived from {} projected head anchors", int(anchors.head_mask.sum()))

    start = time.perf_counter()
    g = reconstruct(fit_image(image, cfg.body_resolution), crop, anchors, cfg, ckpt.weights)
    elapsed = time.perf_counter() - start
    skin = run.skin.weights_for(field, g.positions.data, anchors.positions)

    out = Path(args.out_avatar)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_avatar(g, out, skin, np.arange(template.n_joints))
    logger.info("[CLI] reconstructed {} Gaussians in {:.3f} s", len(g), elapsed)
    print(f"avatar {out}: {len(g)} Gaussians, forward pass {elapsed:.3f} s")
    return 0


# ── animate ───────────────────────────────────────────────────────────────────


def cmd_animate(args: argparse.Namespace, run: RunConfig) -> int:
    avatar = read_avatar(_require_file(args.avatar, "avatar"))
    frames = read_motion(_require_file(args.motion, "motion"))
    camera = load_camera(_require_file(args.camera, "camera"))
    template = _body(args.body)
    if avatar.skin_weights is None:
        raise ConfigError(f"{args.avatar} carries no skinning block")
    motion_joints = frames[0].n_joints
    if avatar.n_joints != motion_joints:
        raise ConfigError(f"avatar is skinned to {avatar.n_joints} joints, motion drives {motion_joints}")
    if template.n_joints != motion_joints:
        raise ConfigError(f"body model has {template.n_joints} joints, motion drives {motion_joints}")

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    meter = FPSOptimizer()
    pool = shared_pool()
    for k, pose in enumerate(tqdm(frames, desc="animate", unit="frame", disable=not sys.stderr.isatty())):
        posed = pose_gaussians(avatar.gaussians, avatar.skin_weights, forward_kinematics(template, pose))
        rgb, _ = render_view(posed, camera, run.render, pool)
        write_png(out / f"frame_{k:04d}.png", rgb)
        if args.raw:
            write_raw(out / f"frame_{k:04d}.npy", rgb)
        meter.tick()
    logger.info("[ANIMATE] {}", meter.summary("frames"))
    print(f"animate {out}: {meter.count} frames, {meter.average:.2f} frames/s")
    return 0


# ── gradcheck ─────────────────────────────────────────────────────────────────


def cmd_gradcheck(args: argparse.Namespace, run: RunConfig) -> int:
    outcomes = run_suite(args.suite)
    for outcome in outcomes:
        print(outcome.line())
    worst = max(outcomes, key=lambda o: o.error / o.tolerance)
    print(f"suite {args.suite}: worst {worst.name} {worst.error:.3e}")
    assert_passed(outcomes)
    return 0


# ── eval ──────────────────────────────────────────────────────────────────────


def parse_views(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated view indices, got {text!r}") from exc


def cmd_eval(args: argparse.Namespace, run: RunConfig) -> int:
    scene_dir = _scene_dir(args.scene)
    weights = None
    if not args.gt_bypass:
        weights = load_checkpoint(_require_file(args.checkpoint, "checkpoint")).weights
    scene = read_scene(scene_dir)
    report = evaluate(
        weights, scene, args.holdout, run.skin, run.render, shared_pool(), bypass_gt=args.gt_bypass, split=args.split,
    )
    for row in report["rows"]:
        print(f"view {row['view']:3d}  psnr {row['psnr']:8.3f}  ssim {row['ssim']:.4f}")
    print(f"mean      psnr {report['mean']['psnr']:8.3f}  ssim {report['mean']['ssim']:.4f}")
    if args.out is not None:
        write_report(report, args.out)
    return 0
