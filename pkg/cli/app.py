"""
app.py
------
Argument parsing and the exit-code contract shared by every subcommand:

    0  success
    1  runtime failure (any other LhmError, OSError)
    2  usage or configuration error (argparse errors, ConfigError)
"""

from __future__ import annotations

import argparse
from collections.abc import Callable, Sequence
from pathlib import Path
from typing import Any

from loguru import logger

from cli import commands
from cli.config_file import Overrides, load_config
from cli.suites import SUITES
from utils.errors import ConfigError, LhmError
from utils.settings import configure_logging

# flag attribute -> (config section, key)
FlagMap = dict[str, tuple[str, str]]


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="key = value configuration file")
    parser.add_argument("--print-config", action="store_true", help="print the merged configuration and exit")
    parser.add_argument("--log-level", help="loguru level (default LHM_LOG_LEVEL or INFO)")


def _command(
    subparsers: Any, name: str, func: Callable[..., int], help_text: str, flags: FlagMap | None = None,
) -> argparse.ArgumentParser:
    parser = subparsers.add_parser(name, help=help_text, description=help_text)
    _common(parser)
    parser.set_defaults(func=func, flag_map=flags or {})
    return parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lhm", description="Animatable Gaussian avatars from a single image.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = _command(sub, "make-data", commands.cmd_make_data, "render a synthetic training scene", {
        "gaussians": ("scene", "n_gaussians"),
        "views": ("scene", "n_views"),
        "holdout_views": ("scene", "n_holdout"),
        "resolution": ("scene", "resolution"),
        "seed": ("scene", "seed"),
    })
    p.add_argument("--body", type=Path, help=".lbm body model (default: generated mini body)")
    p.add_argument("--out", type=Path, required=True, help="scene directory to write")
    p.add_argument("--gaussians", type=int)
    p.add_argument("--views", type=int)
    p.add_argument("--holdout-views", type=int)
    p.add_argument("--resolution", type=int)
    p.add_argument("--seed", type=int)

    p = _command(sub, "train", commands.cmd_train, "fit the reconstruction network on a scene", {
        "iterations": ("train", "iterations"),
    })
    p.add_argument("--scene", type=Path, required=True)
    p.add_argument("--out-checkpoint", type=Path, required=True)
    p.add_argument("--resume", type=Path, help="checkpoint to continue from")
    p.add_argument("--iterations", type=int)
    p.add_argument("--log", type=Path, help="loss log (default: train.log next to the checkpoint)")
    p.add_argument("--export-f32", action="store_true", help="write 32-bit weights without optimizer state")

    p = _command(sub, "reconstruct", commands.cmd_reconstruct, "single forward pass to an .lha avatar")
    p.add_argument("--image", type=Path, required=True)
    p.add_argument("--head-crop", type=Path, help="head crop image (default: derived from projected head anchors)")
    p.add_argument("--camera", type=Path, help="camera of the input image, used for the head-crop fallback")
    p.add_argument("--body", type=Path, help=".lbm body model (default: generated mini body)")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--out-avatar", type=Path, required=True)

    p = _command(sub, "animate", commands.cmd_animate, "pose and render an avatar along a motion file")
    p.add_argument("--avatar", type=Path, required=True)
    p.add_argument("--motion", type=Path, required=True)
    p.add_argument("--camera", type=Path, required=True)
    p.add_argument("--body", type=Path, help=".lbm body model (default: generated mini body)")
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--raw", action="store_true", help="also write float64 .npy frames")

    p = _command(sub, "gradcheck", commands.cmd_gradcheck, "finite-difference gradient suites")
    p.add_argument("--suite", choices=sorted(SUITES), required=True)

    p = _command(sub, "eval", commands.cmd_eval, "PSNR / SSIM on holdout or training views")
    p.add_argument("--scene", type=Path, required=True)
    p.add_argument("--checkpoint", type=Path)
    p.add_argument("--holdout", type=commands.parse_views, help="comma-separated view indices")
    p.add_argument("--split", choices=("holdout", "train"), default="holdout", help="which views to score")
    p.add_argument("--gt-bypass", action="store_true", help="score the ground-truth avatar instead")
    p.add_argument("--out", type=Path, help="JSON report path")
    return parser


def flag_overrides(args: argparse.Namespace) -> Overrides:
    overrides: Overrides = {}
    for attr, (section, key) in args.flag_map.items():
        value = getattr(args, attr, None)
        if value is not None:
            overrides.setdefault(section, {})[key] = value
    return overrides


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    configure_logging(args.log_level)

    try:
        run = load_config(args.config, flag_overrides(args))
        if args.print_config:
            print(run.to_text(), end="")
            return 0
        return args.func(args, run)
    except ConfigError as exc:
        logger.error("[CLI] {}", exc)
        return 2
    except (LhmError, OSError) as exc:
        logger.error("[CLI] {}: {}", type(exc).__name__, exc)
        return 1
