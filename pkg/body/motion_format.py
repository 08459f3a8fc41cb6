"""
motion_format.py
----------------
Text motion file:

    # motion frames=F joints=J
    <3J axis-angle values> <3 root-translation values>     (one line per frame)

Values are written with repr so that files roundtrip bit-exactly.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from body.body_model import Pose
from utils.errors import FormatError


def encode_motion(frames: list[Pose]) -> str:
    if not frames:
        raise FormatError("motion needs at least one frame")
    n_joints = frames[0].n_joints
    lines = [f"# motion frames={len(frames)} joints={n_joints}"]
    for k, pose in enumerate(frames):
        if pose.n_joints != n_joints:
            raise FormatError(f"frame {k} has {pose.n_joints} joints, expected {n_joints}")
        values = np.concatenate([pose.axis_angle.reshape(-1), pose.root_translation])
        lines.append(" ".join(repr(float(v)) for v in values))
    return "\n".join(lines) + "\n"


def decode_motion(text: str) -> list[Pose]:
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines or not lines[0].startswith("# motion"):
        raise FormatError("motion file must start with '# motion frames=F joints=J'")
    try:
        header = dict(part.split("=", 1) for part in lines[0][len("# motion"):].split())
        n_frames, n_joints = int(header["frames"]), int(header["joints"])
    except (KeyError, ValueError) as exc:
        raise FormatError(f"bad motion header {lines[0]!r}") from exc
    if n_frames < 1 or n_joints < 1:
        raise FormatError(f"motion header declares {n_frames} frames of {n_joints} joints")
    body = lines[1:]
    if len(body) != n_frames:
        raise FormatError(f"motion header declares {n_frames} frames, found {len(body)}")
    frames = []
    for k, line in enumerate(body):
        try:
            values = np.array([float(v) for v in line.split()])
        except ValueError as exc:
            raise FormatError(f"motion frame {k}: {exc}") from exc
        if values.shape != (3 * n_joints + 3,):
            raise FormatError(f"motion frame {k} has {values.size} values, expected {3 * n_joints + 3}")
        frames.append(Pose(values[:-3].reshape(n_joints, 3), values[-3:]))
    return frames


def write_motion(frames: list[Pose], path: str | Path) -> None:
    Path(path).write_text(encode_motion(frames), encoding="utf-8")


def read_motion(path: str | Path) -> list[Pose]:
    return decode_motion(Path(path).read_text(encoding="utf-8"))
