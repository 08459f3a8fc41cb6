"""
camera.py
---------
Pinhole camera: intrinsics, rigid world-to-camera extrinsics and the
documented text block format.

Pixel (0, 0) is the top-left pixel centre; the camera looks along +z with
+y pointing down the image.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from utils.config import CAMERA_NEAR, FOCAL_RATIO
from utils.errors import FormatError, InvariantError

_RIGID_ATOL = 1e-6
_SCALAR_KEYS = ("width", "height", "fx", "fy", "cx", "cy", "near")


@dataclass(frozen=True)
class Camera:
    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float
    world_to_camera: np.ndarray = field(default_factory=lambda: np.eye(4))
    near: float = CAMERA_NEAR

    def __post_init__(self) -> None:
        extrinsics = np.array(self.world_to_camera, dtype=np.float64)
        extrinsics.flags.writeable = False
        object.__setattr__(self, "world_to_camera", extrinsics)
        self.validate()

    def validate(self) -> None:
        if self.width < 1 or self.height < 1:
            raise InvariantError("camera", f"image size {self.width}x{self.height} is empty")
        if not (self.fx > 0.0 and self.fy > 0.0):
            raise InvariantError("camera", f"focal lengths must be positive, got {self.fx}, {self.fy}")
        if not self.near > 0.0:
            raise InvariantError("camera", f"near plane must be positive, got {self.near}")
        m = self.world_to_camera
        if m.shape != (4, 4) or not np.isfinite(m).all():
            raise InvariantError("camera", "world_to_camera must be a finite 4x4 matrix")
        rot = m[:3, :3]
        if (
            np.abs(rot.T @ rot - np.eye(3)).max() > _RIGID_ATOL
            or abs(np.linalg.det(rot) - 1.0) > _RIGID_ATOL
            or np.abs(m[3] - [0.0, 0.0, 0.0, 1.0]).max() > 0.0
        ):
            raise InvariantError("camera", "world_to_camera is not rigid")

    @property
    def rotation(self) -> np.ndarray:
        return self.world_to_camera[:3, :3]

    @property
    def translation(self) -> np.ndarray:
        return self.world_to_camera[:3, 3]

    @property
    def center(self) -> np.ndarray:
        """Camera position in world space."""
        return -self.rotation.T @ self.translation

    @classmethod
    def look_at(
        cls,
        eye: np.ndarray,
        target: np.ndarray,
        width: int,
        height: int,
        up: np.ndarray = np.array([0.0, 1.0, 0.0]),
        focal_ratio: float = FOCAL_RATIO,
        near: float = CAMERA_NEAR,
    ) -> Camera:
        eye, target = np.asarray(eye, dtype=np.float64), np.asarray(target, dtype=np.float64)
        z = target - eye
        z = z / np.linalg.norm(z)
        x = np.cross(z, up)
        x = x / np.linalg.norm(x)
        y = np.cross(z, x)
        extrinsics = np.eye(4)
        extrinsics[:3, :3] = np.stack([x, y, z])
        extrinsics[:3, 3] = -extrinsics[:3, :3] @ eye
        focal = focal_ratio * width
        return cls(width, height, focal, focal, width / 2.0, height / 2.0, extrinsics, near)

    # ── Text block ────────────────────────────────────────────────────────────

    def to_text(self) -> str:
        lines = [f"{key} {getattr(self, key)!r}" for key in _SCALAR_KEYS]
        lines.append("world_to_camera")
        lines += [" ".join(repr(float(v)) for v in row) for row in self.world_to_camera]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> Camera:
        lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.strip().startswith("#")]
        values: dict[str, float] = {}
        try:
            for key, line in zip(_SCALAR_KEYS, lines):
                name, raw = line.split()
                if name != key:
                    raise FormatError(f"camera file: expected '{key}', found '{name}'")
                values[key] = float(raw)
            if len(lines) != len(_SCALAR_KEYS) + 5 or lines[len(_SCALAR_KEYS)] != "world_to_camera":
                raise FormatError("camera file: expected 'world_to_camera' followed by 4 matrix rows")
            rows = [[float(v) for v in ln.split()] for ln in lines[len(_SCALAR_KEYS) + 1 :]]
        except ValueError as exc:
            raise FormatError(f"camera file: {exc}") from exc
        if any(len(r) != 4 for r in rows):
            raise FormatError("camera file: matrix rows must have 4 entries")
        return cls(
            int(values["width"]), int(values["height"]), values["fx"], values["fy"],
            values["cx"], values["cy"], np.array(rows), values["near"],
        )


def load_camera(path: str | Path) -> Camera:
    return Camera.from_text(Path(path).read_text(encoding="utf-8"))


def write_camera(camera: Camera, path: str | Path) -> None:
    Path(path).write_text(camera.to_text(), encoding="utf-8")


def orbit_camera(
    azimuth: float,
    distance: float,
    target: np.ndarray,
    width: int,
    height: int,
    focal_ratio: float = FOCAL_RATIO,
) -> Camera:
    """Camera on a horizontal circle around ``target``; azimuth 0 is the +z (frontal) side."""
    target = np.asarray(target, dtype=np.float64)
    eye = target + distance * np.array([np.sin(azimuth), 0.0, np.cos(azimuth)])
    return Camera.look_at(eye, target, width, height, focal_ratio=focal_ratio)
