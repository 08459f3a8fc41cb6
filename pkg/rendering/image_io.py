"""
image_io.py
-----------
8-bit lossless PNG export (OpenCV) and raw float dumps of image buffers.
"""

from __future__ import annotations

from pathlib import Path

import cv2
import numpy as np

from utils.errors import FormatError, ShapeError


def to_uint8(image: np.ndarray) -> np.ndarray:
    return np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_png(path: str | Path, image: np.ndarray) -> None:
    """Write an (H, W, 3) RGB or (H, W, 1) / (H, W) single-channel image."""
    image = np.asarray(image)
    if image.ndim == 3 and image.shape[2] == 1:
        image = image[:, :, 0]
    if image.ndim == 3 and image.shape[2] == 3:
        pixels = cv2.cvtColor(to_uint8(image), cv2.COLOR_RGB2BGR)
    elif image.ndim == 2:
        pixels = to_uint8(image)
    else:
        raise ShapeError(f"cannot write image of shape {image.shape}")
    if not cv2.imwrite(str(path), pixels):
        raise OSError(f"could not write {path}")


def read_png(path: str | Path) -> np.ndarray:
    """Float image in [0, 1]; RGB as (H, W, 3), grayscale as (H, W, 1)."""
    pixels = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if pixels is None:
        raise FormatError(f"could not decode image {path}")
    if pixels.ndim == 2:
        return (pixels.astype(np.float64) / 255.0)[:, :, None]
    if pixels.shape[2] == 4:
        pixels = pixels[:, :, :3]
    return cv2.cvtColor(pixels, cv2.COLOR_BGR2RGB).astype(np.float64) / 255.0


def write_raw(path: str | Path, image: np.ndarray) -> None:
    np.save(str(path), np.asarray(image, dtype=np.float64), allow_pickle=False)


def read_raw(path: str | Path) -> np.ndarray:
    image = np.load(str(path), allow_pickle=False)
    if image.ndim != 3 or not np.isfinite(image).all():
        raise FormatError(f"{path}: expected a finite (H, W, C) array")
    return image.astype(np.float64)


def load_image(path: str | Path) -> np.ndarray:
    """Raw .npy dumps load bit-exactly; anything else goes through OpenCV."""
    return read_raw(path) if Path(path).suffix == ".npy" else read_png(path)
