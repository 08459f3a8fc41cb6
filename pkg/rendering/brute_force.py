"""
brute_force.py
--------------
Reference renderer: every pixel walks every in-front splat in depth order
with a scalar front-to-back loop. No tiling, no footprint culling. The
Gaussian falloff is evaluated from the inverted 2D covariance directly.
"""

from __future__ import annotations

import math

import numpy as np

from avatar.gaussians import GaussianSet
from rendering.camera import Camera
from rendering.projection import project_splats
from utils.config import ALPHA_CLIP, ALPHA_SKIP, BACKGROUND, TRANSMITTANCE_MIN


def composite_pixel(
    x: float,
    y: float,
    splats: list[tuple[np.ndarray, np.ndarray, float, np.ndarray]],
    background: np.ndarray,
) -> tuple[np.ndarray, float]:
    """Front-to-back blend of (mean2d, inverse cov2d, opacity, color) splats at one pixel centre."""
    color = np.zeros(3)
    t = 1.0
    for mean, inv_cov, rho, c in splats:
        d = np.array([x - mean[0], y - mean[1]])
        a = min(ALPHA_CLIP, rho * math.exp(-0.5 * float(d @ inv_cov @ d)))
        if a < ALPHA_SKIP:
            continue
        t_next = t * (1.0 - a)
        if t_next < TRANSMITTANCE_MIN:
            break
        color += c * a * t
        t = t_next
    return color + t * background, 1.0 - t


def brute_force_render(
    g: GaussianSet,
    camera: Camera,
    background: tuple[float, float, float] | np.ndarray = BACKGROUND,
) -> tuple[np.ndarray, np.ndarray]:
    """(rgb (H, W, 3), alpha (H, W, 1)) as plain arrays."""
    bg = np.asarray(background, dtype=np.float64)
    proj = project_splats(g, camera)
    splats = [
        (proj.mean2d[i], np.linalg.inv(proj.cov2d[i]), float(proj.opacity[i]), proj.colors[i])
        for i in proj.depth_sorted()
    ]

    rgb = np.empty((camera.height, camera.width, 3))
    alpha = np.empty((camera.height, camera.width, 1))
    for y in range(camera.height):
        for x in range(camera.width):
            rgb[y, x], alpha[y, x, 0] = composite_pixel(float(x), float(y), splats, bg)
    return np.clip(rgb, 0.0, 1.0), np.clip(alpha, 0.0, 1.0)
