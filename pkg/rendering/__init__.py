"""Differentiable tile-based Gaussian splatting."""

from rendering.brute_force import brute_force_render
from rendering.camera import Camera, load_camera, orbit_camera, write_camera
from rendering.config import RenderConfig
from rendering.image_io import load_image, read_png, read_raw, write_png, write_raw
from rendering.projection import Projection, Splat2D, project_gaussian, project_splats
from rendering.rasterizer import render, render_image

__all__ = [
    "Camera",
    "Projection",
    "RenderConfig",
    "Splat2D",
    "brute_force_render",
    "load_camera",
    "load_image",
    "orbit_camera",
    "project_gaussian",
    "project_splats",
    "read_png",
    "read_raw",
    "render",
    "render_image",
    "write_camera",
    "write_png",
    "write_raw",
]
