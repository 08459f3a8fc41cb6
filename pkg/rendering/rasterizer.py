"""
rasterizer.py
-------------
Tile-based, depth-ordered alpha compositing of projected splats with an
analytic backward pass recorded on the tape as a single operation.

Per pixel, splats are visited front to back:
    alpha_k = min(0.99, rho_k * exp(power_k)), skipped below 1/255
    a splat that would drop transmittance below 1e-4 ends compositing
    C = sum_k c_k alpha_k T_k + T_final * background,   A = 1 - T_final
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from autodiff import Tensor, ops
from avatar.gaussians import GaussianSet
from performance.thread_manager import TileWorkerPool, shared_pool
from rendering.camera import Camera
from rendering.projection import Projection, project_splats, projection_backward
from utils.config import ALPHA_CLIP, ALPHA_SKIP, BACKGROUND, TILE_SIZE, TRANSMITTANCE_MIN


@dataclass(frozen=True)
class Blend:
    dx: np.ndarray          # (P, K)
    dy: np.ndarray
    gauss: np.ndarray
    alpha_raw: np.ndarray
    alpha: np.ndarray       # composited alpha (0 where skipped or past saturation)
    live: np.ndarray        # alpha depends smoothly on its inputs
    t_excl: np.ndarray      # transmittance before each splat
    t_final: np.ndarray     # (P,)
    weights: np.ndarray     # alpha * t_excl
    rgb: np.ndarray         # (P, 3)


def blend_pixels(
    px: np.ndarray,
    py: np.ndarray,
    mean2d: np.ndarray,
    conic: np.ndarray,
    opacity: np.ndarray,
    colors: np.ndarray,
    background: np.ndarray,
) -> Blend:
    """Composite K depth-ordered splats over P pixel centres."""
    dx = px[:, None] - mean2d[None, :, 0]
    dy = py[:, None] - mean2d[None, :, 1]
    power = -0.5 * (conic[:, 0] * dx * dx + conic[:, 2] * dy * dy) - conic[:, 1] * dx * dy
    gauss = np.exp(power)
    alpha_raw = opacity * gauss
    clipped = np.minimum(alpha_raw, ALPHA_CLIP)
    active = clipped >= ALPHA_SKIP
    candidate = np.where(active, clipped, 0.0)
    included = np.cumprod(1.0 - candidate, axis=1) >= TRANSMITTANCE_MIN
    alpha = np.where(included, candidate, 0.0)

    p = px.shape[0]
    t_inc = np.cumprod(1.0 - alpha, axis=1)
    t_excl = np.concatenate([np.ones((p, 1)), t_inc[:, :-1]], axis=1)
    t_final = t_inc[:, -1] if alpha.shape[1] else np.ones(p)
    weights = alpha * t_excl
    rgb = weights @ colors + t_final[:, None] * background
    live = active & included & (alpha_raw < ALPHA_CLIP)
    return Blend(dx, dy, gauss, alpha_raw, alpha, live, t_excl, t_final, weights, rgb)


def blend_backward(
    blend: Blend,
    conic: np.ndarray,
    opacity: np.ndarray,
    colors: np.ndarray,
    background: np.ndarray,
    g_rgb: np.ndarray,
    g_alpha: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Per-splat (d_mean2d, d_conic, d_opacity, d_colors) of one pixel block."""
    color_dot = g_rgb @ colors.T                                    # (P, K)
    contrib = blend.weights * color_dot
    after = np.cumsum(contrib[:, ::-1], axis=1)[:, ::-1] - contrib
    tail = blend.t_final * (g_rgb @ background - g_alpha)
    d_alpha = blend.t_excl * color_dot - (after + tail[:, None]) / (1.0 - blend.alpha)
    d_alpha_raw = np.where(blend.live, d_alpha, 0.0)

    d_opacity = (d_alpha_raw * blend.gauss).sum(axis=0)
    d_power = d_alpha_raw * blend.alpha_raw
    qa, qb, qc = conic[:, 0], conic[:, 1], conic[:, 2]
    dx, dy = blend.dx, blend.dy
    d_mean2d = np.stack(
        [(d_power * (qa * dx + qb * dy)).sum(axis=0), (d_power * (qb * dx + qc * dy)).sum(axis=0)], axis=1
    )
    d_conic = np.stack(
        [
            (-0.5 * dx * dx * d_power).sum(axis=0),
            (-dx * dy * d_power).sum(axis=0),
            (-0.5 * dy * dy * d_power).sum(axis=0),
        ],
        axis=1,
    )
    d_colors = blend.weights.T @ g_rgb
    return d_mean2d, d_conic, d_opacity, d_colors


# ── Tiling ────────────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class TileBins:
    tiles_x: int
    tiles_y: int
    tile_size: int
    tile_ids: np.ndarray          # non-empty tiles, ascending
    starts: np.ndarray            # offsets into ``splats`` per non-empty tile
    splats: np.ndarray            # Gaussian indices, grouped by tile, depth order within a tile


def bin_splats(proj: Projection, width: int, height: int, tile_size: int = TILE_SIZE) -> TileBins:
    tiles_x = -(-width // tile_size)
    tiles_y = -(-height // tile_size)
    tile_list, rank_list = [], []
    for rank, i in enumerate(proj.order):
        x0, x1, y0, y1 = proj.bbox[i] // tile_size
        tx, ty = np.meshgrid(np.arange(x0, x1 + 1), np.arange(y0, y1 + 1))
        ids = (ty * tiles_x + tx).reshape(-1)
        tile_list.append(ids)
        rank_list.append(np.full(ids.shape, rank))
    if not tile_list:
        empty = np.zeros(0, dtype=np.int64)
        return TileBins(tiles_x, tiles_y, tile_size, empty, empty, empty)

    tiles = np.concatenate(tile_list)
    ranks = np.concatenate(rank_list)
    by_tile = np.lexsort((ranks, tiles))
    tiles, ranks = tiles[by_tile], ranks[by_tile]
    tile_ids, starts = np.unique(tiles, return_index=True)
    return TileBins(tiles_x, tiles_y, tile_size, tile_ids, np.append(starts, len(tiles)), proj.order[ranks])


def _tile_pixels(bins: TileBins, tile: int, width: int, height: int) -> tuple[np.ndarray, np.ndarray]:
    tx, ty = tile % bins.tiles_x, tile // bins.tiles_x
    xs = np.arange(tx * bins.tile_size, min((tx + 1) * bins.tile_size, width))
    ys = np.arange(ty * bins.tile_size, min((ty + 1) * bins.tile_size, height))
    gx, gy = np.meshgrid(xs, ys)
    return gx.reshape(-1), gy.reshape(-1)


def _tile_blend(proj: Projection, bins: TileBins, k: int, width: int, height: int, background: np.ndarray):
    idx = bins.splats[bins.starts[k] : bins.starts[k + 1]]
    px, py = _tile_pixels(bins, int(bins.tile_ids[k]), width, height)
    blend = blend_pixels(
        px.astype(np.float64), py.astype(np.float64),
        proj.mean2d[idx], proj.conic[idx], proj.opacity[idx], proj.colors[idx], background,
    )
    return idx, px, py, blend


def rasterize(
    proj: Projection,
    camera: Camera,
    background: np.ndarray,
    tile_size: int = TILE_SIZE,
    pool: TileWorkerPool | None = None,
) -> tuple[np.ndarray, TileBins]:
    """(H, W, 4) image: composited RGB and alpha."""
    width, height = camera.width, camera.height
    image = np.empty((height, width, 4))
    image[..., :3] = background
    image[..., 3] = 0.0
    bins = bin_splats(proj, width, height, tile_size)
    pool = pool or shared_pool()

    def _forward(k: int):
        _, px, py, blend = _tile_blend(proj, bins, k, width, height, background)
        return px, py, blend.rgb, 1.0 - blend.t_final

    for px, py, rgb, alpha in pool.map(_forward, range(len(bins.tile_ids))):
        image[py, px, :3] = rgb
        image[py, px, 3] = alpha
    np.clip(image, 0.0, 1.0, out=image)
    return image, bins


def rasterize_backward(
    proj: Projection,
    bins: TileBins,
    camera: Camera,
    background: np.ndarray,
    grad_image: np.ndarray,
    pool: TileWorkerPool | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Accumulate per-Gaussian (d_mean2d, d_conic, d_opacity, d_colors) in tile order."""
    n = proj.mean2d.shape[0]
    d_mean2d, d_conic = np.zeros((n, 2)), np.zeros((n, 3))
    d_opacity, d_colors = np.zeros(n), np.zeros((n, 3))
    width, height = camera.width, camera.height
    pool = pool or shared_pool()

    def _backward(k: int):
        idx, px, py, blend = _tile_blend(proj, bins, k, width, height, background)
        grads = blend_backward(
            blend, proj.conic[idx], proj.opacity[idx], proj.colors[idx], background,
            grad_image[py, px, :3], grad_image[py, px, 3],
        )
        return idx, grads

    for idx, (g_mean, g_conic, g_rho, g_col) in pool.map(_backward, range(len(bins.tile_ids))):
        np.add.at(d_mean2d, idx, g_mean)
        np.add.at(d_conic, idx, g_conic)
        np.add.at(d_opacity, idx, g_rho)
        np.add.at(d_colors, idx, g_col)
    return d_mean2d, d_conic, d_opacity, d_colors


# ── Public entry point ────────────────────────────────────────────────────────


def render_image(
    g: GaussianSet,
    camera: Camera,
    background: tuple[float, float, float] | np.ndarray = BACKGROUND,
    tile_size: int = TILE_SIZE,
    pool: TileWorkerPool | None = None,
) -> Tensor:
    """Differentiable (H, W, 4) render; sort order and culling are constants."""
    bg = np.asarray(background, dtype=np.float64)
    proj = project_splats(g, camera)
    image, bins = rasterize(proj, camera, bg, tile_size, pool)

    def _backward(grad: np.ndarray) -> list[np.ndarray]:
        d_mean2d, d_conic, d_opacity, d_colors = rasterize_backward(proj, bins, camera, bg, grad, pool)
        d_pos, d_quat, d_scale, d_sh = projection_backward(proj, camera, d_mean2d, d_conic, d_colors)
        return [d_pos, d_quat, d_scale, d_opacity[:, None], d_sh]

    inputs = [g.positions, g.rotations, g.scales, g.opacities, g.sh]
    return ops.record("render", image, inputs, _backward)


def render(
    g: GaussianSet,
    camera: Camera,
    background: tuple[float, float, float] | np.ndarray = BACKGROUND,
    tile_size: int = TILE_SIZE,
    pool: TileWorkerPool | None = None,
) -> tuple[Tensor, Tensor]:
    """(rgb (H, W, 3), alpha (H, W, 1)) of ``g`` seen from ``camera``."""
    image = render_image(g, camera, background, tile_size, pool)
    return image[:, :, :3], image[:, :, 3:]
