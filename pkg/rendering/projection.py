"""
projection.py
-------------
Perspective projection of 3D Gaussians to screen-space splats, and the
matching hand-derived backward pass.

cov2d = J W S Wᵀ Jᵀ + floor·I, with J the perspective Jacobian at the
camera-space mean and W the extrinsic rotation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from avatar.gaussians import GaussianSet, quat_to_matrix
from avatar.sh import sh_basis, sh_raw_colors
from rendering.camera import Camera
from utils.config import ALPHA_SKIP, LOWPASS_FLOOR, SH_C1

_EXTENT_PAD = 1e-9


@dataclass(frozen=True)
class Splat2D:
    mean2d: np.ndarray    # (2,) pixels
    cov2d: np.ndarray     # (2, 2) pixels², floor included
    depth: float
    color: np.ndarray     # (3,)
    opacity: float


@dataclass(frozen=True)
class Projection:
    """Screen-space quantities for every Gaussian, plus what backward needs."""

    cam: np.ndarray          # (N, 3) camera-space means
    mean2d: np.ndarray       # (N, 2)
    cov2d: np.ndarray        # (N, 2, 2)
    conic: np.ndarray        # (N, 3) inverse covariance (A, B, C)
    depth: np.ndarray        # (N,)
    colors: np.ndarray       # (N, 3) clamped SH colors
    raw_colors: np.ndarray   # (N, 3) before clamping
    opacity: np.ndarray      # (N,)
    in_front: np.ndarray     # (N,) bool, depth > near
    visible: np.ndarray      # (N,) bool, in front, opaque enough, footprint on image
    bbox: np.ndarray         # (N, 4) inclusive pixel box x0, x1, y0, y1
    order: np.ndarray        # visible indices sorted front-to-back (stable)
    # backward cache
    jac: np.ndarray          # (N, 2, 3)
    proj: np.ndarray         # (N, 2, 3) = J W
    cov3d: np.ndarray        # (N, 3, 3)
    rotmat: np.ndarray       # (N, 3, 3)
    scales: np.ndarray       # (N, 3)
    quats: np.ndarray        # (N, 4)
    sh: np.ndarray           # (N, C)
    dirs: np.ndarray         # (N, 3) unit view directions
    dir_norm: np.ndarray     # (N,)

    def depth_sorted(self) -> np.ndarray:
        """All in-front indices sorted front-to-back (oracle ordering)."""
        idx = np.flatnonzero(self.in_front)
        return idx[np.argsort(self.depth[idx], kind="stable")]


def project_splats(g: GaussianSet, camera: Camera) -> Projection:
    p = g.positions.data
    q = g.rotations.data
    s = g.scales.data
    rho = g.opacities.data[:, 0]
    f = g.sh.data
    n = p.shape[0]

    rot_w = camera.rotation
    cam = p @ rot_w.T + camera.translation
    depth = cam[:, 2]
    in_front = depth > camera.near
    tz = np.where(in_front, depth, 1.0)
    tx, ty = cam[:, 0], cam[:, 1]

    mean2d = np.stack([camera.fx * tx / tz + camera.cx, camera.fy * ty / tz + camera.cy], axis=1)
    jac = np.zeros((n, 2, 3))
    jac[:, 0, 0] = camera.fx / tz
    jac[:, 0, 2] = -camera.fx * tx / (tz * tz)
    jac[:, 1, 1] = camera.fy / tz
    jac[:, 1, 2] = -camera.fy * ty / (tz * tz)
    proj = jac @ rot_w

    rotmat = quat_to_matrix(q)
    m = rotmat * s[:, None, :]
    cov3d = m @ np.swapaxes(m, 1, 2)
    cov2d = proj @ cov3d @ np.swapaxes(proj, 1, 2) + LOWPASS_FLOOR * np.eye(2)
    a, b, c = cov2d[:, 0, 0], cov2d[:, 0, 1], cov2d[:, 1, 1]
    det = a * c - b * b
    conic = np.stack([c / det, -b / det, a / det], axis=1)

    view = p - camera.center
    dir_norm = np.linalg.norm(view, axis=1)
    dirs = view / np.where(dir_norm > 0.0, dir_norm, 1.0)[:, None]
    raw_colors = sh_raw_colors(f, dirs) if n else np.zeros((0, 3))
    colors = np.clip(raw_colors, 0.0, 1.0)

    # Exact pixel box of the region where alpha can reach the skip threshold.
    opaque = rho >= ALPHA_SKIP
    level = 2.0 * np.log(np.maximum(255.0 * rho, 1.0))
    ext_x = np.sqrt(a * level) + _EXTENT_PAD
    ext_y = np.sqrt(c * level) + _EXTENT_PAD
    x0 = np.maximum(np.ceil(mean2d[:, 0] - ext_x), 0)
    x1 = np.minimum(np.floor(mean2d[:, 0] + ext_x), camera.width - 1)
    y0 = np.maximum(np.ceil(mean2d[:, 1] - ext_y), 0)
    y1 = np.minimum(np.floor(mean2d[:, 1] + ext_y), camera.height - 1)
    on_image = (x0 <= x1) & (y0 <= y1)
    visible = in_front & opaque & on_image
    bbox = np.stack([x0, x1, y0, y1], axis=1)
    bbox = np.where(visible[:, None], bbox, 0).astype(np.int64)

    idx = np.flatnonzero(visible)
    order = idx[np.argsort(depth[idx], kind="stable")]

    return Projection(
        cam=cam, mean2d=mean2d, cov2d=cov2d, conic=conic, depth=depth, colors=colors,
        raw_colors=raw_colors, opacity=rho, in_front=in_front, visible=visible, bbox=bbox,
        order=order, jac=jac, proj=proj, cov3d=cov3d, rotmat=rotmat, scales=s, quats=q,
        sh=f, dirs=dirs, dir_norm=dir_norm,
    )


def project_gaussian(g: GaussianSet, i: int, camera: Camera) -> Splat2D | None:
    """Screen-space splat of Gaussian ``i``, or None when culled."""
    proj = project_splats(g.take(np.array([i])), camera)
    if not proj.visible[0]:
        return None
    return Splat2D(proj.mean2d[0], proj.cov2d[0], float(proj.depth[0]), proj.colors[0], float(proj.opacity[0]))


# ── Backward ──────────────────────────────────────────────────────────────────


def _quat_grad(q: np.ndarray, d_rot: np.ndarray) -> np.ndarray:
    """Gradient of the (unnormalized) quaternion-to-matrix map."""
    w, x, y, z = (q[:, k] for k in range(4))
    d = {(i, j): d_rot[:, i, j] for i in range(3) for j in range(3)}
    dw = 2.0 * (-z * d[0, 1] + y * d[0, 2] + z * d[1, 0] - x * d[1, 2] - y * d[2, 0] + x * d[2, 1])
    dx = 2.0 * (
        y * d[0, 1] + z * d[0, 2] + y * d[1, 0] - 2.0 * x * d[1, 1] - w * d[1, 2]
        + z * d[2, 0] + w * d[2, 1] - 2.0 * x * d[2, 2]
    )
    dy = 2.0 * (
        -2.0 * y * d[0, 0] + x * d[0, 1] + w * d[0, 2] + x * d[1, 0] + z * d[1, 2]
        - w * d[2, 0] + z * d[2, 1] - 2.0 * y * d[2, 2]
    )
    dz = 2.0 * (
        -2.0 * z * d[0, 0] - w * d[0, 1] + x * d[0, 2] + w * d[1, 0] - 2.0 * z * d[1, 1]
        + y * d[1, 2] + x * d[2, 0] + y * d[2, 1]
    )
    return np.stack([dw, dx, dy, dz], axis=1)


def projection_backward(
    proj: Projection,
    camera: Camera,
    d_mean2d: np.ndarray,
    d_conic: np.ndarray,
    d_colors: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Chain screen-space gradients back to (positions, rotations, scales, sh)."""
    fx, fy = camera.fx, camera.fy
    rot_w = camera.rotation
    tz = np.where(proj.in_front, proj.depth, 1.0)
    tx, ty = proj.cam[:, 0], proj.cam[:, 1]

    # conic -> cov2d
    qa, qb, qc = proj.conic[:, 0], proj.conic[:, 1], proj.conic[:, 2]
    conic_m = np.stack([np.stack([qa, qb], -1), np.stack([qb, qc], -1)], -2)
    g_q = np.stack(
        [np.stack([d_conic[:, 0], 0.5 * d_conic[:, 1]], -1), np.stack([0.5 * d_conic[:, 1], d_conic[:, 2]], -1)],
        -2,
    )
    d_cov2d = -conic_m @ g_q @ conic_m

    d_proj = 2.0 * d_cov2d @ proj.proj @ proj.cov3d
    d_cov3d = np.swapaxes(proj.proj, 1, 2) @ d_cov2d @ proj.proj
    d_jac = d_proj @ rot_w.T

    du, dv = d_mean2d[:, 0], d_mean2d[:, 1]
    tz2 = tz * tz
    tz3 = tz2 * tz
    d_tx = d_jac[:, 0, 2] * (-fx / tz2) + du * fx / tz
    d_ty = d_jac[:, 1, 2] * (-fy / tz2) + dv * fy / tz
    d_tz = (
        d_jac[:, 0, 0] * (-fx / tz2)
        + d_jac[:, 0, 2] * (2.0 * fx * tx / tz3)
        + d_jac[:, 1, 1] * (-fy / tz2)
        + d_jac[:, 1, 2] * (2.0 * fy * ty / tz3)
        - du * fx * tx / tz2
        - dv * fy * ty / tz2
    )
    d_cam = np.stack([d_tx, d_ty, d_tz], axis=1)
    d_cam = np.where(proj.in_front[:, None], d_cam, 0.0)
    d_pos = d_cam @ rot_w

    m = proj.rotmat * proj.scales[:, None, :]
    d_m = 2.0 * d_cov3d @ m
    d_scales = (d_m * proj.rotmat).sum(axis=1)
    d_rotmat = d_m * proj.scales[:, None, :]
    d_quats = _quat_grad(proj.quats, d_rotmat)

    # SH colors, clamped to [0, 1]
    live = (proj.raw_colors > 0.0) & (proj.raw_colors < 1.0)
    d_col = np.where(live, d_colors, 0.0)
    n_basis = proj.sh.shape[1] // 3
    basis = sh_basis(proj.dirs, 0 if n_basis == 1 else 1)
    d_sh = (basis[:, :, None] * d_col[:, None, :]).reshape(proj.sh.shape)
    if n_basis == 4:
        f = proj.sh.reshape(-1, 4, 3)
        d_dir = np.stack(
            [
                -SH_C1 * (d_col * f[:, 3]).sum(axis=1),
                -SH_C1 * (d_col * f[:, 1]).sum(axis=1),
                SH_C1 * (d_col * f[:, 2]).sum(axis=1),
            ],
            axis=1,
        )
        radial = (d_dir * proj.dirs).sum(axis=1, keepdims=True)
        safe = np.where(proj.dir_norm > 0.0, proj.dir_norm, 1.0)[:, None]
        d_pos = d_pos + (d_dir - proj.dirs * radial) / safe
    return d_pos, d_quats, d_scales, d_sh
