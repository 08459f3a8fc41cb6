"""
lbs.py
------
Linear blend skinning of Gaussians from canonical to posed space.

Per Gaussian: M = I + sum_j w_j (M_j - I); p' = M [p; 1]; the rotation is
left-multiplied by the quaternion of the polar factor of M's linear part.
Skin weights and joint transforms are constants of the forward pass.
"""

from __future__ import annotations

import numpy as np

from autodiff import ops
from avatar.gaussians import GaussianSet, matrix_to_quat, quat_left_matrix
from utils.config import SKIN_DET_MIN, SKIN_ROW_ATOL
from utils.errors import DegenerateError, InvariantError, ShapeError


def blend_transforms(weights: np.ndarray, transforms: np.ndarray) -> np.ndarray:
    """(N, J) x (J, 4, 4) -> (N, 4, 4); all-identity transforms give exact identity."""
    return np.eye(4) + np.einsum("nj,jab->nab", weights, transforms - np.eye(4))


def polar_rotation(linear: np.ndarray) -> np.ndarray:
    """Orthonormal polar factor U Vᵀ of each (3, 3) block."""
    u, _, vt = np.linalg.svd(linear)
    return u @ vt


def pose_gaussians(g: GaussianSet, weights: np.ndarray, transforms: np.ndarray) -> GaussianSet:
    n = len(g)
    weights = np.asarray(weights, dtype=np.float64)
    transforms = np.asarray(transforms, dtype=np.float64)
    if transforms.ndim != 3 or transforms.shape[1:] != (4, 4):
        raise ShapeError(f"transforms must be (J, 4, 4), got {transforms.shape}")
    if weights.shape != (n, transforms.shape[0]):
        raise ShapeError(f"weights {weights.shape} do not match {n} Gaussians x {transforms.shape[0]} joints")
    if n == 0:
        return g
    off = np.abs(weights.sum(axis=1) - 1.0) > SKIN_ROW_ATOL
    if off.any() or (weights < 0.0).any():
        i = int(np.flatnonzero(off | (weights < 0.0).any(axis=1))[0])
        raise InvariantError("weights", f"skin row {i} not normalized", i)

    blended = blend_transforms(weights, transforms)
    linear = blended[:, :3, :3]
    det = np.linalg.det(linear)
    if (det <= SKIN_DET_MIN).any():
        i = int(np.flatnonzero(det <= SKIN_DET_MIN)[0])
        raise DegenerateError(f"Gaussian {i}: blended transform is degenerate (det {float(det[i])!r})")

    moved = ops.matmul(g.positions.reshape(n, 1, 3), np.swapaxes(linear, 1, 2)).reshape(n, 3)
    positions = moved + blended[:, :3, 3]

    left = quat_left_matrix(matrix_to_quat(polar_rotation(linear)))
    turned = ops.matmul(left, g.rotations.reshape(n, 4, 1)).reshape(n, 4)
    rotations = ops.normalize_rows(turned)
    return GaussianSet(positions, rotations, g.scales, g.opacities, g.sh)
