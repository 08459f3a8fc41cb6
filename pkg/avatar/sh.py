"""
sh.py
-----
Real spherical harmonics up to degree 1.

Coefficients are coefficient-major: f[3*k + c] is basis k, channel c, with
basis order Y00, Y1-1, Y10, Y11.
"""

from __future__ import annotations

import numpy as np

from utils.config import SH_C0, SH_C1
from utils.errors import DomainError, ShapeError


def sh_basis(dirs: np.ndarray, degree: int) -> np.ndarray:
    """(N, 3) unit directions -> (N, (degree+1)^2) basis values."""
    cols = [np.full(dirs.shape[0], SH_C0)]
    if degree >= 1:
        x, y, z = dirs[:, 0], dirs[:, 1], dirs[:, 2]
        cols += [-SH_C1 * y, SH_C1 * z, -SH_C1 * x]
    return np.stack(cols, axis=1)


def sh_raw_colors(sh: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """Unclamped 0.5 + sum_k f_k Y_k for every row; (N, C), (N, 3) -> (N, 3)."""
    n_basis = sh.shape[1] // 3
    basis = sh_basis(dirs, 0 if n_basis == 1 else 1)
    return 0.5 + np.einsum("nk,nkc->nc", basis, sh.reshape(-1, n_basis, 3))


def eval_sh(f: np.ndarray, view_dir: np.ndarray) -> np.ndarray:
    """RGB in [0, 1] of one Gaussian's coefficients seen along ``view_dir``."""
    f = np.asarray(f, dtype=np.float64)
    if f.ndim != 1 or f.size not in (3, 12):
        raise ShapeError(f"SH coefficient vector must have 3 or 12 entries, got {f.shape}")
    d = np.asarray(view_dir, dtype=np.float64)
    norm = float(np.linalg.norm(d))
    if norm == 0.0:
        raise DomainError("view direction has zero length")
    return np.clip(sh_raw_colors(f[None, :], (d / norm)[None, :])[0], 0.0, 1.0)
