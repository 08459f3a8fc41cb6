"""
gaussians.py
------------
3D Gaussian primitives: container, activation of raw network outputs,
covariance construction and quaternion helpers.

Quaternions are (w, x, y, z).
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from autodiff import Tensor, ops
from utils.config import OFFSET_CAP, QUAT_ATOL, SCALE_FLOOR
from utils.errors import InvariantError, ShapeError

IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])


def sh_width(degree: int) -> int:
    return 3 * (degree + 1) ** 2


def sh_degree_of(width: int) -> int:
    for degree in (0, 1):
        if sh_width(degree) == width:
            return degree
    raise ShapeError(f"SH width {width} does not match degree 0 or 1")


@dataclass(frozen=True)
class GaussianSet:
    positions: Tensor   # (N, 3)
    rotations: Tensor   # (N, 4)
    scales: Tensor      # (N, 3)
    opacities: Tensor   # (N, 1)
    sh: Tensor          # (N, C)

    @classmethod
    def from_arrays(
        cls,
        positions: np.ndarray,
        rotations: np.ndarray,
        scales: np.ndarray,
        opacities: np.ndarray,
        sh: np.ndarray,
    ) -> GaussianSet:
        opacities = np.asarray(opacities, dtype=np.float64).reshape(-1, 1)
        return cls(Tensor(positions), Tensor(rotations), Tensor(scales), Tensor(opacities), Tensor(sh)).validate()

    @classmethod
    def empty(cls, sh_dim: int = 12) -> GaussianSet:
        return cls(
            Tensor(np.zeros((0, 3))), Tensor(np.zeros((0, 4))), Tensor(np.zeros((0, 3))),
            Tensor(np.zeros((0, 1))), Tensor(np.zeros((0, sh_dim))),
        )

    def __len__(self) -> int:
        return self.positions.shape[0]

    @property
    def sh_degree(self) -> int:
        return sh_degree_of(self.sh.shape[1])

    def arrays(self) -> dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name).data for f in fields(self)}

    def validate(self) -> GaussianSet:
        n = len(self)
        expected = {"positions": 3, "rotations": 4, "scales": 3, "opacities": 1}
        for name, width in expected.items():
            shape = getattr(self, name).shape
            if shape != (n, width):
                raise InvariantError(name, f"shape {shape}, expected {(n, width)}")
        if self.sh.ndim != 2 or self.sh.shape[0] != n:
            raise InvariantError("sh", f"shape {self.sh.shape} does not have {n} rows")
        sh_degree_of(self.sh.shape[1])

        norms = np.linalg.norm(self.rotations.data, axis=1)
        bad = np.abs(norms - 1.0) > QUAT_ATOL
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise InvariantError("rotations", f"quaternion norm {float(norms[i])!r} is not 1", i)
        if (self.scales.data <= 0.0).any():
            i = int(np.flatnonzero((self.scales.data <= 0.0).any(axis=1))[0])
            raise InvariantError("scales", "scale must be strictly positive", i)
        rho = self.opacities.data[:, 0]
        out = (rho < 0.0) | (rho > 1.0)
        if out.any():
            i = int(np.flatnonzero(out)[0])
            raise InvariantError("opacities", f"opacity {float(rho[i])!r} outside [0, 1]", i)
        return self

    def take(self, order: np.ndarray) -> GaussianSet:
        return GaussianSet(*(Tensor(getattr(self, f.name).data[order]) for f in fields(self)))

    def rounded_f32(self) -> GaussianSet:
        """Copy with every value representable in 32-bit storage."""
        return GaussianSet(
            Tensor(np.asarray(self.positions.data, dtype=np.float32)),
            Tensor(np.asarray(self.rotations.data, dtype=np.float32)),
            Tensor(np.asarray(self.scales.data, dtype=np.float32)),
            Tensor(np.asarray(self.opacities.data, dtype=np.float32)),
            Tensor(np.asarray(self.sh.data, dtype=np.float32)),
        )


@dataclass(frozen=True)
class RawGaussianParams:
    offsets: Tensor     # (N, 3)
    rotations: Tensor   # (N, 4)
    scales: Tensor      # (N, 3)
    opacities: Tensor   # (N, 1)
    sh: Tensor          # (N, C)

    def __len__(self) -> int:
        return self.offsets.shape[0]

    def tensors(self) -> list[Tensor]:
        return [getattr(self, f.name) for f in fields(self)]


def activate_raw(
    raw: RawGaussianParams,
    anchors: Tensor | np.ndarray,
    offset_cap: float = OFFSET_CAP,
    scale_floor: float = SCALE_FLOOR,
) -> GaussianSet:
    """Map unconstrained outputs onto valid Gaussians around their anchors."""
    anchors = anchors if isinstance(anchors, Tensor) else Tensor(anchors)
    n = len(raw)
    widths = {"offsets": 3, "rotations": 4, "scales": 3, "opacities": 1}
    for name, width in widths.items():
        if getattr(raw, name).shape != (n, width):
            raise ShapeError(f"raw {name} has shape {getattr(raw, name).shape}, expected {(n, width)}")
    if anchors.shape != (n, 3) or raw.sh.shape[0] != n:
        raise ShapeError(f"anchors {anchors.shape} / sh {raw.sh.shape} do not match {n} raw rows")

    positions = anchors + offset_cap * ops.tanh(raw.offsets)
    rotations = ops.normalize_rows(raw.rotations, fallback=IDENTITY_QUAT)
    scales = scale_floor + ops.softplus(raw.scales)
    opacities = ops.sigmoid(raw.opacities)
    return GaussianSet(positions, rotations, scales, opacities, raw.sh)


# ── Quaternions / covariance ──────────────────────────────────────────────────


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """(..., 4) unit quaternions -> (..., 3, 3) rotation matrices."""
    w, x, y, z = (q[..., k] for k in range(4))
    out = np.empty(q.shape[:-1] + (3, 3))
    out[..., 0, 0] = 1.0 - 2.0 * (y * y + z * z)
    out[..., 0, 1] = 2.0 * (x * y - w * z)
    out[..., 0, 2] = 2.0 * (x * z + w * y)
    out[..., 1, 0] = 2.0 * (x * y + w * z)
    out[..., 1, 1] = 1.0 - 2.0 * (x * x + z * z)
    out[..., 1, 2] = 2.0 * (y * z - w * x)
    out[..., 2, 0] = 2.0 * (x * z - w * y)
    out[..., 2, 1] = 2.0 * (y * z + w * x)
    out[..., 2, 2] = 1.0 - 2.0 * (x * x + y * y)
    return out


def matrix_to_quat(rot: np.ndarray) -> np.ndarray:
    """(..., 3, 3) rotations -> (..., 4) unit quaternions with w >= 0 (Shepperd's method)."""
    flat = rot.reshape(-1, 3, 3)
    out = np.empty((flat.shape[0], 4))
    for n, m in enumerate(flat):
        trace = m[0, 0] + m[1, 1] + m[2, 2]
        if trace > 0.0:
            s = 2.0 * np.sqrt(1.0 + trace)
            q = [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
        elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
            s = 2.0 * np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2])
            q = [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
        elif m[1, 1] > m[2, 2]:
            s = 2.0 * np.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2])
            q = [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
        else:
            s = 2.0 * np.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1])
            q = [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
        q = np.array(q)
        q = q / np.linalg.norm(q)
        out[n] = -q if q[0] < 0.0 else q
    return out.reshape(rot.shape[:-2] + (4,))


def quat_left_matrix(q: np.ndarray) -> np.ndarray:
    """(..., 4) -> (..., 4, 4) matrix L(q) with L(q) @ r == q * r."""
    w, x, y, z = (q[..., k] for k in range(4))
    rows = [
        [w, -x, -y, -z],
        [x, w, -z, y],
        [y, z, w, -x],
        [z, -y, x, w],
    ]
    return np.stack([np.stack(row, axis=-1) for row in rows], axis=-2)


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.einsum("...ij,...j->...i", quat_left_matrix(a), b)


def covariance_matrices(rotations: np.ndarray, scales: np.ndarray) -> np.ndarray:
    rot = quat_to_matrix(rotations)
    m = rot * scales[:, None, :]
    return m @ np.swapaxes(m, -1, -2)


def covariance_of(g: GaussianSet, i: int) -> np.ndarray:
    """S = R(r_i) diag(sigma_i^2) R(r_i)^T."""
    if not 0 <= i < len(g):
        raise IndexError(f"Gaussian index {i} out of range for {len(g)}")
    return covariance_matrices(g.rotations.data[i : i + 1], g.scales.data[i : i + 1])[0]
