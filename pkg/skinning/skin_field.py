"""
skin_field.py
-------------
Diffused voxel skinning-weight field.

Build: seed the voxels containing template vertices with those vertices'
weight rows (averaged on collision), run Jacobi 6-neighbour averaging while
re-clamping seeds, renormalize, and give unreached voxels the row of the
nearest seed. Query: clamped trilinear interpolation, renormalized.

Sidecar file (.lsf): "LSF1" | GRID section: u32 R | u32 J | 3 f64 lo |
3 f64 hi | R×R×R×J f32 weights.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from loguru import logger

from body.body_model import BodyTemplate
from utils.binio import ByteReader, SectionWriter, pack_array, read_sections
from utils.config import LSF_MAGIC, SKIN_DIFFUSION_STEPS, SKIN_MARGIN, SKIN_RESOLUTION, SKIN_ROW_ATOL
from utils.errors import ConfigError, DegenerateError, FormatError, InvariantError

_NEAREST_CHUNK = 4096


@dataclass(frozen=True)
class SkinField:
    lo: np.ndarray        # (3,) box corner, meters
    hi: np.ndarray        # (3,)
    weights: np.ndarray   # (R, R, R, J), axis order x, y, z

    @property
    def resolution(self) -> int:
        return self.weights.shape[0]

    @property
    def n_joints(self) -> int:
        return self.weights.shape[3]

    @property
    def step(self) -> np.ndarray:
        return (self.hi - self.lo) / (self.resolution - 1)

    def node(self, i: int, j: int, k: int) -> np.ndarray:
        return self.lo + np.array([i, j, k]) * self.step

    def validate(self) -> SkinField:
        w = self.weights
        if w.ndim != 4 or len(set(w.shape[:3])) != 1:
            raise InvariantError("weights", f"grid shape {w.shape} is not R×R×R×J")
        if not np.isfinite(w).all() or (w < 0.0).any():
            raise InvariantError("weights", "grid rows must be finite and nonnegative")
        sums = w.sum(axis=3).reshape(-1)
        off = np.abs(sums - 1.0) > SKIN_ROW_ATOL
        if off.any():
            i = int(np.flatnonzero(off)[0])
            raise InvariantError("weights", f"voxel row {i} not normalized (sum {float(sums[i])!r})", i)
        return self


def _neighbour_mean(grid: np.ndarray) -> np.ndarray:
    padded = np.pad(grid, ((1, 1), (1, 1), (1, 1), (0, 0)), mode="edge")
    total = (
        padded[:-2, 1:-1, 1:-1] + padded[2:, 1:-1, 1:-1]
        + padded[1:-1, :-2, 1:-1] + padded[1:-1, 2:, 1:-1]
        + padded[1:-1, 1:-1, :-2] + padded[1:-1, 1:-1, 2:]
    )
    return total / 6.0


def diffuse(grid: np.ndarray, seed_mask: np.ndarray, seed_rows: np.ndarray, steps: int) -> np.ndarray:
    """Jacobi 6-neighbour averaging with seeds re-clamped every iteration.

    ``grid`` is (X, Y, Z, J); boundaries replicate their edge voxel. Works
    on degenerate extents such as (R, 1, 1, J).
    """
    current = grid.copy()
    current[seed_mask] = seed_rows
    for _ in range(steps):
        current = _neighbour_mean(current)
        current[seed_mask] = seed_rows
    return current


def _nearest_seed_rows(targets: np.ndarray, seeds: np.ndarray, seed_rows: np.ndarray, step: np.ndarray) -> np.ndarray:
    out = np.empty((len(targets), seed_rows.shape[1]))
    seed_pos = seeds * step
    for start in range(0, len(targets), _NEAREST_CHUNK):
        chunk = targets[start : start + _NEAREST_CHUNK] * step
        dist = ((chunk[:, None, :] - seed_pos[None, :, :]) ** 2).sum(axis=2)
        out[start : start + _NEAREST_CHUNK] = seed_rows[np.argmin(dist, axis=1)]
    return out


def build_skin_field(
    template: BodyTemplate,
    resolution: int = SKIN_RESOLUTION,
    diffusion_steps: int = SKIN_DIFFUSION_STEPS,
    margin: float = SKIN_MARGIN,
) -> SkinField:
    if resolution < 8:
        raise ConfigError(f"skin field resolution must be >= 8, got {resolution}")
    if diffusion_steps < 0:
        raise ConfigError(f"diffusion steps must be >= 0, got {diffusion_steps}")
    verts = template.vertices
    if not np.isfinite(verts).all():
        raise DegenerateError("template has non-finite vertices; no bounding box")

    lo = verts.min(axis=0) - margin
    hi = verts.max(axis=0) + margin
    step = (hi - lo) / (resolution - 1)
    if not (step > 0.0).all():
        raise DegenerateError(f"skin field box {lo} .. {hi} is flat")

    r, j = resolution, template.n_joints
    cells = np.clip(np.round((verts - lo) / step).astype(np.int64), 0, r - 1)
    flat = np.ravel_multi_index(cells.T, (r, r, r))
    sums = np.zeros((r * r * r, j))
    counts = np.zeros(r * r * r)
    np.add.at(sums, flat, template.skin_weights)
    np.add.at(counts, flat, 1.0)
    seeded = counts > 0
    seed_rows = sums[seeded] / counts[seeded, None]

    seed_mask = seeded.reshape(r, r, r)
    grid = diffuse(np.zeros((r, r, r, j)), seed_mask, seed_rows, diffusion_steps).reshape(-1, j)

    totals = grid.sum(axis=1)
    reached = (totals > 0.0) & ~seeded
    grid[reached] = grid[reached] / totals[reached, None]
    unreached = ~(totals > 0.0)
    if unreached.any():
        seed_idx = np.stack(np.unravel_index(np.flatnonzero(seeded), (r, r, r)), axis=1)
        miss_idx = np.stack(np.unravel_index(np.flatnonzero(unreached), (r, r, r)), axis=1)
        grid[unreached] = _nearest_seed_rows(miss_idx, seed_idx, seed_rows, step)

    field = SkinField(lo, hi, grid.reshape(r, r, r, j)).validate()
    logger.info(
        "[SKIN] field R={} J={} seeds={} steps={} unreached={}",
        r, j, int(seeded.sum()), diffusion_steps, int(unreached.sum()),
    )
    return field


def query_weights(field: SkinField, points: np.ndarray) -> np.ndarray:
    """Trilinear lookup clamped to the box; rows renormalized."""
    points = np.asarray(points, dtype=np.float64)
    r = field.resolution
    f = np.clip((points - field.lo) / field.step, 0.0, r - 1)
    i0 = np.minimum(np.floor(f).astype(np.int64), r - 2)
    t = f - i0
    out = np.zeros((points.shape[0], field.n_joints))
    for corner in range(8):
        bits = np.array([(corner >> 2) & 1, (corner >> 1) & 1, corner & 1])
        idx = i0 + bits
        coeff = np.prod(np.where(bits == 1, t, 1.0 - t), axis=1)
        out += coeff[:, None] * field.weights[idx[:, 0], idx[:, 1], idx[:, 2]]
    return out / out.sum(axis=1, keepdims=True)


# ── Sidecar ───────────────────────────────────────────────────────────────────


def encode_skin_field(field: SkinField) -> bytes:
    writer = SectionWriter(LSF_MAGIC)
    writer.add(
        "GRID",
        struct.pack("<II", field.resolution, field.n_joints),
        pack_array(field.lo, "<f8"),
        pack_array(field.hi, "<f8"),
        pack_array(field.weights, "<f4"),
    )
    return writer.to_bytes()


def decode_skin_field(data: bytes) -> SkinField:
    reader = ByteReader(read_sections(data, LSF_MAGIC, ("GRID",))["GRID"], "GRID")
    r, j = reader.unpack("<II", "grid dims")
    lo = reader.array("<f8", (3,), "lo")
    hi = reader.array("<f8", (3,), "hi")
    weights = reader.array("<f4", (r, r, r, j), "weights").astype(np.float64)
    if reader.remaining:
        raise FormatError(f"GRID has {reader.remaining} unexpected trailing bytes")
    return SkinField(lo, hi, weights).validate()


def write_skin_field(field: SkinField, path: str | Path) -> None:
    Path(path).write_bytes(encode_skin_field(field))


def read_skin_field(path: str | Path) -> SkinField:
    return decode_skin_field(Path(path).read_bytes())
