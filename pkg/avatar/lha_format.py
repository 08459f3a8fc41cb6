"""
lha_format.py
-------------
Avatar container (.lha), little-endian:

    "LHA1" | u32 version | u32 N | u32 C
    N×3 f32 positions | N×4 f32 rotations | N×3 f32 scales | N×1 f32 opacities | N×C f32 SH
    u32 J (0 = no skinning block)
    [ N×J f32 per-Gaussian skin weights | J u32 joint ids ]

Values are stored as f32; an avatar whose arrays are f32-representable
roundtrips bit-exactly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from loguru import logger

from avatar.gaussians import GaussianSet, sh_degree_of
from autodiff import Tensor
from utils.binio import ByteReader, pack_array
from utils.config import LHA_MAGIC, LHA_VERSION
from utils.errors import FormatError, InvariantError, ShapeError, VersionError


@dataclass(frozen=True)
class AvatarFile:
    gaussians: GaussianSet
    skin_weights: np.ndarray | None = None   # (N, J)
    joint_ids: np.ndarray | None = None      # (J,)

    @property
    def n_joints(self) -> int:
        return 0 if self.joint_ids is None else int(self.joint_ids.shape[0])


def encode_avatar(gaussians: GaussianSet, skin_weights: np.ndarray | None = None,
                  joint_ids: np.ndarray | None = None) -> bytes:
    gaussians.validate()
    n, c = len(gaussians), gaussians.sh.shape[1]
    parts = [LHA_MAGIC, struct.pack("<III", LHA_VERSION, n, c)]
    for name in ("positions", "rotations", "scales", "opacities", "sh"):
        parts.append(pack_array(getattr(gaussians, name).data, "<f4"))
    if skin_weights is None:
        parts.append(struct.pack("<I", 0))
    else:
        skin_weights = np.asarray(skin_weights)
        j = skin_weights.shape[1]
        ids = np.arange(j) if joint_ids is None else np.asarray(joint_ids)
        if skin_weights.shape != (n, j) or ids.shape != (j,):
            raise ShapeError(f"skin block {skin_weights.shape} / ids {ids.shape} do not match {n} Gaussians")
        parts += [struct.pack("<I", j), pack_array(skin_weights, "<f4"), pack_array(ids, "<u4")]
    return b"".join(parts)


def decode_avatar(data: bytes) -> AvatarFile:
    if data[: len(LHA_MAGIC)] != LHA_MAGIC:
        raise VersionError(f"bad magic {data[:len(LHA_MAGIC)]!r}, expected {LHA_MAGIC!r}")
    reader = ByteReader(data[len(LHA_MAGIC) :], "LHA1")
    version, n, c = reader.unpack("<III", "header")
    if version != LHA_VERSION:
        raise VersionError(f"unsupported avatar version {version}, expected {LHA_VERSION}")
    try:
        sh_degree_of(c)
    except ShapeError as exc:
        raise FormatError(str(exc)) from exc

    arrays = {
        "positions": reader.array("<f4", (n, 3), "positions"),
        "rotations": reader.array("<f4", (n, 4), "rotations"),
        "scales": reader.array("<f4", (n, 3), "scales"),
        "opacities": reader.array("<f4", (n, 1), "opacities"),
        "sh": reader.array("<f4", (n, c), "sh"),
    }
    for name, arr in arrays.items():
        if not np.isfinite(arr).all():
            raise InvariantError(name, "non-finite value", int(np.flatnonzero(~np.isfinite(arr))[0]))
    gaussians = GaussianSet(**{k: Tensor(v) for k, v in arrays.items()}).validate()

    (j,) = reader.unpack("<I", "joint count")
    skin = ids = None
    if j:
        skin = reader.array("<f4", (n, j), "skin weights").astype(np.float64)
        ids = reader.array("<u4", (j,), "joint ids").astype(np.int64)
    if reader.remaining:
        raise FormatError(f"{reader.remaining} trailing bytes after avatar payload")
    return AvatarFile(gaussians, skin, ids)


def write_avatar(gaussians: GaussianSet, path: str | Path, skin_weights: np.ndarray | None = None,
                 joint_ids: np.ndarray | None = None) -> None:
    path = Path(path)
    path.write_bytes(encode_avatar(gaussians, skin_weights, joint_ids))
    logger.debug("[AVATAR] wrote {} ({} Gaussians)", path.name, len(gaussians))


def read_avatar(path: str | Path) -> AvatarFile:
    return decode_avatar(Path(path).read_bytes())
