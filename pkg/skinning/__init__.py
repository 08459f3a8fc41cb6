"""Diffused voxel skinning and linear blend skinning of Gaussians."""

from skinning.config import SkinConfig
from skinning.lbs import blend_transforms, polar_rotation, pose_gaussians
from skinning.skin_field import (
    SkinField,
    build_skin_field,
    decode_skin_field,
    diffuse,
    encode_skin_field,
    query_weights,
    read_skin_field,
    write_skin_field,
)

__all__ = [
    "SkinConfig",
    "SkinField",
    "blend_transforms",
    "build_skin_field",
    "decode_skin_field",
    "diffuse",
    "encode_skin_field",
    "polar_rotation",
    "pose_gaussians",
    "query_weights",
    "read_skin_field",
    "write_skin_field",
]
