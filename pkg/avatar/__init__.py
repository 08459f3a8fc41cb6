"""Gaussian avatar representation and its container format."""

from avatar.gaussians import (
    IDENTITY_QUAT,
    GaussianSet,
    RawGaussianParams,
    activate_raw,
    covariance_matrices,
    covariance_of,
    matrix_to_quat,
    quat_left_matrix,
    quat_multiply,
    quat_to_matrix,
    sh_width,
)
from avatar.lha_format import AvatarFile, decode_avatar, encode_avatar, read_avatar, write_avatar
from avatar.sh import eval_sh, sh_basis, sh_raw_colors

__all__ = [
    "IDENTITY_QUAT",
    "AvatarFile",
    "GaussianSet",
    "RawGaussianParams",
    "activate_raw",
    "covariance_matrices",
    "covariance_of",
    "decode_avatar",
    "encode_avatar",
    "eval_sh",
    "matrix_to_quat",
    "quat_left_matrix",
    "quat_multiply",
    "quat_to_matrix",
    "read_avatar",
    "sh_basis",
    "sh_raw_colors",
    "sh_width",
    "write_avatar",
]
