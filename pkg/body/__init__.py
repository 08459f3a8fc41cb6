"""Simplified parametric body model."""

from body.body_model import (
    BodyTemplate,
    Pose,
    SampledPoints,
    ShapedBody,
    apply_shape,
    face_areas,
    forward_kinematics,
    posed_joints,
    rodrigues,
    sample_surface_points,
)
from body.generator import JOINT_NAMES, generate_minibody
from body.lbm_format import decode_body_model, encode_body_model, load_body_model, write_body_model
from body.motion_format import decode_motion, encode_motion, read_motion, write_motion

__all__ = [
    "BodyTemplate",
    "JOINT_NAMES",
    "Pose",
    "SampledPoints",
    "ShapedBody",
    "apply_shape",
    "decode_body_model",
    "decode_motion",
    "encode_body_model",
    "encode_motion",
    "face_areas",
    "forward_kinematics",
    "generate_minibody",
    "load_body_model",
    "posed_joints",
    "read_motion",
    "rodrigues",
    "sample_surface_points",
    "write_body_model",
    "write_motion",
]
