"""
generator.py
------------
Procedural humanoid ("minibody"): sphere head, box-like torso, capsule limbs.

Default resolution gives V=402, J=16, B=4. Every stored value is rounded to
float32 so the .lbm roundtrip is exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from body.body_model import BodyTemplate
from utils.config import BODY_RING_SEGMENTS, BODY_SKIN_FALLOFF, REGION_BODY, REGION_HEAD

JOINT_NAMES = (
    "pelvis", "chest", "neck", "head",
    "l_shoulder", "l_elbow", "l_wrist",
    "r_shoulder", "r_elbow", "r_wrist",
    "l_hip", "l_knee", "l_ankle",
    "r_hip", "r_knee", "r_ankle",
)
PARENTS = (-1, 0, 1, 2, 1, 4, 5, 1, 7, 8, 0, 10, 11, 0, 13, 14)

# +x is the body's left side; y is up.
NOMINAL_JOINTS = np.array([
    [0.00, 0.95, 0.0], [0.00, 1.25, 0.0], [0.00, 1.50, 0.0], [0.00, 1.62, 0.0],
    [0.20, 1.45, 0.0], [0.45, 1.45, 0.0], [0.68, 1.45, 0.0],
    [-0.20, 1.45, 0.0], [-0.45, 1.45, 0.0], [-0.68, 1.45, 0.0],
    [0.10, 0.90, 0.0], [0.10, 0.50, 0.0], [0.10, 0.08, 0.0],
    [-0.10, 0.90, 0.0], [-0.10, 0.50, 0.0], [-0.10, 0.08, 0.0],
])

# Far end of the bone each joint rotates; leaves extend their parent bone.
BONE_TIPS = np.array([
    [0.00, 1.25, 0.0], [0.00, 1.50, 0.0], [0.00, 1.62, 0.0], [0.00, 1.79, 0.0],
    [0.45, 1.45, 0.0], [0.68, 1.45, 0.0], [0.78, 1.45, 0.0],
    [-0.45, 1.45, 0.0], [-0.68, 1.45, 0.0], [-0.78, 1.45, 0.0],
    [0.10, 0.50, 0.0], [0.10, 0.08, 0.0], [0.10, 0.02, 0.0],
    [-0.10, 0.50, 0.0], [-0.10, 0.08, 0.0], [-0.10, 0.02, 0.0],
])

REGRESSOR_SUPPORT = 10
_SKIN_EPS = 1e-3


@dataclass(frozen=True)
class _Part:
    name: str
    start: tuple[float, float, float]
    end: tuple[float, float, float]
    radius: tuple[float, float]          # along the two ring axes
    rings: int
    joints: tuple[int, ...]              # joints allowed to influence this part
    sphere: bool = False


_PARTS = (
    _Part("head", (0.0, 1.79, 0.0), (0.0, 1.57, 0.0), (0.11, 0.11), 5, (2, 3), sphere=True),
    _Part("torso", (0.0, 0.85, 0.0), (0.0, 1.52, 0.0), (0.17, 0.10), 8, (0, 1, 2, 4, 7, 10, 13)),
    _Part("l_arm", (0.18, 1.45, 0.0), (0.78, 1.45, 0.0), (0.045, 0.045), 6, (4, 5, 6)),
    _Part("r_arm", (-0.18, 1.45, 0.0), (-0.78, 1.45, 0.0), (0.045, 0.045), 6, (7, 8, 9)),
    _Part("l_leg", (0.10, 0.92, 0.0), (0.10, 0.02, 0.0), (0.06, 0.06), 7, (10, 11, 12)),
    _Part("r_leg", (-0.10, 0.92, 0.0), (-0.10, 0.02, 0.0), (0.06, 0.06), 7, (13, 14, 15)),
)


def _ring_frame(axis: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if abs(axis[1]) > 0.9:
        return np.array([1.0, 0.0, 0.0]), np.array([0.0, 0.0, 1.0])
    return np.array([0.0, 1.0, 0.0]), np.array([0.0, 0.0, 1.0])


def _tube(part: _Part, segments: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vertices, faces (local indices) and radial directions of one closed tube."""
    start, end = np.array(part.start), np.array(part.end)
    axis = (end - start) / np.linalg.norm(end - start)
    u, w = _ring_frame(axis)
    angles = 2.0 * np.pi * np.arange(segments) / segments

    verts, radial = [start], [np.zeros(3)]
    for k in range(part.rings):
        t = (k + 1) / (part.rings + 1)
        if part.sphere:
            phi = np.pi * t
            center = 0.5 * (start + end) - axis * 0.5 * np.linalg.norm(end - start) * np.cos(phi)
            scale = np.sin(phi)
        else:
            center = start + t * (end - start)
            scale = 1.0
        for a in angles:
            offset = scale * (part.radius[0] * np.cos(a) * u + part.radius[1] * np.sin(a) * w)
            verts.append(center + offset)
            radial.append(offset)
    verts.append(end)
    radial.append(np.zeros(3))

    ring = lambda k, s: 1 + k * segments + (s % segments)  # noqa: E731
    last = 1 + part.rings * segments
    faces = []
    for s in range(segments):
        faces.append((0, ring(0, s + 1), ring(0, s)))
        for k in range(part.rings - 1):
            faces.append((ring(k, s), ring(k, s + 1), ring(k + 1, s)))
            faces.append((ring(k, s + 1), ring(k + 1, s + 1), ring(k + 1, s)))
        faces.append((last, ring(part.rings - 1, s), ring(part.rings - 1, s + 1)))
    return np.array(verts), np.array(faces, dtype=np.int64), np.array(radial)


def _segment_distance(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    t = np.clip(((points - a) @ ab) / float(ab @ ab), 0.0, 1.0)
    return np.linalg.norm(points - (a + t[:, None] * ab), axis=1)


def _f32(x: np.ndarray) -> np.ndarray:
    return np.asarray(x, dtype=np.float32).astype(np.float64)


def generate_minibody(segments: int = BODY_RING_SEGMENTS) -> BodyTemplate:
    """Build and validate the procedural humanoid template."""
    n_joints = len(JOINT_NAMES)
    vertices, faces, regions, skin, basis = [], [], [], [], []
    offset = 0
    for part in _PARTS:
        verts, local_faces, radial = _tube(part, segments)
        n = len(verts)
        vertices.append(verts)
        faces.append(local_faces + offset)
        regions.append(np.full(n, REGION_HEAD if part.name == "head" else REGION_BODY, dtype=np.uint8))

        weights = np.zeros((n, n_joints))
        for j in part.joints:
            d = _segment_distance(verts, NOMINAL_JOINTS[j], BONE_TIPS[j])
            weights[:, j] = 1.0 / (d + _SKIN_EPS) ** BODY_SKIN_FALLOFF
        skin.append(weights / weights.sum(axis=1, keepdims=True))

        # height, girth, shoulder width, head size
        part_basis = np.zeros((n, 3, 4))
        part_basis[:, 1, 0] = 0.1 * verts[:, 1]
        if part.name != "head":
            part_basis[:, :, 1] = 0.15 * radial
        if part.name == "torso":
            part_basis[:, 0, 2] = 0.1 * verts[:, 0]
        elif part.name in ("l_arm", "r_arm"):
            part_basis[:, 0, 2] = 0.02 * np.sign(verts[:, 0])
        if part.name == "head":
            part_basis[:, :, 3] = 0.15 * (verts - 0.5 * (np.array(part.start) + np.array(part.end)))
        basis.append(part_basis)
        offset += n

    all_vertices = _f32(np.concatenate(vertices))
    all_skin = np.concatenate(skin)
    all_skin = _f32(all_skin / all_skin.sum(axis=1, keepdims=True))

    regressor = np.zeros((n_joints, len(all_vertices)))
    for j in range(n_joints):
        dist = np.linalg.norm(all_vertices - NOMINAL_JOINTS[j], axis=1)
        nearest = np.argsort(dist, kind="stable")[:REGRESSOR_SUPPORT]
        regressor[j, nearest] = 1.0 / REGRESSOR_SUPPORT
    regressor = _f32(regressor)

    template = BodyTemplate(
        vertices=all_vertices,
        faces=np.concatenate(faces),
        joints=_f32(regressor @ all_vertices),
        parents=np.array(PARENTS, dtype=np.int64),
        skin_weights=all_skin,
        shape_basis=_f32(np.concatenate(basis)),
        joint_regressor=regressor,
        regions=np.concatenate(regions),
    )
    return template.validate()
