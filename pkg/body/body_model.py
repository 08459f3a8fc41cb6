"""
body_model.py
-------------
Simplified parametric body: template mesh, skeleton, linear shape space,
rest-relative forward kinematics and area-weighted surface sampling.

Regions are per-vertex labels (REGION_BODY / REGION_HEAD).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from utils.config import BODY_WEIGHT_ATOL, REGION_BODY, REGION_HEAD
from utils.errors import DegenerateError, InvariantError, ShapeError


@dataclass(frozen=True)
class BodyTemplate:
    vertices: np.ndarray          # (V, 3) canonical pose, meters
    faces: np.ndarray             # (F, 3) vertex indices
    joints: np.ndarray            # (J, 3) rest positions
    parents: np.ndarray           # (J,) parent index, -1 for the root
    skin_weights: np.ndarray      # (V, J)
    shape_basis: np.ndarray       # (V, 3, B)
    joint_regressor: np.ndarray   # (J, V) rows average each joint's assigned vertices
    regions: np.ndarray           # (V,) uint8

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_joints(self) -> int:
        return self.joints.shape[0]

    @property
    def n_shape(self) -> int:
        return self.shape_basis.shape[2]

    def validate(self) -> BodyTemplate:
        """Check every structural invariant; raises InvariantError naming field and index."""
        v, j = self.n_vertices, self.n_joints
        expected = {
            "vertices": (v, 3),
            "faces": (self.faces.shape[0], 3),
            "joints": (j, 3),
            "parents": (j,),
            "skin_weights": (v, j),
            "shape_basis": (v, 3, self.shape_basis.shape[-1] if self.shape_basis.ndim == 3 else -1),
            "joint_regressor": (j, v),
            "regions": (v,),
        }
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise InvariantError(name, f"shape {getattr(self, name).shape}, expected {shape}")
        if j == 0:
            raise InvariantError("joints", "model has no joints")

        for name in ("vertices", "joints", "skin_weights", "shape_basis", "joint_regressor"):
            arr = getattr(self, name)
            if not np.isfinite(arr).all():
                raise InvariantError(name, "non-finite value", int(np.flatnonzero(~np.isfinite(arr))[0]))

        if self.faces.size and (self.faces.min() < 0 or self.faces.max() >= v):
            bad = int(np.flatnonzero((self.faces < 0) | (self.faces >= v))[0]) // 3
            raise InvariantError("faces", "vertex index out of range", bad)

        if self.parents[0] != -1:
            raise InvariantError("parents", "root parent must be -1", 0)
        for k in range(1, j):
            if not 0 <= self.parents[k] < k:
                raise InvariantError("parents", f"parent {int(self.parents[k])} must precede joint {k}", k)

        _check_rows("skin_weights", "weights", self.skin_weights)
        _check_rows("joint_regressor", "regressor", self.joint_regressor)

        labels = set(np.unique(self.regions).tolist())
        if not labels <= {REGION_BODY, REGION_HEAD}:
            raise InvariantError("regions", f"unknown labels {sorted(labels - {REGION_BODY, REGION_HEAD})}")
        if REGION_HEAD not in labels or REGION_BODY not in labels:
            raise InvariantError("regions", "need at least one head and one body vertex")
        return self


def _check_rows(field: str, what: str, rows: np.ndarray) -> None:
    if (rows < 0.0).any():
        bad = int(np.flatnonzero((rows < 0.0).any(axis=1))[0])
        raise InvariantError(field, f"{what} row {bad} has a negative entry", bad)
    sums = rows.sum(axis=1)
    off = np.abs(sums - 1.0) > BODY_WEIGHT_ATOL
    if off.any():
        bad = int(np.flatnonzero(off)[0])
        raise InvariantError(field, f"{what} row {bad} not normalized (sum {float(sums[bad])!r})", bad)


@dataclass(frozen=True)
class Pose:
    axis_angle: np.ndarray        # (J, 3) radians, rest-relative
    root_translation: np.ndarray  # (3,)

    @classmethod
    def identity(cls, n_joints: int) -> Pose:
        return cls(np.zeros((n_joints, 3)), np.zeros(3))

    def __post_init__(self) -> None:
        aa = np.asarray(self.axis_angle, dtype=np.float64)
        tr = np.asarray(self.root_translation, dtype=np.float64)
        if aa.ndim != 2 or aa.shape[1] != 3 or tr.shape != (3,):
            raise ShapeError(f"pose needs (J, 3) axis-angle and (3,) translation, got {aa.shape}, {tr.shape}")
        if not (np.isfinite(aa).all() and np.isfinite(tr).all()):
            raise InvariantError("pose", "non-finite pose parameter")
        object.__setattr__(self, "axis_angle", aa)
        object.__setattr__(self, "root_translation", tr)

    @property
    def n_joints(self) -> int:
        return self.axis_angle.shape[0]


@dataclass(frozen=True)
class ShapedBody:
    vertices: np.ndarray
    joints: np.ndarray


@dataclass(frozen=True)
class SampledPoints:
    positions: np.ndarray     # (N, 3)
    face_index: np.ndarray    # (N,)
    barycentric: np.ndarray   # (N, 3)
    regions: np.ndarray       # (N,) uint8

    def __len__(self) -> int:
        return self.positions.shape[0]

    @property
    def head_mask(self) -> np.ndarray:
        return self.regions == REGION_HEAD


# ── Shape ─────────────────────────────────────────────────────────────────────


def apply_shape(template: BodyTemplate, beta: np.ndarray) -> ShapedBody:
    """Linear shape blend; joints move with the regressed displacement of their vertices."""
    beta = np.asarray(beta, dtype=np.float64)
    if beta.shape != (template.n_shape,):
        raise ShapeError(f"beta has length {beta.shape}, model expects {template.n_shape}")
    displacement = np.einsum("vcb,b->vc", template.shape_basis, beta)
    vertices = template.vertices + displacement
    joints = template.joints + template.joint_regressor @ displacement
    return ShapedBody(vertices, joints)


# ── Kinematics ────────────────────────────────────────────────────────────────


def rodrigues(axis_angle: np.ndarray) -> np.ndarray:
    """Rotation matrix of an axis-angle vector; exactly I at zero."""
    theta = float(np.sqrt(np.dot(axis_angle, axis_angle)))
    if theta == 0.0:
        return np.eye(3)
    k = axis_angle / theta
    kx = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
    return np.eye(3) + np.sin(theta) * kx + (1.0 - np.cos(theta)) * (kx @ kx)


def _about(rotation: np.ndarray, pivot: np.ndarray) -> np.ndarray:
    out = np.eye(4)
    out[:3, :3] = rotation
    out[:3, 3] = pivot - rotation @ pivot
    return out


def forward_kinematics(
    template: BodyTemplate,
    pose: Pose,
    rest_joints: np.ndarray | None = None,
) -> np.ndarray:
    """(J, 4, 4) world transforms relative to the rest pose.

    Each joint rotates about its rest location, composed parent-to-child;
    the root translation applies to every joint.
    """
    joints = template.joints if rest_joints is None else np.asarray(rest_joints, dtype=np.float64)
    if pose.n_joints != template.n_joints:
        raise ShapeError(f"pose has {pose.n_joints} joints, model has {template.n_joints}")
    transforms = np.empty((template.n_joints, 4, 4))
    for j in range(template.n_joints):
        local = _about(rodrigues(pose.axis_angle[j]), joints[j])
        parent = int(template.parents[j])
        if parent < 0:
            if pose.root_translation.any():
                shift = np.eye(4)
                shift[:3, 3] = pose.root_translation
                local = shift @ local
            transforms[j] = local
        else:
            transforms[j] = transforms[parent] @ local
    return transforms


def posed_joints(template: BodyTemplate, transforms: np.ndarray) -> np.ndarray:
    homogeneous = np.concatenate([template.joints, np.ones((template.n_joints, 1))], axis=1)
    return np.einsum("jab,jb->ja", transforms, homogeneous)[:, :3]


# ── Sampling ──────────────────────────────────────────────────────────────────


def face_areas(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    a, b, c = (vertices[faces[:, k]] for k in range(3))
    return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


def sample_surface_points(
    template: BodyTemplate,
    n: int,
    seed: int,
    vertices: np.ndarray | None = None,
) -> SampledPoints:
    """Area-weighted triangle choice with uniform barycentrics; deterministic per seed."""
    if n < 1:
        raise ShapeError(f"need at least one sample, got {n}")
    verts = template.vertices if vertices is None else vertices
    areas = face_areas(verts, template.faces)
    total = float(areas.sum())
    if not total > 0.0:
        raise DegenerateError("mesh has zero total area")

    rng = np.random.default_rng(seed)
    face_index = rng.choice(len(areas), size=n, p=areas / total)
    r1, r2 = rng.random((2, n))
    root = np.sqrt(r1)
    bary = np.stack([1.0 - root, root * (1.0 - r2), root * r2], axis=1)

    tri = verts[template.faces[face_index]]                     # (n, 3, 3)
    positions = np.einsum("nk,nkc->nc", bary, tri)
    head_votes = (template.regions[template.faces[face_index]] == REGION_HEAD).sum(axis=1)
    regions = np.where(2 * head_votes >= 3, REGION_HEAD, REGION_BODY).astype(np.uint8)
    return SampledPoints(positions, face_index.astype(np.int64), bary, regions)
