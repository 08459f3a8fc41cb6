from __future__ import annotations

import dataclasses

import numpy as np
import pytest

from body.body_model import Pose, apply_shape, forward_kinematics, posed_joints, rodrigues, sample_surface_points
from body.lbm_format import decode_body_model, encode_body_model, load_body_model, write_body_model
from body.motion_format import decode_motion, encode_motion, read_motion, write_motion
from utils.errors import DegenerateError, FormatError, InvariantError, ShapeError, VersionError


def test_minibody_extents(minibody):
    assert (minibody.n_vertices, minibody.n_joints, minibody.n_shape) == (402, 16, 4)
    assert minibody.parents[0] == -1


def test_identity_pose_gives_identity_transforms(minibody):
    transforms = forward_kinematics(minibody, Pose.identity(minibody.n_joints))
    assert np.array_equal(transforms, np.broadcast_to(np.eye(4), transforms.shape))


def test_root_translation_moves_every_joint(minibody):
    shift = np.array([0.1, -0.2, 0.3])
    pose = Pose(np.zeros((minibody.n_joints, 3)), shift)
    moved = posed_joints(minibody, forward_kinematics(minibody, pose))
    np.testing.assert_allclose(moved - minibody.joints, np.broadcast_to(shift, moved.shape), atol=1e-12)


def test_joint_rotates_about_its_rest_location(minibody):
    axis_angle = np.zeros((minibody.n_joints, 3))
    axis_angle[3] = [0.0, 0.8, 0.2]
    transforms = forward_kinematics(minibody, Pose(axis_angle, np.zeros(3)))
    moved = posed_joints(minibody, transforms)
    np.testing.assert_allclose(moved[3], minibody.joints[3], atol=1e-12)
    np.testing.assert_array_equal(transforms[:3], np.broadcast_to(np.eye(4), (3, 4, 4)))


@pytest.mark.parametrize("seed", range(5))
def test_rodrigues_is_a_rotation(seed):
    rot = rodrigues(np.random.default_rng(seed).normal(size=3))
    np.testing.assert_allclose(rot.T @ rot, np.eye(3), atol=1e-12)
    assert np.linalg.det(rot) == pytest.approx(1.0)
    assert np.array_equal(rodrigues(np.zeros(3)), np.eye(3))


def test_pose_validates_its_arrays():
    with pytest.raises(ShapeError):
        Pose(np.zeros((4, 2)), np.zeros(3))
    with pytest.raises(InvariantError):
        Pose(np.full((4, 3), np.nan), np.zeros(3))


def test_zero_shape_keeps_the_template(minibody):
    shaped = apply_shape(minibody, np.zeros(minibody.n_shape))
    np.testing.assert_array_equal(shaped.vertices, minibody.vertices)
    np.testing.assert_array_equal(shaped.joints, minibody.joints)
    with pytest.raises(ShapeError):
        apply_shape(minibody, np.zeros(minibody.n_shape + 1))


def test_shape_moves_joints_with_their_vertices(minibody):
    beta = np.array([1.0, 0.0, 0.0, 0.0])
    shaped = apply_shape(minibody, beta)
    displacement = shaped.vertices - minibody.vertices
    np.testing.assert_allclose(shaped.joints - minibody.joints, minibody.joint_regressor @ displacement, atol=1e-12)


def test_sampling_is_deterministic(minibody):
    a = sample_surface_points(minibody, 200, seed=4)
    b = sample_surface_points(minibody, 200, seed=4)
    c = sample_surface_points(minibody, 200, seed=5)
    for field in ("positions", "face_index", "barycentric", "regions"):
        np.testing.assert_array_equal(getattr(a, field), getattr(b, field))
    assert not np.array_equal(a.positions, c.positions)


def test_samples_lie_on_their_faces(minibody):
    points = sample_surface_points(minibody, 300, seed=0)
    assert (points.barycentric >= 0.0).all()
    np.testing.assert_allclose(points.barycentric.sum(axis=1), 1.0, atol=1e-12)
    corners = minibody.vertices[minibody.faces[points.face_index]]
    np.testing.assert_allclose(np.einsum("nk,nkc->nc", points.barycentric, corners), points.positions)


def test_head_region_is_sampled(minibody):
    points = sample_surface_points(minibody, 500, seed=0)
    assert points.head_mask.any() and (~points.head_mask).any()
    assert points.positions[points.head_mask, 1].min() > points.positions[~points.head_mask, 1].min()


def test_sampling_rejects_bad_requests(minibody):
    with pytest.raises(ShapeError):
        sample_surface_points(minibody, 0, seed=0)
    flat = np.zeros_like(minibody.vertices)
    with pytest.raises(DegenerateError):
        sample_surface_points(minibody, 5, seed=0, vertices=flat)


def test_validate_names_the_broken_field(minibody):
    parents = minibody.parents.copy()
    parents[1] = 5
    with pytest.raises(InvariantError, match="parents"):
        dataclasses.replace(minibody, parents=parents).validate()
    with pytest.raises(InvariantError, match="skin_weights"):
        dataclasses.replace(minibody, skin_weights=minibody.skin_weights * 2.0).validate()
    with pytest.raises(InvariantError, match="regions"):
        dataclasses.replace(minibody, regions=np.zeros_like(minibody.regions)).validate()


# ── .lbm ──────────────────────────────────────────────────────────────────────


def test_lbm_roundtrip_is_exact(minibody, tmp_path):
    path = tmp_path / "body.lbm"
    write_body_model(minibody, path)
    loaded = load_body_model(path)
    for field in dataclasses.fields(minibody):
        np.testing.assert_array_equal(getattr(loaded, field.name), getattr(minibody, field.name))
    assert encode_body_model(loaded) == path.read_bytes()
    assert (loaded.n_vertices, loaded.n_joints, loaded.n_shape) == (402, 16, 4)


def test_lbm_rejects_damage(minibody):
    data = encode_body_model(minibody)
    with pytest.raises(VersionError):
        decode_body_model(b"XBM1" + data[4:])
    with pytest.raises(FormatError, match="truncated"):
        decode_body_model(data[:-7])


def test_lbm_missing_section_is_named(minibody):
    data = encode_body_model(minibody)
    # REGN is written last: 4-byte tag + u64 length + u32 V + V label bytes
    tail = 4 + 8 + 4 + minibody.n_vertices
    with pytest.raises(FormatError, match="REGN"):
        decode_body_model(data[:-tail])


# ── motion ────────────────────────────────────────────────────────────────────


def _frames(n_frames: int, n_joints: int, seed: int = 0) -> list[Pose]:
    rng = np.random.default_rng(seed)
    return [Pose(rng.normal(size=(n_joints, 3)), rng.normal(size=3)) for _ in range(n_frames)]


def test_motion_roundtrip_is_exact(tmp_path):
    frames = _frames(3, 16)
    write_motion(frames, tmp_path / "walk.motion")
    loaded = read_motion(tmp_path / "walk.motion")
    assert len(loaded) == 3
    for a, b in zip(frames, loaded):
        np.testing.assert_array_equal(a.axis_angle, b.axis_angle)
        np.testing.assert_array_equal(a.root_translation, b.root_translation)
    assert encode_motion(frames).startswith("# motion frames=3 joints=16\n")


@pytest.mark.parametrize(
    "text, message",
    [
        ("", "must start"),
        ("# motion frames=2 joints=1\n0 0 0 0 0 0\n", "declares 2 frames"),
        ("# motion frames=1 joints=1\n0 0 0 0 0\n", "expected 6"),
        ("# motion frames=1 joints=1\n0 0 x 0 0 0\n", "frame 0"),
        ("# motion frames=0 joints=1\n", "0 frames"),
        ("# motion joints=1\n0 0 0 0 0 0\n", "bad motion header"),
    ],
)
def test_motion_errors(text, message):
    with pytest.raises(FormatError, match=message):
        decode_motion(text)


def test_motion_needs_frames_of_one_skeleton():
    with pytest.raises(FormatError):
        encode_motion([])
    with pytest.raises(FormatError, match="frame 1"):
        encode_motion(_frames(1, 4) + _frames(1, 5))
