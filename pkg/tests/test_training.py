from __future__ import annotations

import io

import numpy as np
import pytest

from autodiff import Tensor
from body.body_model import Pose
from conftest import SMALL_SKIN, TINY_SCENE
from core.state_manager import RunStatus
from network.config import micro_config
from network.weights import init_weights
from rendering.config import RenderConfig
from skinning.skin_field import query_weights
from training.checkpoint import Checkpoint, decode_checkpoint, encode_checkpoint
from training.evaluate import evaluate, predicted_avatar, resolve_holdout, write_report
from training.losses import LossReport, LossWeights, acap_loss, color_loss, mask_loss
from training.optimizer import AdamState, TrainConfig
from training.scene import (
    SceneConfig,
    crop_head,
    fit_image,
    head_box,
    head_points,
    make_synthetic_scene,
    pose_avatar,
    read_scene,
    render_view,
    write_scene,
)
from training.trainer import Trainer, prepare_training_data, step_rng
from utils.config import ACAP_THRESHOLD
from utils.errors import ConfigError

FAST = TrainConfig(targets_per_step=2)


@pytest.fixture(scope="module")
def training_data(tiny_scene, micro_cfg):
    return prepare_training_data(tiny_scene, micro_cfg, skin_cfg=SMALL_SKIN)


def _same_weights(a, b) -> None:
    for key, value in a.arrays().items():
        np.testing.assert_array_equal(b[key].data, value, err_msg=key)


# ── scene ─────────────────────────────────────────────────────────────────────


def test_scene_layout(tiny_scene):
    assert len(tiny_scene.views) == 4
    assert tiny_scene.train_indices == [0, 1, 2] and tiny_scene.holdout_indices == [3]
    assert len(tiny_scene.gt) == TINY_SCENE.n_gaussians
    assert tiny_scene.source.rgb.shape == (16, 16, 3) and tiny_scene.source.mask.shape == (16, 16, 1)
    np.testing.assert_allclose(tiny_scene.gt_skin.sum(axis=1), 1.0, atol=1e-5)


def test_scene_is_deterministic(minibody, tiny_scene):
    again = make_synthetic_scene(minibody, TINY_SCENE, SMALL_SKIN, RenderConfig())
    for a, b in zip(tiny_scene.views, again.views):
        np.testing.assert_array_equal(a.rgb, b.rgb)
        np.testing.assert_array_equal(a.camera.world_to_camera, b.camera.world_to_camera)
    np.testing.assert_array_equal(tiny_scene.gt.positions.data, again.gt.positions.data)


def test_ground_truth_reproduces_every_view(tiny_scene):
    for view in tiny_scene.views:
        posed = pose_avatar(tiny_scene.gt, tiny_scene.gt_skin, tiny_scene.template, view.pose)
        rgb, alpha = render_view(posed, view.camera, RenderConfig())
        assert color_loss(Tensor(rgb), view.rgb).item() == 0.0
        assert mask_loss(Tensor(alpha), view.mask).item() == 0.0
    offsets = Tensor(tiny_scene.gt.positions.data - tiny_scene.anchors.positions)
    assert acap_loss(offsets, ACAP_THRESHOLD).item() == 0.0


def test_scene_directory_roundtrip(tiny_scene, tmp_path):
    loaded = read_scene(write_scene(tiny_scene, tmp_path / "scene"))
    assert loaded.config == tiny_scene.config
    np.testing.assert_array_equal(loaded.anchors.positions, tiny_scene.anchors.positions)
    np.testing.assert_array_equal(loaded.gt_skin, tiny_scene.gt_skin)
    for name, value in tiny_scene.gt.arrays().items():
        np.testing.assert_array_equal(getattr(loaded.gt, name).data, value)
    for a, b in zip(tiny_scene.views, loaded.views):
        assert (a.index, a.holdout, a.head_box) == (b.index, b.holdout, b.head_box)
        np.testing.assert_array_equal(a.rgb, b.rgb)
        np.testing.assert_array_equal(a.pose.axis_angle, b.pose.axis_angle)
    assert (tmp_path / "scene" / "view_000_rgb.png").exists()


def test_head_boxes_come_from_the_skinned_head_anchors(tiny_scene, small_field):
    anchor_skin = query_weights(small_field, tiny_scene.anchors.positions)
    for view in tiny_scene.views:
        points = head_points(tiny_scene.template, tiny_scene.anchors, anchor_skin, view.pose)
        assert view.head_box == head_box(view.camera, points)
    # the source view is in rest pose, where reconstruct derives its fallback crop
    identity = Pose.identity(tiny_scene.template.n_joints)
    rest = head_points(tiny_scene.template, tiny_scene.anchors, anchor_skin, identity)
    source = tiny_scene.source
    np.testing.assert_allclose(head_box(source.camera, rest), source.head_box, atol=1e-9)


def test_scene_config_caps_offsets():
    with pytest.raises(ValueError):
        SceneConfig(offset_max=0.1)


def test_image_fitting():
    img = np.random.default_rng(0).uniform(0.0, 1.0, (16, 16, 3))
    np.testing.assert_array_equal(fit_image(img, 16), img)
    np.testing.assert_allclose(fit_image(img, 8), img.reshape(8, 2, 8, 2, 3).mean(axis=(1, 3)), atol=1e-12)
    # a box covering the frame exactly samples pixel centres onto themselves
    np.testing.assert_allclose(crop_head(img, (-0.5, -0.5, 16.0), 16), img, atol=1e-12)
    assert crop_head(img, (2.0, 3.0, 6.0), 4).shape == (4, 4, 3)


# ── training ──────────────────────────────────────────────────────────────────


def test_step_rng_is_keyed_by_seed_and_step():
    assert step_rng(3, 7).integers(1 << 30) == step_rng(3, 7).integers(1 << 30)
    assert step_rng(3, 7).integers(1 << 30) != step_rng(3, 8).integers(1 << 30)


def test_anchor_count_must_match_the_network(tiny_scene):
    with pytest.raises(ConfigError):
        prepare_training_data(tiny_scene, micro_config(n_points=5), skin_cfg=SMALL_SKIN)


def test_training_is_deterministic(training_data):
    a, b = Trainer(training_data, FAST), Trainer(training_data, FAST)
    ra, rb = a.fit(2), b.fit(2)
    assert ra == rb
    _same_weights(a.weights, b.weights)
    assert a.state.status == RunStatus.DONE and a.state.step == 2


def test_resume_is_bit_exact(training_data):
    straight = Trainer(training_data, FAST)
    expected = straight.fit(3)

    first = Trainer(training_data, FAST)
    head = first.fit(1)
    ckpt = decode_checkpoint(encode_checkpoint(first.checkpoint()))
    assert ckpt.step == 1
    resumed = Trainer(training_data, FAST, checkpoint=ckpt)
    tail = resumed.fit(2)

    assert head + tail == expected
    _same_weights(straight.weights, resumed.weights)
    for key in straight.adam.m:
        np.testing.assert_array_equal(straight.adam.v[key], resumed.adam.v[key])


def test_loss_log_lines_parse_back(training_data):
    log = io.StringIO()
    reports = Trainer(training_data, FAST).fit(2, log=log)
    lines = log.getvalue().splitlines()
    assert [LossReport.from_record(line) for line in lines] == list(enumerate(reports))


def test_resume_rejects_a_different_network(training_data):
    weights = init_weights(micro_config(n_layers=2))
    ckpt = Checkpoint(weights, AdamState.zeros_like(weights.arrays()))
    with pytest.raises(ConfigError):
        Trainer(training_data, FAST, checkpoint=ckpt)


# ── evaluation ────────────────────────────────────────────────────────────────


def test_ground_truth_bypass_hits_the_cap(tiny_scene, small_skin, tmp_path):
    report = evaluate(None, tiny_scene, skin_cfg=small_skin, bypass_gt=True)
    assert report["source"] == "ground_truth"
    assert [row["psnr"] for row in report["rows"]] == [100.0]
    assert report["mean"]["ssim"] == pytest.approx(1.0)
    assert write_report(report, tmp_path / "report.json").read_text().startswith("{")


def test_network_evaluation_scores_every_requested_view(tiny_scene, micro_weights, small_skin):
    report = evaluate(micro_weights, tiny_scene, skin_cfg=small_skin)
    assert [row["view"] for row in report["rows"]] == [3]
    assert 0.0 < report["rows"][0]["psnr"] < 100.0
    g, skin = predicted_avatar(micro_weights, tiny_scene, small_skin)
    assert skin.shape == (len(g), tiny_scene.template.n_joints)


def test_holdout_must_be_disjoint_from_training(tiny_scene):
    assert resolve_holdout(tiny_scene, None) == [3]
    with pytest.raises(ConfigError, match="training views"):
        resolve_holdout(tiny_scene, [1, 3])
    with pytest.raises(ConfigError, match="do not exist"):
        resolve_holdout(tiny_scene, [9])
    with pytest.raises(ConfigError):
        evaluate(None, tiny_scene)


def test_training_split_scores_the_training_views(tiny_scene, small_skin):
    report = evaluate(None, tiny_scene, skin_cfg=small_skin, bypass_gt=True, split="train")
    assert [row["view"] for row in report["rows"]] == [0, 1, 2]
    assert report["split"] == "train" and report["mean"]["psnr"] == 100.0
    with pytest.raises(ConfigError, match="training split"):
        evaluate(None, tiny_scene, [3], bypass_gt=True, split="train")


# ── acceptance ────────────────────────────────────────────────────────────────


@pytest.mark.slow
def test_micro_network_overfits_a_tiny_scene(training_data):
    trainer = Trainer(training_data, TrainConfig(targets_per_step=3, learning_rate=5e-3), LossWeights())
    reports = trainer.fit(60)
    early = np.mean([r.total for r in reports[:5]])
    late = np.mean([r.total for r in reports[-5:]])
    assert late < 0.95 * early
    assert trainer.state.best_total <= late
