from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from avatar.lha_format import read_avatar
from body.body_model import Pose
from body.motion_format import write_motion
from cli.app import main
from cli.config_file import build_config, parse_config_text
from training.checkpoint import load_checkpoint
from utils.errors import ConfigError

SMALL_RUN = """
[network]
token_dim = 16
pe_frequencies = 4
n_layers = 1
n_heads = 2
encoder_dim = 16
mlp_ratio = 2
body_resolution = 16
body_patch = 8
body_encoder_depth = 1
head_resolution = 8
head_patch = 4
head_encoder_depth = 4
head_tap_depths = [1, 2, 3, 4]
n_points = 12

[skin]
resolution = 16
diffusion_steps = 4

[train]
targets_per_step = 2
"""

SCENE_FLAGS = ["--gaussians", "12", "--views", "3", "--holdout-views", "1", "--resolution", "16"]


@pytest.fixture(scope="module")
def workdir(tmp_path_factory) -> Path:
    root = tmp_path_factory.mktemp("cli")
    (root / "run.cfg").write_text(SMALL_RUN, encoding="utf-8")
    return root


@pytest.fixture(scope="module")
def scene_dir(workdir) -> Path:
    out = workdir / "scene"
    assert main(["make-data", "--out", str(out), "--config", str(workdir / "run.cfg"), *SCENE_FLAGS]) == 0
    return out


@pytest.fixture(scope="module")
def checkpoint(workdir, scene_dir) -> Path:
    out = workdir / "ckpt" / "run.lhw"
    code = main(["train", "--scene", str(scene_dir), "--out-checkpoint", str(out),
                 "--config", str(workdir / "run.cfg"), "--iterations", "1"])
    assert code == 0
    return out


@pytest.fixture(scope="module")
def avatar(workdir, scene_dir, checkpoint) -> Path:
    out = workdir / "avatar.lha"
    code = main(["reconstruct", "--image", str(scene_dir / "view_000_rgb.npy"), "--checkpoint", str(checkpoint),
                 "--out-avatar", str(out), "--config", str(workdir / "run.cfg")])
    assert code == 0
    return out


# ── exit codes and configuration ──────────────────────────────────────────────


def test_usage_errors_exit_with_two(workdir):
    assert main([]) == 2
    assert main(["gradcheck", "--suite", "everything"]) == 2
    assert main(["eval", "--scene", str(workdir / "nowhere"), "--gt-bypass"]) == 2


def test_unknown_config_section_exits_with_two(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("[optimizer]\nlr = 1\n", encoding="utf-8")
    assert main(["gradcheck", "--suite", "ops", "--config", str(cfg), "--print-config"]) == 2
    cfg.write_text("[train]\nlearning_rate = -1\n", encoding="utf-8")
    assert main(["gradcheck", "--suite", "ops", "--config", str(cfg), "--print-config"]) == 2
    assert main(["gradcheck", "--suite", "ops", "--config", str(tmp_path / "missing.cfg")]) == 2


def test_printed_config_feeds_back(workdir, tmp_path, capsys):
    assert main(["make-data", "--out", str(tmp_path), "--config", str(workdir / "run.cfg"),
                 "--resolution", "24", "--print-config"]) == 0
    printed = capsys.readouterr().out
    assert "resolution = 24" in printed and "[network]" in printed
    again = tmp_path / "printed.cfg"
    again.write_text(printed, encoding="utf-8")
    assert main(["make-data", "--out", str(tmp_path), "--config", str(again), "--print-config"]) == 0
    assert capsys.readouterr().out == printed


def test_flags_override_the_file():
    run = build_config(parse_config_text("[scene]\nresolution = 32\nseed = 4\n"), {"scene": {"resolution": 16}})
    assert (run.scene.resolution, run.scene.seed) == (16, 4)
    assert run.explicit == frozenset({"scene"})
    with pytest.raises(ConfigError, match="unknown section"):
        parse_config_text("[mystery]\nx = 1\n")


# ── pipeline ──────────────────────────────────────────────────────────────────


def test_make_data_writes_a_scene(scene_dir):
    manifest = json.loads((scene_dir / "scene.json").read_text(encoding="utf-8"))
    assert len(manifest["views"]) == 4
    assert sorted(p.name for p in scene_dir.glob("view_*_rgb.npy")) == [f"view_00{k}_rgb.npy" for k in range(4)]


def test_train_writes_checkpoint_and_log(checkpoint):
    ckpt = load_checkpoint(checkpoint)
    assert ckpt.step == 1 and ckpt.cfg.token_dim == 16
    lines = (checkpoint.parent / "train.log").read_text(encoding="utf-8").splitlines()
    assert len(lines) == 1 and lines[0].startswith("step=0 color=")


def test_train_resumes_and_appends(workdir, scene_dir, checkpoint, capsys):
    log = workdir / "resume.log"
    out = workdir / "resumed.lhw"
    assert main(["train", "--scene", str(scene_dir), "--out-checkpoint", str(out), "--resume", str(checkpoint),
                 "--config", str(workdir / "run.cfg"), "--iterations", "1", "--log", str(log)]) == 0
    assert load_checkpoint(out).step == 2
    assert capsys.readouterr().out.startswith("step=1 ")


def test_train_without_iterations(workdir, scene_dir, capsys):
    out = workdir / "zero.lhw"
    assert main(["train", "--scene", str(scene_dir), "--out-checkpoint", str(out),
                 "--config", str(workdir / "run.cfg"), "--iterations", "0", "--export-f32"]) == 0
    assert "no iterations run" in capsys.readouterr().out
    assert load_checkpoint(out).step == 0


def test_train_sizes_the_network_to_the_scene(tmp_path):
    cfg = tmp_path / "skin.cfg"
    cfg.write_text("[skin]\nresolution = 16\ndiffusion_steps = 4\n", encoding="utf-8")
    scene = tmp_path / "scene"
    assert main(["make-data", "--out", str(scene), "--config", str(cfg), "--gaussians", "10",
                 "--views", "2", "--holdout-views", "0", "--resolution", "16"]) == 0
    first = tmp_path / "first.lhw"
    assert main(["train", "--scene", str(scene), "--out-checkpoint", str(first),
                 "--config", str(cfg), "--iterations", "0"]) == 0
    assert load_checkpoint(first).cfg.n_points == 10
    again = tmp_path / "again.lhw"
    assert main(["train", "--scene", str(scene), "--out-checkpoint", str(again), "--resume", str(first),
                 "--config", str(cfg), "--iterations", "0"]) == 0
    assert load_checkpoint(again).cfg == load_checkpoint(first).cfg


def test_reconstruct_writes_a_skinned_avatar(avatar):
    loaded = read_avatar(avatar)
    assert len(loaded.gaussians) == 12 and loaded.n_joints == 16
    np.testing.assert_allclose(loaded.skin_weights.sum(axis=1), 1.0, atol=1e-5)


def test_reconstruct_with_explicit_camera_and_crop(workdir, scene_dir, checkpoint):
    out = workdir / "explicit.lha"
    code = main(["reconstruct", "--image", str(scene_dir / "view_000_rgb.png"), "--checkpoint", str(checkpoint),
                 "--camera", str(scene_dir / "view_000.cam"), "--head-crop", str(scene_dir / "view_000_rgb.png"),
                 "--out-avatar", str(out), "--config", str(workdir / "run.cfg")])
    assert code == 0 and out.is_file()


def test_reconstruct_rejects_a_foreign_network(workdir, scene_dir, checkpoint, tmp_path):
    cfg = tmp_path / "other.cfg"
    cfg.write_text(SMALL_RUN.replace("n_layers = 1", "n_layers = 2"), encoding="utf-8")
    assert main(["reconstruct", "--image", str(scene_dir / "view_000_rgb.npy"), "--checkpoint", str(checkpoint),
                 "--out-avatar", str(tmp_path / "a.lha"), "--config", str(cfg)]) == 2


def test_reconstruct_runtime_failure_exits_with_one(workdir, scene_dir, tmp_path):
    broken = tmp_path / "broken.lhw"
    broken.write_bytes(b"not a checkpoint")
    assert main(["reconstruct", "--image", str(scene_dir / "view_000_rgb.npy"), "--checkpoint", str(broken),
                 "--out-avatar", str(tmp_path / "a.lha")]) == 1


def test_animate_renders_every_frame(workdir, scene_dir, avatar, tmp_path):
    rng = np.random.default_rng(0)
    frames = [Pose(rng.uniform(-0.3, 0.3, (16, 3)), np.zeros(3)) for _ in range(3)]
    write_motion(frames, tmp_path / "walk.motion")
    out = tmp_path / "frames"
    assert main(["animate", "--avatar", str(avatar), "--motion", str(tmp_path / "walk.motion"),
                 "--camera", str(scene_dir / "view_000.cam"), "--out-dir", str(out), "--raw"]) == 0
    assert sorted(p.name for p in out.glob("*.png")) == ["frame_0000.png", "frame_0001.png", "frame_0002.png"]
    assert np.load(out / "frame_0002.npy").shape == (16, 16, 3)


def test_animate_rejects_a_mismatched_skeleton(scene_dir, avatar, tmp_path):
    write_motion([Pose(np.zeros((4, 3)), np.zeros(3))], tmp_path / "short.motion")
    assert main(["animate", "--avatar", str(avatar), "--motion", str(tmp_path / "short.motion"),
                 "--camera", str(scene_dir / "view_000.cam"), "--out-dir", str(tmp_path / "out")]) == 2


def test_eval_ground_truth_bypass(scene_dir, tmp_path, capsys):
    report_path = tmp_path / "report.json"
    assert main(["eval", "--scene", str(scene_dir), "--gt-bypass", "--out", str(report_path)]) == 0
    assert "100.000" in capsys.readouterr().out
    report = json.loads(report_path.read_text(encoding="utf-8"))
    assert report["source"] == "ground_truth" and report["rows"][0]["view"] == 3


def test_eval_scores_training_views_on_request(scene_dir, capsys):
    assert main(["eval", "--scene", str(scene_dir), "--gt-bypass", "--split", "train"]) == 0
    rows = [line.split() for line in capsys.readouterr().out.splitlines() if line.startswith("view")]
    assert [row[1] for row in rows] == ["0", "1", "2"]
    assert main(["eval", "--scene", str(scene_dir), "--gt-bypass", "--split", "train", "--holdout", "3"]) == 2


def test_eval_needs_a_checkpoint_and_a_valid_holdout(scene_dir, checkpoint, workdir):
    assert main(["eval", "--scene", str(scene_dir)]) == 2
    assert main(["eval", "--scene", str(scene_dir), "--gt-bypass", "--holdout", "0,3"]) == 2
    assert main(["eval", "--scene", str(scene_dir), "--checkpoint", str(checkpoint),
                 "--config", str(workdir / "run.cfg")]) == 0
