from __future__ import annotations

from pathlib import Path

import pytest

from cli.config_file import load_config
from conftest import SMALL_SKIN, TINY_SCENE
from performance.thread_manager import TileWorkerPool
from training.optimizer import TrainConfig
from training.overfit import OverfitFixture, OverfitResult, overfit_fixture, run_overfit
from utils.config import OVERFIT_CHECK_STEP, OVERFIT_HOLDOUT_PSNR, OVERFIT_LOSS_RATIO, OVERFIT_TRAIN_PSNR

OVERFIT_CFG = Path(__file__).resolve().parents[1] / "configs" / "overfit.cfg"


def test_fixture_pins_the_overfit_values():
    fx = overfit_fixture()
    net, scene, train = fx.network, fx.scene, fx.train
    assert (net.token_dim, net.n_layers, net.n_points) == (64, 2, 500)
    assert (scene.n_gaussians, scene.n_views, scene.n_holdout, scene.resolution) == (500, 8, 4, 128)
    assert (train.learning_rate, train.weight_decay, train.grad_clip) == (4e-4, 5e-4, 0.1)
    assert (train.iterations, train.targets_per_step) == (2000, 4)


def test_bundled_config_matches_the_fixture():
    run = load_config(OVERFIT_CFG)
    fx = overfit_fixture()
    assert (run.network, run.scene, run.train) == (fx.network, fx.scene, fx.train)
    assert (run.skin, run.render, run.loss) == (fx.skin, fx.render, fx.loss)
    assert run.explicit == frozenset({"network", "scene", "train"})


def test_overfit_run_scores_both_splits(minibody, micro_cfg):
    fx = OverfitFixture(micro_cfg, TINY_SCENE, TrainConfig(targets_per_step=2, iterations=2), SMALL_SKIN)
    result = run_overfit(minibody, fx)
    assert len(result.reports) == 2
    assert result.loss_ratio(1) == result.reports[1].total / result.reports[0].total
    assert [row["view"] for row in result.train_report["rows"]] == [0, 1, 2]
    assert [row["view"] for row in result.holdout_report["rows"]] == [3]
    assert 0.0 < result.holdout_psnr < 100.0


# ── acceptance ────────────────────────────────────────────────────────────────


@pytest.fixture(scope="module")
def overfit_run(minibody) -> OverfitResult:
    with TileWorkerPool() as pool:
        return run_overfit(minibody, pool=pool)


@pytest.mark.slow
def test_total_loss_drops_below_a_quarter_by_step_500(overfit_run):
    assert overfit_run.loss_ratio(OVERFIT_CHECK_STEP) < OVERFIT_LOSS_RATIO


@pytest.mark.slow
def test_overfit_reaches_the_psnr_targets(overfit_run):
    assert len(overfit_run.reports) == 2000
    assert overfit_run.train_psnr >= OVERFIT_TRAIN_PSNR
    assert overfit_run.holdout_psnr >= OVERFIT_HOLDOUT_PSNR
    assert [row["view"] for row in overfit_run.holdout_report["rows"]] == [8, 9, 10, 11]
