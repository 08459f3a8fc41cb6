from __future__ import annotations

import numpy as np
import pytest

from autodiff import GradTape, Tensor, backward
from avatar.gaussians import GaussianSet, covariance_of
from training.losses import (
    TERMS,
    LossReport,
    LossWeights,
    acap_loss,
    asap_loss,
    assemble_total,
    color_loss,
    mask_loss,
    mean_nn_spacing,
    report_of,
    total_loss,
)
from training.metrics import psnr, ssim
from training.perceptual import FeaturePyramid, perceptual_loss
from utils.config import ACAP_THRESHOLD
from utils.errors import ShapeError


def _single(scales, quat=(1.0, 0.0, 0.0, 0.0)) -> GaussianSet:
    return GaussianSet.from_arrays(np.zeros((1, 3)), [quat], [scales], [[0.5]], np.zeros((1, 3)))


def test_asap_of_a_stretched_gaussian():
    assert asap_loss(_single([2.0, 1.0, 1.0]), 1.0).item() == pytest.approx(9.0)
    assert asap_loss(_single([0.5, 0.5, 0.5]), 0.5).item() == 0.0


@pytest.mark.parametrize("seed", range(5))
def test_asap_matches_the_covariance_form(seed, make_gaussians):
    g = make_gaussians(np.random.default_rng(seed), 7)
    t = 0.08
    explicit = np.mean([np.sum((covariance_of(g, i) / t**2 - np.eye(3)) ** 2) for i in range(len(g))])
    assert abs(asap_loss(g, t).item() - explicit) < 1e-10 * max(1.0, explicit)


def test_asap_ignores_rotation():
    q = np.array([0.3, 0.5, -0.1, 0.8])
    q /= np.linalg.norm(q)
    a = asap_loss(_single([0.2, 0.1, 0.05]), 0.1).item()
    b = asap_loss(_single([0.2, 0.1, 0.05], tuple(q)), 0.1).item()
    assert abs(a - b) < 1e-10


def test_acap_hinge():
    offsets = Tensor([[0.10, 0.0, 0.0], [0.0, 0.02, 0.0]])
    assert acap_loss(offsets, ACAP_THRESHOLD).item() == pytest.approx(0.02375)
    assert acap_loss(Tensor(np.full((3, 3), 0.01)), ACAP_THRESHOLD).item() == 0.0
    assert acap_loss(Tensor(np.zeros((0, 3))), ACAP_THRESHOLD).item() == 0.0


def test_acap_gradient_points_along_the_offset():
    with GradTape() as tape:
        offsets = tape.watch(Tensor([[0.0, 0.06, 0.08]]))
        loss = acap_loss(offsets, ACAP_THRESHOLD)
    np.testing.assert_allclose(backward(tape, loss)[offsets], [[0.0, 0.6, 0.8]])


def test_photometric_terms_are_l1():
    pred = Tensor(np.full((2, 2, 3), 0.5))
    target = np.zeros((2, 2, 3))
    target[0, 0] = 1.0
    assert color_loss(pred, target).item() == pytest.approx(0.5)
    assert mask_loss(Tensor(np.ones((2, 2, 1))), np.zeros((2, 2, 1))).item() == 1.0
    with pytest.raises(ShapeError):
        color_loss(pred, np.zeros((2, 3, 3)))
    with pytest.raises(ShapeError):
        mask_loss(pred, target)


def test_mean_nn_spacing():
    assert mean_nn_spacing(np.array([[0.0, 0, 0], [1.0, 0, 0], [3.0, 0, 0]])) == pytest.approx(4.0 / 3.0)
    assert mean_nn_spacing(np.zeros((1, 3))) == 1.0


def test_total_is_assembled_left_to_right():
    rng = np.random.default_rng(0)
    terms = {name: Tensor(float(v)) for name, v in zip(TERMS, rng.uniform(0.0, 1.0, 5))}
    weights = LossWeights(rgb=1.3, mask=0.7, perceptual=0.9, asap=50.0, acap=10.0)
    total = assemble_total(terms, weights)
    c = weights.coefficients()
    expected = c["color"] * terms["color"].item()
    for name in TERMS[1:]:
        expected = expected + c[name] * terms[name].item()
    assert total.item() == expected
    report = report_of(terms, total)
    assert report.total == expected and report.asap == terms["asap"].item()


def test_total_loss_scales_asap_by_the_anchor_spacing(make_gaussians):
    rng = np.random.default_rng(4)
    g = make_gaussians(rng, 6)
    anchors = g.positions.data - rng.uniform(-0.02, 0.02, (6, 3))
    offsets = Tensor(g.positions.data - anchors)
    rgb, target = rng.uniform(0.0, 1.0, (16, 16, 3)), rng.uniform(0.0, 1.0, (16, 16, 3))
    alpha, mask = rng.uniform(0.0, 1.0, (16, 16, 1)), rng.uniform(0.0, 1.0, (16, 16, 1))
    spacing = mean_nn_spacing(anchors)

    _, report = total_loss(Tensor(rgb), Tensor(alpha), target, mask, g, offsets, LossWeights(), spacing)
    assert report.asap == asap_loss(g, spacing).item()
    assert report.acap == acap_loss(offsets, ACAP_THRESHOLD).item()

    _, fixed = total_loss(Tensor(rgb), Tensor(alpha), target, mask, g, offsets,
                          LossWeights(asap_target_scale=0.2), spacing)
    assert fixed.asap == asap_loss(g, 0.2).item()
    with pytest.raises(TypeError):
        total_loss(Tensor(rgb), Tensor(alpha), target, mask, g, offsets, LossWeights())


def test_loss_record_roundtrip():
    report = LossReport(0.1, 0.2, 1 / 3, 1e-9, 0.0, 0.5333)
    step, parsed = LossReport.from_record(report.to_record(17))
    assert step == 17 and parsed == report
    assert set(report.as_dict()) == {*TERMS, "total"}


# ── metrics ───────────────────────────────────────────────────────────────────


def test_psnr():
    img = np.random.default_rng(1).uniform(0.0, 1.0, (8, 8, 3))
    assert psnr(img, img) == 100.0
    assert psnr(np.zeros((4, 4, 3)), np.full((4, 4, 3), 0.1)) == pytest.approx(20.0)
    with pytest.raises(ShapeError):
        psnr(img, img[:4])


def test_ssim():
    rng = np.random.default_rng(2)
    img = rng.uniform(0.0, 1.0, (16, 16, 3))
    assert ssim(img, img) == pytest.approx(1.0)
    assert ssim(img, rng.uniform(0.0, 1.0, (16, 16, 3))) < 0.5


# ── perceptual ────────────────────────────────────────────────────────────────


def test_perceptual_distance():
    rng = np.random.default_rng(3)
    img = rng.uniform(0.0, 1.0, (16, 16, 3))
    pyramid = FeaturePyramid(seed=5)
    assert perceptual_loss(Tensor(img), img, pyramid).item() == 0.0
    assert perceptual_loss(Tensor(img), np.clip(img + 0.2, 0.0, 1.0), pyramid).item() > 0.0
    assert len(pyramid.features(Tensor(img))) == pyramid.scales == 3


def test_perceptual_needs_room_for_every_scale():
    with pytest.raises(ShapeError):
        perceptual_loss(Tensor(np.zeros((2, 2, 3))), np.zeros((2, 2, 3)))
