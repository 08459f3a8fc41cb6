from __future__ import annotations

import numpy as np
import pytest
from pydantic import ValidationError

from autodiff import Tensor
from body.body_model import sample_surface_points
from network.config import NetworkConfig, micro_config
from network.lhm import ForwardMode, predict_gaussians, reconstruct
from network.tokenizers import encode_head_pyramid, global_context, positional_encoding
from network.tokens import TokenSequence, TokenTag
from network.transformer import Streams, mbht_block, mlp, shrink_head_tokens, vanilla_block
from network.weights import NetworkWeights, init_weights, weight_shapes
from utils.config import OFFSET_CAP, SCALE_FLOOR
from utils.errors import DomainError, FormatError, ShapeError


def _inputs(cfg: NetworkConfig, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    return (
        rng.uniform(0.0, 1.0, (cfg.body_resolution, cfg.body_resolution, 3)),
        rng.uniform(0.0, 1.0, (cfg.head_resolution, cfg.head_resolution, 3)),
    )


def _streams(rng: np.random.Generator, counts: tuple[int, int, int, int], width: int = 16) -> Streams:
    return Streams(*(Tensor(rng.normal(size=(n, width))) for n in counts))


def test_reconstruct_produces_a_valid_avatar(minibody, micro_cfg, micro_weights):
    img, crop = _inputs(micro_cfg)
    points = sample_surface_points(minibody, micro_cfg.n_points, seed=1)
    g = reconstruct(img, crop, points, micro_cfg, micro_weights).validate()
    assert len(g) == micro_cfg.n_points
    assert g.sh.shape == (micro_cfg.n_points, 12)
    assert (np.abs(g.positions.data - points.positions) <= OFFSET_CAP + 1e-12).all()
    assert (g.scales.data >= SCALE_FLOOR).all()


def test_reconstruct_is_deterministic(minibody, micro_cfg, micro_weights):
    img, crop = _inputs(micro_cfg, seed=2)
    points = sample_surface_points(minibody, micro_cfg.n_points, seed=3)
    a = reconstruct(img, crop, points, micro_cfg, micro_weights)
    b = reconstruct(img, crop, points, micro_cfg, micro_weights)
    for name, value in a.arrays().items():
        np.testing.assert_array_equal(getattr(b, name).data, value)


def test_training_mode_without_masking_matches_inference(minibody, micro_cfg, micro_weights):
    img, crop = _inputs(micro_cfg, seed=4)
    points = sample_surface_points(minibody, micro_cfg.n_points, seed=5)
    infer = predict_gaussians(img, crop, points, micro_cfg, micro_weights, ForwardMode.infer())
    train = predict_gaussians(img, crop, points, micro_cfg, micro_weights, ForwardMode.train(0.0, seed=9))
    np.testing.assert_array_equal(infer.offsets.data, train.offsets.data)
    np.testing.assert_array_equal(infer.sh.data, train.sh.data)


def test_forward_checks_its_inputs(minibody, micro_cfg, micro_weights):
    img, crop = _inputs(micro_cfg)
    with pytest.raises(ShapeError):
        reconstruct(img, crop, sample_surface_points(minibody, micro_cfg.n_points + 1, seed=0), micro_cfg, micro_weights)
    with pytest.raises(ShapeError):
        reconstruct(img[:8], crop, sample_surface_points(minibody, micro_cfg.n_points, seed=0), micro_cfg, micro_weights)


def test_vanilla_block_runs_end_to_end(minibody):
    cfg = micro_config(block_type="vanilla")
    weights = init_weights(cfg, seed=1)
    img, crop = _inputs(cfg)
    g = reconstruct(img, crop, sample_surface_points(minibody, cfg.n_points, seed=0), cfg, weights)
    assert len(g.validate()) == cfg.n_points


# ── head token shrinkage ──────────────────────────────────────────────────────


def _head_tokens(n: int) -> TokenSequence:
    return TokenSequence.uniform(Tensor(np.arange(n * 4, dtype=np.float64).reshape(n, 4)), TokenTag.IMG_HEAD)


@pytest.mark.parametrize("seed", range(100))
def test_zero_ratio_keeps_the_same_tokens(seed):
    tokens = _head_tokens(10)
    assert shrink_head_tokens(tokens, 0.0, seed, 0.5) is tokens


@pytest.mark.parametrize("ratio, kept", [(0.04, 20), (0.05, 19), (0.25, 15), (0.5, 10)])
def test_shrink_drops_floor_of_ratio(ratio, kept):
    tokens = _head_tokens(20)
    out = shrink_head_tokens(tokens, ratio, seed=7, m_max=0.5)
    assert len(out) == kept
    rows = out.tokens.data[:, 0] / 4
    assert (np.diff(rows) > 0).all()
    assert set(rows.astype(int)) <= set(range(20))


def test_shrink_is_seeded():
    tokens = _head_tokens(20)
    a = shrink_head_tokens(tokens, 0.5, seed=1, m_max=0.5)
    b = shrink_head_tokens(tokens, 0.5, seed=1, m_max=0.5)
    np.testing.assert_array_equal(a.tokens.data, b.tokens.data)


def test_shrink_rejects_ratios_above_the_cap():
    with pytest.raises(DomainError):
        shrink_head_tokens(_head_tokens(4), 0.6, seed=0, m_max=0.5)
    with pytest.raises(DomainError):
        shrink_head_tokens(_head_tokens(4), 0.2, seed=0, m_max=0.0)


# ── blocks ────────────────────────────────────────────────────────────────────


@pytest.mark.parametrize("counts", [(3, 9, 4, 4), (0, 12, 2, 4), (5, 7, 0, 4)])
def test_mbht_conserves_token_counts(counts, micro_cfg, micro_weights):
    rng = np.random.default_rng(0)
    out = mbht_block(_streams(rng, counts), Tensor(rng.normal(size=16)), micro_cfg, micro_weights, 0)
    assert out.counts() == counts


def test_mbht_attends_head_then_whole_body(micro_cfg, micro_weights):
    rng = np.random.default_rng(1)
    probe: list[np.ndarray] = []
    mbht_block(_streams(rng, (3, 9, 4, 4)), Tensor(rng.normal(size=16)), micro_cfg, micro_weights, 0, probe)
    head_stage, body_stage = probe
    assert head_stage.shape == (2, 3 + 4, 3 + 4)
    assert body_stage.shape == (2, 3 + 9 + 4, 3 + 9 + 4)
    np.testing.assert_allclose(body_stage.sum(axis=-1), 1.0, atol=1e-12)


def test_vanilla_block_conserves_token_counts():
    cfg = micro_config(block_type="vanilla")
    rng = np.random.default_rng(2)
    probe: list[np.ndarray] = []
    out = vanilla_block(_streams(rng, (3, 9, 4, 4)), Tensor(rng.normal(size=16)), cfg, init_weights(cfg), 0, probe)
    assert out.counts() == (3, 9, 4, 4)
    assert probe[0].shape == (2, 20, 20)


def test_block_rejects_mismatched_global_context(micro_cfg, micro_weights):
    rng = np.random.default_rng(3)
    with pytest.raises(ShapeError):
        mbht_block(_streams(rng, (2, 2, 2, 2)), Tensor(rng.normal(size=8)), micro_cfg, micro_weights, 0)


def test_head_pyramid_yields_one_token_per_patch(micro_cfg, micro_weights):
    _, crop = _inputs(micro_cfg)
    tokens = encode_head_pyramid(crop, micro_cfg, micro_weights)
    assert tokens.tokens.shape == (micro_cfg.n_head_tokens, micro_cfg.token_dim)
    assert tokens.count(TokenTag.IMG_HEAD) == micro_cfg.n_head_tokens


def test_global_context_max_pools_the_body_tokens(micro_cfg, micro_weights):
    rng = np.random.default_rng(5)
    tokens = rng.normal(size=(6, micro_cfg.token_dim))
    body = TokenSequence(Tensor(tokens), np.full(6, TokenTag.IMG_BODY, dtype=np.int8))
    shuffled = TokenSequence(Tensor(tokens[::-1].copy()), body.tags)
    pooled = Tensor(tokens.max(axis=0).reshape(1, micro_cfg.token_dim))
    expected = mlp(pooled, micro_weights, "global").data.reshape(-1)
    np.testing.assert_allclose(global_context(body, micro_cfg, micro_weights).data, expected, atol=1e-12)
    np.testing.assert_allclose(global_context(shuffled, micro_cfg, micro_weights).data, expected, atol=1e-12)


def test_positional_encoding_layout():
    out = positional_encoding(np.array([[0.0, 0.0, 0.0], [0.25, 0.0, 0.5]]), 2)
    assert out.shape == (2, 12)
    np.testing.assert_array_equal(out[0], np.tile([0.0, 1.0], 6))
    # x = 0.25: sin(pi/4), cos(pi/4), sin(pi/2), cos(pi/2)
    np.testing.assert_allclose(out[1, :4], [np.sqrt(0.5), np.sqrt(0.5), 1.0, 0.0], atol=1e-15)


# ── weights and configuration ─────────────────────────────────────────────────


def test_weight_keys_follow_the_block_type():
    mbht = weight_shapes(micro_config())
    vanilla = weight_shapes(micro_config(block_type="vanilla"))
    assert "blocks.0.head.query.qkv.weight" in mbht and "blocks.0.norm_body.weight" in mbht
    assert "blocks.0.joint.context.ada.weight" in vanilla
    assert not any(key.startswith("blocks.0.head") for key in vanilla)


def test_init_is_seeded(micro_cfg):
    a, b, c = init_weights(micro_cfg, 5), init_weights(micro_cfg, 5), init_weights(micro_cfg, 6)
    np.testing.assert_array_equal(a["geo.fc1.weight"].data, b["geo.fc1.weight"].data)
    assert not np.array_equal(a["geo.fc1.weight"].data, c["geo.fc1.weight"].data)


def test_weights_reject_key_mismatches(micro_cfg, micro_weights):
    arrays = dict(micro_weights.arrays())
    del arrays["geo.fc2.bias"]
    with pytest.raises(FormatError, match="missing"):
        NetworkWeights.from_arrays(micro_cfg, arrays)
    with pytest.raises(FormatError, match="unexpected"):
        NetworkWeights.from_arrays(micro_cfg, {**micro_weights.arrays(), "extra.weight": np.zeros(2)})
    with pytest.raises(FormatError, match="shape"):
        NetworkWeights.from_arrays(micro_cfg, {**micro_weights.arrays(), "geo.fc2.bias": np.zeros(3)})
    with pytest.raises(FormatError, match="unknown"):
        micro_weights["nope"]


@pytest.mark.parametrize(
    "overrides",
    [
        {"token_dim": 15},
        {"head_tap_depths": (1, 1, 2, 3)},
        {"body_resolution": 17},
        {"head_mask_max": 0.6},
        {"block_type": "dense"},
        {"head_encoder_depth": 3},
        {"colour": "red"},
    ],
)
def test_config_rejects_bad_values(overrides):
    with pytest.raises(ValidationError):
        micro_config(**overrides)
