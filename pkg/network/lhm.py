"""
lhm.py
------
End-to-end forward pass: tokenize, pool the global context, optionally shrink
the head tokens, run the transformer stack, then regress per-point Gaussian
parameters with a shared trunk and five heads.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from autodiff import Tensor, ops
from avatar.gaussians import GaussianSet, RawGaussianParams, activate_raw
from body.body_model import SampledPoints
from network.config import NetworkConfig
from network.tokenizers import encode_body_image, encode_geometric, encode_head_pyramid, global_context
from network.transformer import AttentionProbe, Streams, mbht_block, shrink_head_tokens, vanilla_block
from network.weights import NetworkWeights
from utils.errors import ShapeError


@dataclass(frozen=True)
class ForwardMode:
    kind: Literal["train", "infer"] = "infer"
    ratio: float = 0.0
    seed: int = 0

    @classmethod
    def infer(cls) -> ForwardMode:
        return cls("infer")

    @classmethod
    def train(cls, ratio: float, seed: int) -> ForwardMode:
        return cls("train", ratio, seed)


def regress(tokens: Tensor, w: NetworkWeights) -> RawGaussianParams:
    trunk = ops.gelu(ops.linear(tokens, w["regress.trunk0.weight"], w["regress.trunk0.bias"]))
    trunk = ops.gelu(ops.linear(trunk, w["regress.trunk1.weight"], w["regress.trunk1.bias"]))

    def head(name: str) -> Tensor:
        return ops.linear(trunk, w[f"regress.{name}.weight"], w[f"regress.{name}.bias"])

    return RawGaussianParams(
        offsets=head("offset"),
        rotations=head("rotation"),
        scales=head("scale"),
        opacities=head("opacity"),
        sh=head("sh"),
    )


def predict_gaussians(
    img: np.ndarray,
    head_crop: np.ndarray,
    points: SampledPoints,
    cfg: NetworkConfig,
    w: NetworkWeights,
    mode: ForwardMode = ForwardMode(),
    probe: AttentionProbe | None = None,
) -> RawGaussianParams:
    if len(points) != cfg.n_points:
        raise ShapeError(f"network configured for {cfg.n_points} points, got {len(points)}")
    geo = encode_geometric(points, cfg, w)
    body = encode_body_image(img, cfg, w, probe)
    head = encode_head_pyramid(head_crop, cfg, w, probe)
    f_global = global_context(body, cfg, w)
    if mode.kind == "train":
        head = shrink_head_tokens(head, mode.ratio, mode.seed, cfg.head_mask_max)

    head_idx = np.flatnonzero(points.head_mask)
    body_idx = np.flatnonzero(~points.head_mask)
    streams = Streams(
        geo_head=ops.take(geo.tokens, head_idx, axis=0),
        geo_body=ops.take(geo.tokens, body_idx, axis=0),
        img_head=head.tokens,
        img_body=body.tokens,
    )
    block = mbht_block if cfg.block_type == "mbht" else vanilla_block
    for layer in range(cfg.n_layers):
        streams = block(streams, f_global, cfg, w, layer, probe)

    merged = ops.concat([streams.geo_head, streams.geo_body], axis=0)
    restore = np.argsort(np.concatenate([head_idx, body_idx]), kind="stable")
    return regress(ops.take(merged, restore, axis=0), w)


def reconstruct(
    img: np.ndarray,
    head_crop: np.ndarray,
    points: SampledPoints,
    cfg: NetworkConfig,
    w: NetworkWeights,
    mode: ForwardMode = ForwardMode(),
) -> GaussianSet:
    """Canonical Gaussian avatar anchored on the sampled surface points."""
    raw = predict_gaussians(img, head_crop, points, cfg, w, mode)
    return activate_raw(raw, points.positions, cfg.offset_cap, cfg.scale_floor)
