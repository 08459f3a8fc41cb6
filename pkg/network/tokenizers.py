"""
tokenizers.py
-------------
Turns the network inputs into token sequences of width C_tok:

  geometric   sampled surface points -> sinusoidal encoding -> 2-layer MLP
  body image  patch embedding -> encoder blocks -> projection MLP
  head crop   patch embedding -> encoder blocks, 4 tapped depths fused by a
              per-token linear mix -> projection MLP
  global      max over body tokens -> 2-layer MLP
"""

from __future__ import annotations

import numpy as np

from autodiff import Tensor, ops
from body.body_model import SampledPoints
from network.config import NetworkConfig
from network.tokens import TokenSequence, TokenTag
from network.transformer import AttentionProbe, encoder_block, mlp
from network.weights import NetworkWeights
from utils.errors import ShapeError


def positional_encoding(points: np.ndarray, frequencies: int) -> np.ndarray:
    """(N, 3) -> (N, 6L): per coordinate, [sin(2^k pi x), cos(2^k pi x)] for k < L."""
    points = np.asarray(points, dtype=np.float64)
    angles = points[:, :, None] * (np.pi * 2.0 ** np.arange(frequencies))      # (N, 3, L)
    return np.stack([np.sin(angles), np.cos(angles)], axis=-1).reshape(points.shape[0], 6 * frequencies)


def encode_geometric(points: SampledPoints, cfg: NetworkConfig, w: NetworkWeights) -> TokenSequence:
    encoded = Tensor(positional_encoding(points.positions, cfg.pe_frequencies))
    tokens = mlp(encoded, w, "geo")
    tags = np.where(points.head_mask, TokenTag.GEO_HEAD, TokenTag.GEO_BODY).astype(np.int8)
    return TokenSequence(tokens, tags)


def patchify(image: np.ndarray, patch: int) -> np.ndarray:
    """(R, R, 3) -> ((R/p)^2, p*p*3), row-major over patches."""
    r = image.shape[0]
    g = r // patch
    return image.reshape(g, patch, g, patch, 3).transpose(0, 2, 1, 3, 4).reshape(g * g, patch * patch * 3)


def _check_image(image: np.ndarray, resolution: int, what: str) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    if image.shape != (resolution, resolution, 3):
        raise ShapeError(f"{what} must be {resolution}x{resolution}x3, got {image.shape}")
    return image


def _embed(image: np.ndarray, w: NetworkWeights, prefix: str, patch: int) -> Tensor:
    patches = Tensor(patchify(image, patch))
    return ops.linear(patches, w[f"{prefix}.patch.weight"], w[f"{prefix}.patch.bias"]) + w[f"{prefix}.pos"]


def encode_body_image(img: np.ndarray, cfg: NetworkConfig, w: NetworkWeights,
                      probe: AttentionProbe | None = None) -> TokenSequence:
    image = _check_image(img, cfg.body_resolution, "body image")
    x = _embed(image, w, "body_enc", cfg.body_patch)
    for b in range(cfg.body_encoder_depth):
        x = encoder_block(x, w, f"body_enc.block{b}", cfg.n_heads, probe)
    x = ops.layer_norm(x, w["body_enc.norm.weight"], w["body_enc.norm.bias"])
    return TokenSequence.uniform(mlp(x, w, "body_proj"), TokenTag.IMG_BODY)


def encode_head_pyramid(head_crop: np.ndarray, cfg: NetworkConfig, w: NetworkWeights,
                        probe: AttentionProbe | None = None) -> TokenSequence:
    image = _check_image(head_crop, cfg.head_resolution, "head crop")
    x = _embed(image, w, "head_enc", cfg.head_patch)
    taps: list[Tensor] = []
    for b in range(cfg.head_tap_depths[-1]):
        x = encoder_block(x, w, f"head_enc.block{b}", cfg.n_heads, probe)
        if b + 1 in cfg.head_tap_depths:
            taps.append(x)
    fused = ops.linear(ops.concat(taps, axis=1), w["head_fusion.mix.weight"], w["head_fusion.mix.bias"])
    return TokenSequence.uniform(mlp(fused, w, "head_proj"), TokenTag.IMG_HEAD)


def global_context(body_tokens: TokenSequence, cfg: NetworkConfig, w: NetworkWeights) -> Tensor:
    if len(body_tokens) == 0:
        raise ShapeError("global context needs at least one body token")
    pooled = body_tokens.tokens.max(axis=0).reshape(1, cfg.token_dim)
    return mlp(pooled, w, "global").reshape(cfg.token_dim)
