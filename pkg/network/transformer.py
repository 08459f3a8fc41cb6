"""
transformer.py
--------------
Attention blocks shared by the image encoders and the multimodal body-head
transformer (MBHT).

A multimodal block keeps two token streams (query, context). The global
context vector modulates every sublayer through AdaLN: per stream it yields
(shift, scale, gate) for the attention sublayer and again for the feed-forward
sublayer. Attention is joint over the concatenation of both streams.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from autodiff import Tensor, ops
from network.config import NetworkConfig
from network.tokens import TokenSequence
from network.weights import NetworkWeights
from utils.errors import DomainError, ShapeError

AttentionProbe = list[np.ndarray]


def attend(qkv: Tensor, n_heads: int, probe: AttentionProbe | None = None) -> Tensor:
    """Scaled dot-product attention from packed (N, 3D) projections to (N, D)."""
    n, width = qkv.shape
    dim = width // 3
    head_dim = dim // n_heads
    split = qkv.reshape(n, 3, n_heads, head_dim).transpose(1, 2, 0, 3)  # (3, H, N, dh)
    q, k, v = split[0], split[1], split[2]
    scores = ops.matmul(q, k.transpose(0, 2, 1)) * (1.0 / np.sqrt(head_dim))
    weights = ops.softmax(scores, axis=-1)
    if probe is not None:
        probe.append(weights.data)
    mixed = ops.matmul(weights, v)                                   # (H, N, dh)
    return mixed.transpose(1, 0, 2).reshape(n, dim)


def self_attention(x: Tensor, w: NetworkWeights, prefix: str, n_heads: int,
                   probe: AttentionProbe | None = None) -> Tensor:
    qkv = ops.linear(x, w[f"{prefix}.qkv.weight"], w[f"{prefix}.qkv.bias"])
    out = attend(qkv, n_heads, probe)
    return ops.linear(out, w[f"{prefix}.out.weight"], w[f"{prefix}.out.bias"])


def mlp(x: Tensor, w: NetworkWeights, prefix: str) -> Tensor:
    hidden = ops.gelu(ops.linear(x, w[f"{prefix}.fc1.weight"], w[f"{prefix}.fc1.bias"]))
    return ops.linear(hidden, w[f"{prefix}.fc2.weight"], w[f"{prefix}.fc2.bias"])


def encoder_block(x: Tensor, w: NetworkWeights, prefix: str, n_heads: int,
                  probe: AttentionProbe | None = None) -> Tensor:
    """Pre-norm vision-transformer block."""
    h = ops.layer_norm(x, w[f"{prefix}.ln1.weight"], w[f"{prefix}.ln1.bias"])
    x = x + self_attention(h, w, f"{prefix}.attn", n_heads, probe)
    h = ops.layer_norm(x, w[f"{prefix}.ln2.weight"], w[f"{prefix}.ln2.bias"])
    return x + mlp(h, w, f"{prefix}.mlp")


# ── Multimodal block ──────────────────────────────────────────────────────────


def _modulation(f_global: Tensor, w: NetworkWeights, prefix: str, width: int) -> list[Tensor]:
    """(shift1, scale1, gate1, shift2, scale2, gate2), each (1, C)."""
    mod = ops.linear(ops.silu(f_global.reshape(1, width)), w[f"{prefix}.ada.weight"], w[f"{prefix}.ada.bias"])
    return [mod[:, i * width : (i + 1) * width] for i in range(6)]


def _modulate(x: Tensor, shift: Tensor, scale: Tensor) -> Tensor:
    return ops.layer_norm(x) * (1.0 + scale) + shift


def mm_transformer_block(
    query: Tensor,
    context: Tensor,
    f_global: Tensor,
    w: NetworkWeights,
    prefix: str,
    n_heads: int,
    probe: AttentionProbe | None = None,
) -> tuple[Tensor, Tensor]:
    width = query.shape[-1]
    if context.shape[-1] != width or f_global.shape != (width,):
        raise ShapeError(
            f"{prefix}: widths differ (query {query.shape}, context {context.shape}, global {f_global.shape})"
        )
    streams = {"query": query, "context": context}
    mods = {name: _modulation(f_global, w, f"{prefix}.{name}", width) for name in streams}

    packed = [
        ops.linear(_modulate(x, mods[name][0], mods[name][1]), w[f"{prefix}.{name}.qkv.weight"], w[f"{prefix}.{name}.qkv.bias"])
        for name, x in streams.items()
    ]
    joint = attend(ops.concat(packed, axis=0), n_heads, probe)
    mixed = dict(zip(streams, ops.split_rows(joint, [query.shape[0], context.shape[0]])))

    updated: dict[str, Tensor] = {}
    for name, x in streams.items():
        shift1, scale1, gate1, shift2, scale2, gate2 = mods[name]
        base = f"{prefix}.{name}"
        attn_out = ops.linear(mixed[name], w[f"{base}.out.weight"], w[f"{base}.out.bias"])
        x = x + gate1 * attn_out
        x = x + gate2 * mlp(_modulate(x, shift2, scale2), w, f"{base}.ffn")
        updated[name] = x
    return updated["query"], updated["context"]


# ── Head token shrinkage ──────────────────────────────────────────────────────


def shrink_head_tokens(tokens: TokenSequence, ratio: float, seed: int, m_max: float) -> TokenSequence:
    """Drop floor(ratio * N) tokens chosen uniformly without replacement."""
    if not 0.0 <= ratio <= m_max:
        raise DomainError(f"head mask ratio {ratio!r} outside [0, {m_max!r}]")
    n = len(tokens)
    drop = int(np.floor(ratio * n))
    if drop == 0:
        return tokens
    dropped = np.random.default_rng(seed).choice(n, size=drop, replace=False)
    keep = np.setdiff1d(np.arange(n), dropped)
    return TokenSequence(ops.take(tokens.tokens, keep, axis=0), tokens.tags[keep])


# ── MBHT ──────────────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class Streams:
    geo_head: Tensor
    geo_body: Tensor
    img_head: Tensor
    img_body: Tensor

    def counts(self) -> tuple[int, int, int, int]:
        return (self.geo_head.shape[0], self.geo_body.shape[0], self.img_head.shape[0], self.img_body.shape[0])


def mbht_block(streams: Streams, f_global: Tensor, cfg: NetworkConfig, w: NetworkWeights, layer: int,
               probe: AttentionProbe | None = None) -> Streams:
    """Head stage, interleaved normalization of both geometric streams, body stage."""
    prefix = f"blocks.{layer}"
    geo_head, img_head = mm_transformer_block(
        streams.geo_head, streams.img_head, f_global, w, f"{prefix}.head", cfg.n_heads, probe
    )
    geo = ops.concat(
        [
            ops.layer_norm(geo_head, w[f"{prefix}.norm_head.weight"], w[f"{prefix}.norm_head.bias"]),
            ops.layer_norm(streams.geo_body, w[f"{prefix}.norm_body.weight"], w[f"{prefix}.norm_body.bias"]),
        ],
        axis=0,
    )
    geo, img_body = mm_transformer_block(geo, streams.img_body, f_global, w, f"{prefix}.body", cfg.n_heads, probe)
    n_head, n_body = streams.geo_head.shape[0], streams.geo_body.shape[0]
    if geo.shape[0] != n_head + n_body:
        raise ShapeError(f"{prefix}: {geo.shape[0]} geometric tokens after body stage, expected {n_head + n_body}")
    geo_head, geo_body = ops.split_rows(geo, [n_head, n_body])
    return Streams(geo_head, geo_body, img_head, img_body)


def vanilla_block(streams: Streams, f_global: Tensor, cfg: NetworkConfig, w: NetworkWeights, layer: int,
                  probe: AttentionProbe | None = None) -> Streams:
    """Single joint block: all geometric tokens against all image tokens."""
    geo = ops.concat([streams.geo_head, streams.geo_body], axis=0)
    img = ops.concat([streams.img_head, streams.img_body], axis=0)
    geo, img = mm_transformer_block(geo, img, f_global, w, f"blocks.{layer}.joint", cfg.n_heads, probe)
    n_gh, n_gb, n_ih, n_ib = streams.counts()
    geo_head, geo_body = ops.split_rows(geo, [n_gh, n_gb])
    img_head, img_body = ops.split_rows(img, [n_ih, n_ib])
    return Streams(geo_head, geo_body, img_head, img_body)
