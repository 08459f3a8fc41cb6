"""Feed-forward reconstruction network: tokenizers, body-head transformer, regression head."""

from network.config import NetworkConfig, micro_config
from network.lhm import ForwardMode, predict_gaussians, reconstruct, regress
from network.tokenizers import (
    encode_body_image,
    encode_geometric,
    encode_head_pyramid,
    global_context,
    patchify,
    positional_encoding,
)
from network.tokens import TokenSequence, TokenTag
from network.transformer import Streams, mbht_block, mm_transformer_block, shrink_head_tokens, vanilla_block
from network.weights import NetworkWeights, init_weights, weight_shapes

__all__ = [
    "ForwardMode",
    "NetworkConfig",
    "NetworkWeights",
    "Streams",
    "TokenSequence",
    "TokenTag",
    "encode_body_image",
    "encode_geometric",
    "encode_head_pyramid",
    "global_context",
    "init_weights",
    "mbht_block",
    "micro_config",
    "mm_transformer_block",
    "patchify",
    "positional_encoding",
    "predict_gaussians",
    "reconstruct",
    "regress",
    "shrink_head_tokens",
    "vanilla_block",
    "weight_shapes",
]
