"""
weights.py
----------
Learnable parameters of the reconstruction network, keyed by stable path
strings such as ``blocks.0.head.query.ada.weight``.

Linear layers store ``<name>.weight`` as (in, out) and ``<name>.bias`` as
(out,). AdaLN gate columns start at zero so that every multimodal block is
the identity map at initialization.
"""

from __future__ import annotations

from collections.abc import Iterator, Mapping

import numpy as np

from autodiff import Tensor
from network.config import NetworkConfig
from utils.config import INIT_STD_POS
from utils.errors import FormatError

HEAD_OUTPUT_SCALE = 0.1
INITIAL_SCALE = 0.02      # meters, scale of a freshly initialized Gaussian
INITIAL_OPACITY_LOGIT = 1.0
REGRESS_HEADS = ("offset", "rotation", "sh", "opacity", "scale")


def _linear(shapes: dict[str, tuple[int, ...]], name: str, fan_in: int, fan_out: int) -> None:
    shapes[f"{name}.weight"] = (fan_in, fan_out)
    shapes[f"{name}.bias"] = (fan_out,)


def _norm(shapes: dict[str, tuple[int, ...]], name: str, width: int) -> None:
    shapes[f"{name}.weight"] = (width,)
    shapes[f"{name}.bias"] = (width,)


def _encoder(
    shapes: dict[str, tuple[int, ...]], prefix: str, patch: int, n_tokens: int, depth: int,
    cfg: NetworkConfig, final_norm: bool,
) -> None:
    dim = cfg.encoder_dim
    _linear(shapes, f"{prefix}.patch", patch * patch * 3, dim)
    shapes[f"{prefix}.pos"] = (n_tokens, dim)
    for b in range(depth):
        block = f"{prefix}.block{b}"
        _norm(shapes, f"{block}.ln1", dim)
        _linear(shapes, f"{block}.attn.qkv", dim, 3 * dim)
        _linear(shapes, f"{block}.attn.out", dim, dim)
        _norm(shapes, f"{block}.ln2", dim)
        _linear(shapes, f"{block}.mlp.fc1", dim, cfg.mlp_ratio * dim)
        _linear(shapes, f"{block}.mlp.fc2", cfg.mlp_ratio * dim, dim)
    if final_norm:
        _norm(shapes, f"{prefix}.norm", dim)


def _mm_block(shapes: dict[str, tuple[int, ...]], prefix: str, cfg: NetworkConfig) -> None:
    c = cfg.token_dim
    for stream in ("query", "context"):
        base = f"{prefix}.{stream}"
        _linear(shapes, f"{base}.ada", c, 6 * c)
        _linear(shapes, f"{base}.qkv", c, 3 * c)
        _linear(shapes, f"{base}.out", c, c)
        _linear(shapes, f"{base}.ffn.fc1", c, cfg.mlp_ratio * c)
        _linear(shapes, f"{base}.ffn.fc2", cfg.mlp_ratio * c, c)


def weight_shapes(cfg: NetworkConfig) -> dict[str, tuple[int, ...]]:
    """Every parameter key and its shape, in a fixed construction order."""
    c, d = cfg.token_dim, cfg.encoder_dim
    shapes: dict[str, tuple[int, ...]] = {}
    _linear(shapes, "geo.fc1", 6 * cfg.pe_frequencies, c)
    _linear(shapes, "geo.fc2", c, c)

    _encoder(shapes, "body_enc", cfg.body_patch, cfg.n_body_tokens, cfg.body_encoder_depth, cfg, True)
    _linear(shapes, "body_proj.fc1", d, c)
    _linear(shapes, "body_proj.fc2", c, c)

    # blocks past the deepest tap never reach the output
    _encoder(shapes, "head_enc", cfg.head_patch, cfg.n_head_tokens, cfg.head_tap_depths[-1], cfg, False)
    _linear(shapes, "head_fusion.mix", 4 * d, d)
    _linear(shapes, "head_proj.fc1", d, c)
    _linear(shapes, "head_proj.fc2", c, c)

    _linear(shapes, "global.fc1", c, c)
    _linear(shapes, "global.fc2", c, c)

    for layer in range(cfg.n_layers):
        if cfg.block_type == "mbht":
            _mm_block(shapes, f"blocks.{layer}.head", cfg)
            _norm(shapes, f"blocks.{layer}.norm_head", c)
            _norm(shapes, f"blocks.{layer}.norm_body", c)
            _mm_block(shapes, f"blocks.{layer}.body", cfg)
        else:
            _mm_block(shapes, f"blocks.{layer}.joint", cfg)

    _linear(shapes, "regress.trunk0", c, c)
    _linear(shapes, "regress.trunk1", c, c)
    widths = {"offset": 3, "rotation": 4, "sh": cfg.sh_dim, "opacity": 1, "scale": 3}
    for head in REGRESS_HEADS:
        _linear(shapes, f"regress.{head}", c, widths[head])
    return shapes


def _initial_value(key: str, shape: tuple[int, ...], cfg: NetworkConfig, rng: np.random.Generator) -> np.ndarray:
    name, _, leaf = key.rpartition(".")
    if leaf == "pos":
        return rng.normal(0.0, INIT_STD_POS, shape)
    is_norm = name.endswith(("ln1", "ln2", ".norm", "norm_head", "norm_body"))
    if is_norm:
        return np.ones(shape) if leaf == "weight" else np.zeros(shape)

    if leaf == "weight":
        value = rng.normal(0.0, 1.0 / np.sqrt(shape[0]), shape)
    else:
        value = np.zeros(shape)

    if name.endswith(".ada"):
        c = cfg.token_dim
        for gate in (slice(2 * c, 3 * c), slice(5 * c, 6 * c)):
            value[..., gate] = 0.0
    head = name.removeprefix("regress.")
    if head in REGRESS_HEADS:
        if leaf == "weight":
            value *= HEAD_OUTPUT_SCALE
        elif head == "rotation":
            value[0] = 1.0
        elif head == "scale":
            value[:] = np.log(np.expm1(INITIAL_SCALE - cfg.scale_floor))
        elif head == "opacity":
            value[:] = INITIAL_OPACITY_LOGIT
    return value


class NetworkWeights(Mapping[str, Tensor]):
    """Immutable mapping from path string to parameter tensor."""

    def __init__(self, cfg: NetworkConfig, tensors: Mapping[str, Tensor]) -> None:
        expected = weight_shapes(cfg)
        missing = [k for k in expected if k not in tensors]
        if missing:
            raise FormatError(f"missing weight {missing[0]!r} ({len(missing)} missing)")
        extra = sorted(set(tensors) - set(expected))
        if extra:
            raise FormatError(f"unexpected weight {extra[0]!r}")
        for key, shape in expected.items():
            if tensors[key].shape != shape:
                raise FormatError(f"weight {key!r} has shape {tensors[key].shape}, expected {shape}")
        self.cfg = cfg
        self._tensors = {key: tensors[key] for key in expected}

    @classmethod
    def from_arrays(cls, cfg: NetworkConfig, arrays: Mapping[str, np.ndarray]) -> NetworkWeights:
        return cls(cfg, {key: Tensor(np.asarray(value, dtype=np.float64)) for key, value in arrays.items()})

    def __getitem__(self, key: str) -> Tensor:
        try:
            return self._tensors[key]
        except KeyError:
            raise FormatError(f"unknown weight {key!r}") from None

    def __contains__(self, key: object) -> bool:
        return key in self._tensors

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def arrays(self) -> dict[str, np.ndarray]:
        return {key: t.data for key, t in self._tensors.items()}

    def parameter_count(self) -> int:
        return sum(t.size for t in self._tensors.values())

    def replace(self, arrays: Mapping[str, np.ndarray]) -> NetworkWeights:
        """New weights with the given keys swapped out."""
        merged = dict(self._tensors)
        for key, value in arrays.items():
            if key not in merged:
                raise FormatError(f"unknown weight {key!r}")
            merged[key] = Tensor(value)
        return NetworkWeights(self.cfg, merged)


def init_weights(cfg: NetworkConfig, seed: int = 0) -> NetworkWeights:
    rng = np.random.default_rng(seed)
    arrays = {key: _initial_value(key, shape, cfg, rng) for key, shape in weight_shapes(cfg).items()}
    return NetworkWeights.from_arrays(cfg, arrays)
