"""
checkpoint.py
-------------
LHW1 checkpoint: keyed array container (utils.binio) with

    weights/<path>   network parameters
    adam_m/<path>    first moments     (absent in f32 exports)
    adam_v/<path>    second moments    (absent in f32 exports)

and a JSON metadata block holding the step, the optimizer step, the network
configuration and the run seeds. Training checkpoints keep float64 so that a
resumed run is bit-identical to an unbroken one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from loguru import logger
from pydantic import ValidationError

from network.config import NetworkConfig
from network.weights import NetworkWeights
from training.optimizer import AdamState
from utils.binio import decode_keyed_arrays, encode_keyed_arrays
from utils.config import LHW_MAGIC, LHW_VERSION
from utils.errors import FormatError

_GROUPS = ("weights", "adam_m", "adam_v")


@dataclass
class Checkpoint:
    weights: NetworkWeights
    adam: AdamState
    step: int = 0
    meta: dict[str, Any] = field(default_factory=dict)

    @property
    def cfg(self) -> NetworkConfig:
        return self.weights.cfg


def encode_checkpoint(ckpt: Checkpoint, export_f32: bool = False) -> bytes:
    arrays: dict[str, np.ndarray] = {}
    for key, value in ckpt.weights.arrays().items():
        arrays[f"weights/{key}"] = value.astype(np.float32) if export_f32 else value
    if not export_f32:
        for key, value in ckpt.adam.m.items():
            arrays[f"adam_m/{key}"] = value
        for key, value in ckpt.adam.v.items():
            arrays[f"adam_v/{key}"] = value
    meta = dict(ckpt.meta)
    meta.update(step=ckpt.step, adam_step=0 if export_f32 else ckpt.adam.step,
                network=ckpt.cfg.model_dump(mode="json"))
    return encode_keyed_arrays(LHW_MAGIC, LHW_VERSION, arrays, meta)


def decode_checkpoint(data: bytes) -> Checkpoint:
    arrays, meta = decode_keyed_arrays(data, LHW_MAGIC, LHW_VERSION)
    try:
        cfg = NetworkConfig(**meta["network"])
    except (KeyError, TypeError) as exc:
        raise FormatError(f"checkpoint metadata lacks a network configuration: {exc}") from exc
    except ValidationError as exc:
        raise FormatError(f"checkpoint network configuration invalid: {exc}") from exc
    grouped: dict[str, dict[str, np.ndarray]] = {g: {} for g in _GROUPS}
    for key, value in arrays.items():
        group, _, name = key.partition("/")
        if group not in grouped or not name:
            raise FormatError(f"unexpected checkpoint entry {key!r}")
        grouped[group][name] = value.astype(np.float64)
    weights = NetworkWeights.from_arrays(cfg, grouped["weights"])
    if grouped["adam_m"] or grouped["adam_v"]:
        if set(grouped["adam_m"]) != set(weights) or set(grouped["adam_v"]) != set(weights):
            raise FormatError("optimizer moments do not cover every weight")
        adam = AdamState(int(meta.get("adam_step", 0)), grouped["adam_m"], grouped["adam_v"])
    else:
        adam = AdamState.zeros_like(weights.arrays())
    step = int(meta.pop("step", 0))
    meta.pop("adam_step", None)
    meta.pop("network", None)
    return Checkpoint(weights, adam, step, meta)


def save_checkpoint(ckpt: Checkpoint, path: str | Path, export_f32: bool = False) -> None:
    path = Path(path)
    path.write_bytes(encode_checkpoint(ckpt, export_f32))
    logger.info("[TRAIN] checkpoint {} at step {}{}", path.name, ckpt.step, " (f32 export)" if export_f32 else "")


def load_checkpoint(path: str | Path) -> Checkpoint:
    return decode_checkpoint(Path(path).read_bytes())
