"""
optimizer.py
------------
AdamW with decoupled weight decay and global-norm gradient clipping.
Parameters and gradients are dicts keyed by weight path; every reduction
walks the keys in sorted order so results do not depend on dict order.
"""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from utils.config import (
    ADAM_BETA1,
    ADAM_BETA2,
    ADAM_EPS,
    DATA_SEED,
    GRAD_CLIP,
    INIT_SEED,
    ITERATIONS,
    LEARNING_RATE,
    MASK_SEED,
    TARGETS_PER_STEP,
    WEIGHT_DECAY,
)
from utils.errors import ShapeError


class TrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    learning_rate: float = Field(default=LEARNING_RATE, gt=0.0)
    beta1: float = Field(default=ADAM_BETA1, ge=0.0, lt=1.0)
    beta2: float = Field(default=ADAM_BETA2, ge=0.0, lt=1.0)
    eps: float = Field(default=ADAM_EPS, gt=0.0)
    weight_decay: float = Field(default=WEIGHT_DECAY, ge=0.0)
    grad_clip: float = Field(default=GRAD_CLIP, gt=0.0)
    iterations: int = Field(default=ITERATIONS, ge=0)
    targets_per_step: int = Field(default=TARGETS_PER_STEP, ge=1)
    data_seed: int = Field(default=DATA_SEED, ge=0)
    mask_seed: int = Field(default=MASK_SEED, ge=0)
    init_seed: int = Field(default=INIT_SEED, ge=0)


@dataclass
class AdamState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def zeros_like(cls, params: Mapping[str, np.ndarray]) -> AdamState:
        return cls(0, {k: np.zeros_like(p) for k, p in params.items()}, {k: np.zeros_like(p) for k, p in params.items()})


def global_norm(grads: Mapping[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(grads[k] * grads[k])) for k in sorted(grads))))


def clip_gradients(grads: Mapping[str, np.ndarray], threshold: float) -> tuple[dict[str, np.ndarray], float]:
    """Scale every gradient by threshold / norm when the global L2 norm exceeds it.

    Returns the (possibly unchanged) gradients and the pre-clip norm.
    """
    if not threshold > 0.0:
        raise ValueError(f"clip threshold must be positive, got {threshold}")
    norm = global_norm(grads)
    if norm <= threshold:
        return dict(grads), norm
    scale = threshold / norm
    return {k: g * scale for k, g in grads.items()}, norm


def adamw_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
    cfg: TrainConfig,
) -> tuple[dict[str, np.ndarray], AdamState]:
    t = state.step + 1
    lr, b1, b2 = cfg.learning_rate, cfg.beta1, cfg.beta2
    correction1 = 1.0 - b1**t
    correction2 = 1.0 - b2**t
    new_params: dict[str, np.ndarray] = {}
    new_m: dict[str, np.ndarray] = {}
    new_v: dict[str, np.ndarray] = {}
    for key in sorted(params):
        theta, g = params[key], grads[key]
        if g.shape != theta.shape:
            raise ShapeError(f"gradient for {key} has shape {g.shape}, parameter {theta.shape}")
        m = state.m.get(key, np.zeros_like(theta))
        v = state.v.get(key, np.zeros_like(theta))
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        update = (m / correction1) / (np.sqrt(v / correction2) + cfg.eps)
        new_params[key] = theta - lr * cfg.weight_decay * theta - lr * update
        new_m[key], new_v[key] = m, v
    return new_params, AdamState(t, new_m, new_v)
