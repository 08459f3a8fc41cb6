"""
losses.py
---------
Photometric losses, canonical-space regularizers and their weighted assembly.

    total = λ_rgb·color + λ_mask·mask + λ_per·perceptual + w_asap·asap + w_acap·acap

assembled left to right in exactly that order, so a LossReport's total can be
reproduced bitwise from its terms.
"""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from autodiff import Tensor, ops
from avatar.gaussians import GaussianSet
from training.perceptual import FeaturePyramid, perceptual_loss
from utils.config import ACAP_THRESHOLD, LAMBDA_MASK, LAMBDA_PER, LAMBDA_RGB, W_ACAP, W_ASAP
from utils.errors import ShapeError

TERMS = ("color", "mask", "perceptual", "asap", "acap")


class LossWeights(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    rgb: float = Field(default=LAMBDA_RGB, ge=0.0)
    mask: float = Field(default=LAMBDA_MASK, ge=0.0)
    perceptual: float = Field(default=LAMBDA_PER, ge=0.0)
    asap: float = Field(default=W_ASAP, ge=0.0)
    acap: float = Field(default=W_ACAP, ge=0.0)
    acap_threshold: float = Field(default=ACAP_THRESHOLD, gt=0.0)
    # None: mean nearest-neighbour spacing of the anchors
    asap_target_scale: Optional[float] = Field(default=None, gt=0.0)

    def coefficients(self) -> dict[str, float]:
        return {"color": self.rgb, "mask": self.mask, "perceptual": self.perceptual,
                "asap": self.asap, "acap": self.acap}


@dataclass(frozen=True)
class LossReport:
    color: float
    mask: float
    perceptual: float
    asap: float
    acap: float
    total: float

    def to_record(self, step: int) -> str:
        values = " ".join(f"{name}={getattr(self, name)!r}" for name in (*TERMS, "total"))
        return f"step={step} {values}"

    @classmethod
    def from_record(cls, line: str) -> tuple[int, LossReport]:
        fields = dict(part.split("=", 1) for part in line.split())
        return int(fields.pop("step")), cls(**{k: float(v) for k, v in fields.items()})

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


def _same_shape(name: str, pred: Tensor, target: np.ndarray) -> None:
    if pred.shape != target.shape:
        raise ShapeError(f"{name}: prediction {pred.shape} vs target {target.shape}")


def color_loss(pred: Tensor, target: np.ndarray) -> Tensor:
    """Mean absolute error over every pixel and channel."""
    target = np.asarray(target, dtype=np.float64)
    _same_shape("color_loss", pred, target)
    return ops.absolute(pred - target).mean()


def mask_loss(pred_alpha: Tensor, target_mask: np.ndarray) -> Tensor:
    target_mask = np.asarray(target_mask, dtype=np.float64)
    _same_shape("mask_loss", pred_alpha, target_mask)
    if pred_alpha.ndim != 3 or pred_alpha.shape[2] != 1:
        raise ShapeError(f"mask_loss expects (H, W, 1), got {pred_alpha.shape}")
    return ops.absolute(pred_alpha - target_mask).mean()


def asap_loss(g: GaussianSet, target_scale: float) -> Tensor:
    """Mean over Gaussians of ||Σ_i / t² − I||_F².

    Σ_i = R S² Rᵀ, and the Frobenius norm is invariant under R, so each term
    equals Σ_k (σ_k² / t² − 1)².
    """
    if len(g) == 0:
        return Tensor(0.0)
    ratio = ops.square(g.scales) * (1.0 / (target_scale * target_scale))
    return ops.square(ratio - 1.0).sum(axis=1).mean()


def acap_loss(offsets: Tensor, threshold: float) -> Tensor:
    """Mean hinge max(||Δp_i|| − d, 0)."""
    if offsets.shape[0] == 0:
        return Tensor(0.0)
    return ops.relu(ops.row_norm(offsets) - threshold).mean()


def mean_nn_spacing(anchors: np.ndarray) -> float:
    """Mean distance from each anchor to its nearest other anchor."""
    anchors = np.asarray(anchors, dtype=np.float64)
    if len(anchors) < 2:
        return 1.0
    d2 = ((anchors[:, None, :] - anchors[None, :, :]) ** 2).sum(axis=2)
    np.fill_diagonal(d2, np.inf)
    return float(np.sqrt(d2.min(axis=1)).mean())


def assemble_total(terms: Mapping[str, Tensor], weights: LossWeights) -> Tensor:
    coeffs = weights.coefficients()
    total = coeffs["color"] * terms["color"]
    for name in TERMS[1:]:
        total = total + coeffs[name] * terms[name]
    return total


def report_of(terms: Mapping[str, Tensor], total: Tensor) -> LossReport:
    return LossReport(**{name: terms[name].item() for name in TERMS}, total=total.item())


def total_loss(
    pred_rgb: Tensor,
    pred_alpha: Tensor,
    target_rgb: np.ndarray,
    target_mask: np.ndarray,
    g: GaussianSet,
    offsets: Tensor,
    weights: LossWeights,
    target_scale: float,
    pyramid: FeaturePyramid | None = None,
) -> tuple[Tensor, LossReport]:
    """
    Single-target loss; regularizers act on the canonical set ``g``.

    ``target_scale`` is the ASAP reference scale, normally the mean nearest-neighbour
    spacing of the anchors; ``weights.asap_target_scale`` overrides it when set.
    """
    terms = {
        "color": color_loss(pred_rgb, target_rgb),
        "mask": mask_loss(pred_alpha, target_mask),
        "perceptual": perceptual_loss(pred_rgb, target_rgb, pyramid),
        "asap": asap_loss(g, weights.asap_target_scale or target_scale),
        "acap": acap_loss(offsets, weights.acap_threshold),
    }
    total = assemble_total(terms, weights)
    return total, report_of(terms, total)
