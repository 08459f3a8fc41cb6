"""
perceptual.py
-------------
Fixed, seeded convolutional feature pyramid used as a deterministic
perceptual distance. Each scale is a 3×3 convolution followed by ReLU; the
next scale starts from a 2×2 average pool of the previous features.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from autodiff import Tensor, ops
from utils.config import PERCEPTUAL_CHANNELS, PERCEPTUAL_SCALES, PERCEPTUAL_SEED
from utils.errors import ShapeError

KERNEL = 3


class FeaturePyramid:
    def __init__(self, seed: int = PERCEPTUAL_SEED, channels: int = PERCEPTUAL_CHANNELS,
                 scales: int = PERCEPTUAL_SCALES, in_channels: int = 3) -> None:
        rng = np.random.default_rng(seed)
        self.seed = seed
        self.kernels: list[Tensor] = []
        self.biases: list[Tensor] = []
        c_in = in_channels
        for _ in range(scales):
            fan_in = KERNEL * KERNEL * c_in
            self.kernels.append(Tensor(rng.normal(0.0, np.sqrt(2.0 / fan_in), (fan_in, channels))))
            self.biases.append(Tensor(rng.normal(0.0, 0.01, channels)))
            c_in = channels

    @property
    def scales(self) -> int:
        return len(self.kernels)

    def features(self, image: Tensor) -> list[Tensor]:
        """Feature maps (H_s * W_s, channels), finest first."""
        h, w, _ = image.shape
        maps: list[Tensor] = []
        x = image
        for s, (kernel, bias) in enumerate(zip(self.kernels, self.biases)):
            if s:
                x = ops.avg_pool2(x)
                h, w = h // 2, w // 2
            out = ops.relu(ops.linear(ops.im2col(x, KERNEL), kernel, bias))
            maps.append(out)
            x = out.reshape(h, w, kernel.shape[1])
        return maps


@lru_cache(maxsize=4)
def default_pyramid(seed: int = PERCEPTUAL_SEED) -> FeaturePyramid:
    return FeaturePyramid(seed)


def perceptual_loss(pred: Tensor, target: np.ndarray | Tensor, pyramid: FeaturePyramid | None = None) -> Tensor:
    """Mean squared feature distance, averaged over scales."""
    target = target if isinstance(target, Tensor) else Tensor(target)
    if pred.shape != target.shape:
        raise ShapeError(f"perceptual_loss: prediction {pred.shape} vs target {target.shape}")
    pyramid = pyramid or default_pyramid()
    if min(pred.shape[:2]) < 2 ** (pyramid.scales - 1):
        raise ShapeError(f"perceptual_loss: {pred.shape[:2]} too small for {pyramid.scales} scales")
    per_scale = [
        ops.square(a - b).mean()
        for a, b in zip(pyramid.features(pred), pyramid.features(target))
    ]
    total = per_scale[0]
    for term in per_scale[1:]:
        total = total + term
    return total * (1.0 / len(per_scale))
