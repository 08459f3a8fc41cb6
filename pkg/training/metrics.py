"""Image-quality metrics on float images in [0, 1]."""

from __future__ import annotations

import cv2
import numpy as np

from utils.config import PSNR_CAP, PSNR_MSE_FLOOR, SSIM_K1, SSIM_K2, SSIM_SIGMA, SSIM_WINDOW
from utils.errors import ShapeError


def _pair(pred: np.ndarray, target: np.ndarray, name: str) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"{name}: prediction {pred.shape} vs target {target.shape}")
    return pred, target


def psnr(pred: np.ndarray, target: np.ndarray) -> float:
    pred, target = _pair(pred, target, "psnr")
    mse = float(np.mean((pred - target) ** 2))
    if mse < PSNR_MSE_FLOOR:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * np.log10(1.0 / mse))


def _blur(x: np.ndarray) -> np.ndarray:
    return cv2.GaussianBlur(x, (SSIM_WINDOW, SSIM_WINDOW), SSIM_SIGMA, borderType=cv2.BORDER_REFLECT)


def ssim(pred: np.ndarray, target: np.ndarray) -> float:
    """Gaussian-window SSIM (11×11, σ 1.5), mean over pixels then channels."""
    pred, target = _pair(pred, target, "ssim")
    if pred.ndim == 2:
        pred, target = pred[:, :, None], target[:, :, None]
    c1, c2 = SSIM_K1**2, SSIM_K2**2
    scores = []
    for c in range(pred.shape[2]):
        x = np.ascontiguousarray(pred[:, :, c])
        y = np.ascontiguousarray(target[:, :, c])
        mu_x, mu_y = _blur(x), _blur(y)
        var_x = _blur(x * x) - mu_x * mu_x
        var_y = _blur(y * y) - mu_y * mu_y
        cov = _blur(x * y) - mu_x * mu_y
        num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
        den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
        scores.append(float(np.mean(num / den)))
    return float(np.mean(scores))
