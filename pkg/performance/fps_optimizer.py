"""fps_optimizer.py: smoothed rate meter for animation frames and training steps."""
from __future__ import annotations

import time

from utils.config import RATE_SMOOTHING


class FPSOptimizer:
    """Exponentially smoothed events-per-second, plus the plain average."""

    def __init__(self, smoothing: float = RATE_SMOOTHING):
        self._s     = smoothing
        self._fps   = 0.0
        self._t0    = time.perf_counter()
        self._pt    = self._t0
        self._count = 0

    def tick(self) -> float:
        now = time.perf_counter()
        dt  = max(now - self._pt, 1e-6)
        self._pt  = now
        rate = 1.0 / dt
        self._fps = rate if self._count == 0 else self._s*self._fps + (1-self._s)*rate
        self._count += 1
        return self._fps

    @property
    def fps(self) -> float:
        return self._fps

    @property
    def count(self) -> int:
        return self._count

    @property
    def elapsed(self) -> float:
        return self._pt - self._t0

    @property
    def average(self) -> float:
        return self._count / self.elapsed if self._count and self.elapsed > 0 else 0.0

    def summary(self, unit: str = "frames") -> str:
        return f"{self._count} {unit} in {self.elapsed:.3f}s ({self.average:.2f}/s, smoothed {self._fps:.2f}/s)"
