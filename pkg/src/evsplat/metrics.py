"""Image quality metrics and render throughput."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import losses, rasterizer
from .core import DataError

PSNR_CAP = 99.0


@dataclass(frozen=True)
class PsnrResult:
    value: float
    identical: bool     # true when MSE was exactly zero (value is the cap)

    def __float__(self) -> float:
        return self.value


def psnr(a: np.ndarray, b: np.ndarray, max_val: float = 1.0) -> PsnrResult:
    """10 log10(max^2 / MSE), capped at 99 dB for identical images."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DataError("image shape mismatch")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PsnrResult(PSNR_CAP, True)
    return PsnrResult(float(min(PSNR_CAP, 10.0 * np.log10(max_val**2 / mse))), False)


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    return losses.ssim(a, b)


def measure_fps(cloud, views, repetitions: int = 10, background=(0.0, 0.0, 0.0)) -> float:
    """Median forward-only rendering throughput over `repetitions` passes.

    Purely informational; wall-clock, so never asserted against fixed numbers.
    """
    if repetitions < 10:
        raise DataError("need at least 10 repetitions for a stable median")
    rates = []
    for _ in range(repetitions):
        start = time.perf_counter()
        for v in views:
            rasterizer.forward(cloud, v, background)
        elapsed = time.perf_counter() - start
        rates.append(len(views) / max(elapsed, 1e-9))
    return float(np.median(rates))
