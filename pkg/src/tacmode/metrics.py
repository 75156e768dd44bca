"""Image-quality and marker-motion metrics.

MSE and PSNR are computed on the 0-255 scale; SSIM uses an 11x11 Gaussian
window (sigma 1.5), K1 = 0.01, K2 = 0.03, dynamic range 255, averaged over
all fully contained windows and over channels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from tacmode.core import DimensionError
from tacmode.markers import MotionField, match_nearest

SSIM_WIN = 11
SSIM_SIGMA = 1.5
K1, K2 = 0.01, 0.03
PEAK = 255.0


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return a, b


def mse(a, b) -> float:
    a, b = _pair(a, b)
    d = PEAK * a - PEAK * b
    return float(np.mean(d * d))


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` for identical inputs."""
    m = mse(a, b)
    if m == 0:
        return math.inf
    return 10.0 * math.log10(PEAK**2 / m)


def gaussian_window(size: int = SSIM_WIN, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-(x * x) / (2 * sigma * sigma))
    return g / g.sum()


def _valid_filter(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    half = len(g) // 2
    y = ndimage.correlate1d(x, g, axis=0, mode="constant")
    y = ndimage.correlate1d(y, g, axis=1, mode="constant")
    return y[half : x.shape[0] - half, half : x.shape[1] - half]


def ssim_map(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Per-window SSIM of two single-channel images on the 0-255 scale."""
    g = gaussian_window()
    c1, c2 = (K1 * PEAK) ** 2, (K2 * PEAK) ** 2
    mu_a, mu_b = _valid_filter(a, g), _valid_filter(b, g)
    saa = _valid_filter(a * a, g) - mu_a * mu_a
    sbb = _valid_filter(b * b, g) - mu_b * mu_b
    sab = _valid_filter(a * b, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * sab + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (saa + sbb + c2)
    return num / den


def ssim(a, b, *, grayscale: bool = False) -> float:
    """Mean structural similarity; per-channel average unless ``grayscale``."""
    a, b = _pair(a, b)
    if min(a.shape[:2]) < SSIM_WIN:
        raise DimensionError(f"image smaller than the {SSIM_WIN}x{SSIM_WIN} SSIM window")
    if np.array_equal(a, b):
        return 1.0
    a, b = PEAK * a, PEAK * b
    if a.ndim == 2:
        return float(ssim_map(a, b).mean())
    if grayscale:
        return float(ssim_map(a.mean(axis=2), b.mean(axis=2)).mean())
    return float(np.mean([ssim_map(a[..., c], b[..., c]).mean() for c in range(a.shape[2])]))


@dataclass
class MotionErrorReport:
    e_rmse: float
    e_mag: float
    n_matched: int
    failed: bool


def motion_errors(pred: MotionField, truth: MotionField, gate: float) -> MotionErrorReport:
    """RMSE of vector differences and mean magnitude error over matched anchors."""
    m = match_nearest(pred.anchors, truth.anchors, gate)
    if not m.pairs:
        return MotionErrorReport(math.nan, math.nan, 0, True)
    vp = pred.vectors[m.a_idx]
    vt = truth.vectors[m.b_idx]
    d = vp - vt
    e_rmse = math.sqrt(float(np.mean(np.sum(d * d, axis=1))))
    e_mag = float(np.mean(np.abs(np.hypot(vp[:, 0], vp[:, 1]) - np.hypot(vt[:, 0], vt[:, 1]))))
    return MotionErrorReport(e_rmse, e_mag, len(m.pairs), False)


def nan_rate(reports) -> float:
    reports = list(reports)
    if not reports:
        raise ValueError("nan_rate needs at least one report")
    return sum(r.failed for r in reports) / len(reports)
