"""Image quality metrics: PSNR, RMSE, and windowed SSIM."""

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


@dataclass(frozen=True)
class MetricReport:
    psnr: float
    ssim: float
    rmse: float
    data_range: float


def _check_pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("metric inputs contain NaN or Inf")
    return a, b


def rmse(a, b):
    a, b = _check_pair(a, b)
    return float(np.sqrt(np.mean((a - b) ** 2)))


def psnr(a, b, data_range=1.0):
    """10*log10(range^2 / MSE); identical images report +inf."""
    a, b = _check_pair(a, b)
    if data_range <= 0:
        raise ValueError("data_range must be positive")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(data_range * data_range / mse)


def _gaussian_window(size, sigma):
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g = np.exp(-(coords**2) / (2.0 * sigma * sigma))
    window = np.outer(g, g)
    return window / window.sum()


def ssim(a, b, data_range=1.0):
    """Mean local SSIM, 11x11 Gaussian window (sigma 1.5), symmetric padding."""
    a, b = _check_pair(a, b)
    if a.ndim != 2:
        raise ValueError("ssim expects 2-D images")
    if data_range <= 0:
        raise ValueError("data_range must be positive")
    window = _gaussian_window(SSIM_WINDOW, SSIM_SIGMA)
    pad = SSIM_WINDOW // 2

    def filt(img):
        padded = np.pad(img, pad, mode="symmetric")
        patches = sliding_window_view(padded, (SSIM_WINDOW, SSIM_WINDOW))
        return np.einsum("ijkl,kl->ij", patches, window)

    mu_a = filt(a)
    mu_b = filt(b)
    var_a = filt(a * a) - mu_a * mu_a
    var_b = filt(b * b) - mu_b * mu_b
    cov = filt(a * b) - mu_a * mu_b
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def evaluate_pair(a, b, data_range=1.0):
    return MetricReport(
        psnr=psnr(a, b, data_range),
        ssim=ssim(a, b, data_range),
        rmse=rmse(a, b),
        data_range=data_range,
    )
