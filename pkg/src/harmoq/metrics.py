"""Image quality metrics on [0, 1] grayscale planes.

PSNR uses peak 1.0 and caps at 100 dB. SSIM follows the windowed form:
11 x 11 Gaussian weights with sigma 1.5, K1 = 0.01, K2 = 0.03, dynamic
range L = 1, averaged over all fully valid window positions.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError, DimensionError

PSNR_CAP = 100.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def as_image(values) -> np.ndarray:
    """Validate a 2D array and clamp it to [0, 1]."""
    a = np.asarray(values, dtype=np.float64)
    if a.ndim != 2:
        raise DimensionError(f"image must be 2D, got {a.ndim} dimensions")
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise DimensionError(f"image has degenerate shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise DataError("image has non-finite values")
    return np.clip(a, 0.0, 1.0)


def psnr(a, b) -> float:
    """10 log10(1 / MSE) in dB, capped at 100."""
    a = as_image(a)
    b = as_image(b)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse <= 1e-10:
        return PSNR_CAP
    return min(10.0 * np.log10(1.0 / mse), PSNR_CAP)


def _gaussian_window() -> np.ndarray:
    half = SSIM_WINDOW // 2
    coords = np.arange(SSIM_WINDOW) - half
    g = np.exp(-(coords ** 2) / (2.0 * SSIM_SIGMA ** 2))
    window = np.outer(g, g)
    return window / window.sum()


_WINDOW = _gaussian_window()


def _windowed_mean(img: np.ndarray) -> np.ndarray:
    """Gaussian-weighted local means at every valid window position."""
    view = np.lib.stride_tricks.sliding_window_view(img, (SSIM_WINDOW, SSIM_WINDOW))
    return np.einsum("ijkl,kl->ij", view, _WINDOW)


def ssim(a, b) -> float:
    """Mean local structural similarity; 1.0 iff the images are identical."""
    a = as_image(a)
    b = as_image(b)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    if a.shape[0] < SSIM_WINDOW or a.shape[1] < SSIM_WINDOW:
        raise DimensionError(
            f"both sides must be >= {SSIM_WINDOW}, got {a.shape}"
        )
    c1 = SSIM_K1 ** 2
    c2 = SSIM_K2 ** 2

    mu_a = _windowed_mean(a)
    mu_b = _windowed_mean(b)
    mu_aa = _windowed_mean(a * a)
    mu_bb = _windowed_mean(b * b)
    mu_ab = _windowed_mean(a * b)

    var_a = mu_aa - mu_a * mu_a
    var_b = mu_bb - mu_b * mu_b
    cov = mu_ab - mu_a * mu_b

    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))
