"""Affine fake quantization on the grid q = alpha + n * Delta.

Rounding is half-to-even, indices clamp to [0, 2^b - 1], and the
uniform-input mean squared error of the grid is (beta - alpha)^2 / (12 (2^b - 1)^2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError

# Smallest allowed clipping range; calibrators widen degenerate ranges to this.
MIN_GAP = 0.01


def gap_ok(alpha: float, beta: float) -> bool:
    """True when alpha <= beta - MIN_GAP up to last-ulp rounding slack."""
    tol = 1e-12 * max(1.0, abs(alpha), abs(beta))
    return alpha - (beta - MIN_GAP) <= tol


@dataclass(frozen=True)
class QuantizerConfig:
    bits: int
    alpha: float
    beta: float

    def __post_init__(self):
        if not isinstance(self.bits, (int, np.integer)) or isinstance(self.bits, bool):
            raise ConfigError(f"bits must be an integer, got {self.bits!r}")
        if not 2 <= self.bits <= 8:
            raise ConfigError(f"bits must be in [2, 8], got {self.bits}")
        if not (np.isfinite(self.alpha) and np.isfinite(self.beta)):
            raise ConfigError("alpha/beta must be finite")
        if not gap_ok(self.alpha, self.beta):
            raise ConfigError(
                f"need alpha <= beta - {MIN_GAP}, got alpha={self.alpha}, beta={self.beta}"
            )

    @property
    def levels(self) -> int:
        return (1 << self.bits) - 1


def step_size(cfg: QuantizerConfig) -> float:
    """Delta = (beta - alpha) / (2^b - 1)."""
    return (cfg.beta - cfg.alpha) / cfg.levels


def fake_quantize(z, cfg: QuantizerConfig) -> np.ndarray:
    """Quantize-dequantize onto the affine grid. Idempotent; output in [alpha, beta]."""
    z = np.asarray(z, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise DataError("fake_quantize: non-finite input")
    delta = step_size(cfg)
    idx = np.clip((z - cfg.alpha) / delta, 0.0, float(cfg.levels))
    # np.rint rounds half to even (0.5 -> 0, 1.5 -> 2).
    return cfg.alpha + np.rint(idx) * delta


def quant_error(z, cfg: QuantizerConfig) -> np.ndarray:
    """delta = fake_quantize(z) - z."""
    z = np.asarray(z, dtype=np.float64)
    return fake_quantize(z, cfg) - z


def theoretical_mse(cfg: QuantizerConfig) -> float:
    """Uniform-input model MSE of the grid."""
    span = cfg.beta - cfg.alpha
    return span * span / (12.0 * cfg.levels * cfg.levels)


def _widen_degenerate(alpha: float, beta: float) -> tuple[float, float]:
    if beta - alpha < MIN_GAP:
        mid = 0.5 * (alpha + beta)
        return mid - 0.5 * MIN_GAP, mid + 0.5 * MIN_GAP
    return alpha, beta


def minmax_bounds(samples) -> tuple[float, float]:
    """Observed min/max, widened symmetrically to the minimum gap when degenerate."""
    a = np.asarray(samples, dtype=np.float64)
    if a.size == 0:
        raise DataError("minmax_bounds: empty input")
    if not np.all(np.isfinite(a)):
        raise DataError("minmax_bounds: non-finite entries")
    return _widen_degenerate(float(a.min()), float(a.max()))


def percentile_bounds(samples, p: float) -> tuple[float, float]:
    """Two-sided percentile clipping: alpha at (100-p)/2, beta at p + (100-p)/2.

    Linear interpolation on the sorted sample; p = 100 reduces to minmax.
    """
    if not 50.0 < p <= 100.0:
        raise ConfigError(f"percentile p must be in (50, 100], got {p}")
    a = np.asarray(samples, dtype=np.float64).ravel()
    if a.size < 2:
        raise DataError(f"percentile_bounds: need at least 2 samples, got {a.size}")
    if not np.all(np.isfinite(a)):
        raise DataError("percentile_bounds: non-finite entries")
    lo = (100.0 - p) / 2.0
    hi = p + lo
    alpha, beta = np.percentile(a, [lo, hi], method="linear")
    return _widen_degenerate(float(alpha), float(beta))


def symmetrize_bounds(alpha: float, beta: float) -> tuple[float, float]:
    """Force beta = -alpha by taking the larger magnitude of the two."""
    r = max(abs(alpha), abs(beta), 0.5 * MIN_GAP)
    return -r, r


def calibrate_bounds(samples, method: str = "minmax", p: float = 99.0,
                     symmetric: bool = False) -> tuple[float, float]:
    """Dispatch helper used by baselines and pipeline initialization."""
    if method == "minmax":
        alpha, beta = minmax_bounds(samples)
    elif method == "percentile":
        alpha, beta = percentile_bounds(samples, p)
    else:
        raise ConfigError(f"unknown calibration method {method!r}")
    if symmetric:
        alpha, beta = symmetrize_bounds(alpha, beta)
    return alpha, beta
