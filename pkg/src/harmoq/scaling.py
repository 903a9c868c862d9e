"""Harmonized scale optimization (HSO).

A per-layer scale s trades quantization error between the two sides of a
linear layer: weights are quantized as s*W on bounds (s*alpha_w, s*beta_w)
and activations as x/s on bounds (alpha_x/s, beta_x/s). Under the uniform
model the two error contributions are

    MSE_x(s) = (beta_x - alpha_x)^2 / (12 s^2 (2^bx - 1)^2)
    MSE_w(s) = (beta_w - alpha_w)^2 s^2 / (12 (2^bw - 1)^2)

and the balancing scale (MSE_x = MSE_w exactly) is

    s* = sqrt( (beta_x - alpha_x) (2^bw - 1) / ((beta_w - alpha_w) (2^bx - 1)) )

clamped to [0.1, 10] and to the interval that keeps both applied clipping
ranges at least the minimum quantizer gap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .quantizer import MIN_GAP, QuantizerConfig, gap_ok

SCALE_MIN = 0.1
SCALE_MAX = 10.0


@dataclass(frozen=True)
class BoundarySet:
    """Clipping boundaries of one layer in the unscaled frame."""
    alpha_x: float
    beta_x: float
    alpha_w: float
    beta_w: float

    def __post_init__(self):
        for a, b, side in ((self.alpha_x, self.beta_x, "activation"),
                           (self.alpha_w, self.beta_w, "weight")):
            if not (np.isfinite(a) and np.isfinite(b)):
                raise ConfigError(f"{side} bounds must be finite")
            if not gap_ok(a, b):
                raise ConfigError(
                    f"{side} bounds need alpha <= beta - {MIN_GAP}, got ({a}, {b})"
                )

    def to_array(self) -> np.ndarray:
        return np.array([self.alpha_x, self.beta_x, self.alpha_w, self.beta_w])

    @staticmethod
    def from_array(theta) -> "BoundarySet":
        return BoundarySet(float(theta[0]), float(theta[1]),
                           float(theta[2]), float(theta[3]))


def component_mse(side: str, s: float, theta: BoundarySet, bits: int) -> float:
    """Model MSE of one side at scale s; equals the applied grid's theoretical MSE."""
    if s <= 0:
        raise ConfigError(f"scale must be positive, got {s}")
    levels = (1 << bits) - 1
    if side == "act":
        span = theta.beta_x - theta.alpha_x
        return span * span / (12.0 * s * s * levels * levels)
    if side == "wt":
        span = theta.beta_w - theta.alpha_w
        return span * span * s * s / (12.0 * levels * levels)
    raise ConfigError(f"side must be 'act' or 'wt', got {side!r}")


def scale_validity_interval(theta: BoundarySet) -> tuple[float, float]:
    """Scales for which both applied clipping gaps stay >= the minimum gap.

    Applied gaps are (beta_x - alpha_x)/s and s (beta_w - alpha_w); s = 1 is
    always inside because the unscaled gaps satisfy the minimum already.
    """
    gap_x = theta.beta_x - theta.alpha_x
    gap_w = theta.beta_w - theta.alpha_w
    lo = max(SCALE_MIN, MIN_GAP / gap_w)
    hi = min(SCALE_MAX, gap_x / MIN_GAP)
    return lo, hi


def optimal_scale(theta: BoundarySet, bits_a: int, bits_w: int) -> float:
    """Closed-form balancing scale, clamped to its validity interval."""
    span_x = theta.beta_x - theta.alpha_x
    span_w = theta.beta_w - theta.alpha_w
    levels_a = (1 << bits_a) - 1
    levels_w = (1 << bits_w) - 1
    s = math.sqrt((span_x * levels_w) / (span_w * levels_a))
    lo, hi = scale_validity_interval(theta)
    return min(max(s, lo), hi)


def apply_scale(w, x_batch, s: float):
    """Move a layer into the scaled frame: (s W, x / s)."""
    if s <= 0:
        raise ConfigError(f"scale must be positive, got {s}")
    return np.asarray(w, dtype=np.float64) * s, np.asarray(x_batch, dtype=np.float64) / s


def applied_configs(theta: BoundarySet, s: float, bits_a: int,
                    bits_w: int) -> tuple[QuantizerConfig, QuantizerConfig]:
    """Quantizer configs as applied in the scaled frame: (activation, weight)."""
    act = QuantizerConfig(bits_a, theta.alpha_x / s, theta.beta_x / s)
    wt = QuantizerConfig(bits_w, theta.alpha_w * s, theta.beta_w * s)
    return act, wt
