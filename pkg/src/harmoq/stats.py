"""Streaming second-order calibration statistics.

Tracks the uncentered moments S_xx = E[x x^T], S_dx = E[d_x x^T] and
S_dd = E[d_x d_x^T] of an activation stream and its quantization-error
stream. Batches seen before `warmup` samples accumulate into an exact
mean; each later batch B updates the running estimate as
M <- momentum * M + (1 - momentum) * mean(B).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, StateError
from .linalg import as_matrix

DEFAULT_MOMENTUM = 0.9
DEFAULT_WARMUP = 200


@dataclass
class CalibStats:
    dim: int
    momentum: float = DEFAULT_MOMENTUM
    warmup: int = DEFAULT_WARMUP
    samples_seen: int = 0
    sigma_xx: np.ndarray = field(default=None, repr=False)
    sigma_dx: np.ndarray = field(default=None, repr=False)
    sigma_dd: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.dim < 1:
            raise DimensionError(f"dim must be >= 1, got {self.dim}")
        if not 0.0 < self.momentum < 1.0:
            raise StateError(f"momentum must be in (0, 1), got {self.momentum}")
        if self.warmup < 1:
            raise StateError(f"warmup must be >= 1, got {self.warmup}")
        if self.sigma_xx is None:
            self.sigma_xx = np.zeros((self.dim, self.dim))
            self.sigma_dx = np.zeros((self.dim, self.dim))
            self.sigma_dd = np.zeros((self.dim, self.dim))

    def copy(self) -> "CalibStats":
        return CalibStats(
            dim=self.dim, momentum=self.momentum, warmup=self.warmup,
            samples_seen=self.samples_seen,
            sigma_xx=self.sigma_xx.copy(),
            sigma_dx=self.sigma_dx.copy(),
            sigma_dd=self.sigma_dd.copy(),
        )


def update_stats(stats: CalibStats, x_batch, dx_batch) -> CalibStats:
    """Fold one batch of (activation, quant-error) rows into the accumulator.

    Returns a new accumulator; the input is not mutated. An empty batch is
    the identity. A batch that starts before the warmup threshold is folded
    entirely into the exact mean, so a first batch of exactly `warmup` rows
    reproduces that batch's sample moments.
    """
    x = np.asarray(x_batch, dtype=np.float64)
    dx = np.asarray(dx_batch, dtype=np.float64)
    if x.size == 0 and dx.size == 0:
        return stats.copy()
    x = as_matrix(x, "x_batch")
    dx = as_matrix(dx, "dx_batch")
    if x.shape != dx.shape:
        raise DimensionError(f"x {x.shape} and dx {dx.shape} must match")
    if x.shape[1] != stats.dim:
        raise DimensionError(f"batch width {x.shape[1]} != stats dim {stats.dim}")

    n = x.shape[0]
    m_xx = x.T @ x / n
    m_dx = dx.T @ x / n
    m_dd = dx.T @ dx / n

    out = stats.copy()
    if stats.samples_seen < stats.warmup:
        # Exact running mean over everything seen so far.
        total = stats.samples_seen + n
        w_old = stats.samples_seen / total
        w_new = n / total
        out.sigma_xx = w_old * stats.sigma_xx + w_new * m_xx
        out.sigma_dx = w_old * stats.sigma_dx + w_new * m_dx
        out.sigma_dd = w_old * stats.sigma_dd + w_new * m_dd
    else:
        mom = stats.momentum
        out.sigma_xx = mom * stats.sigma_xx + (1.0 - mom) * m_xx
        out.sigma_dx = mom * stats.sigma_dx + (1.0 - mom) * m_dx
        out.sigma_dd = mom * stats.sigma_dd + (1.0 - mom) * m_dd
    out.samples_seen = stats.samples_seen + n
    return out


def finalize(stats: CalibStats) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (S_xx, S_dx, S_dd) with the symmetric moments exactly symmetrized.

    Requires at least `warmup` samples.
    """
    if stats.samples_seen < stats.warmup:
        raise StateError(
            f"finalize needs >= {stats.warmup} samples, saw {stats.samples_seen}"
        )
    s_xx = 0.5 * (stats.sigma_xx + stats.sigma_xx.T)
    s_dd = 0.5 * (stats.sigma_dd + stats.sigma_dd.T)
    return s_xx, stats.sigma_dx.copy(), s_dd
