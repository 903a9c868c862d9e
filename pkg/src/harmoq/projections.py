"""Structural projection matrices H (k x d) used by the residual calibration.

Stencil kinds place a fixed high-pass filter at every valid position:
1D second difference [1, -2, 1] for shapeless features, the 3x3 Laplacian
[[0,1,0],[1,-4,1],[0,1,0]] or both Sobel kernels at interior pixels for
features with a declared (h, w) spatial shape. Every stencil row sums to
zero, so constant feature vectors are annihilated exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError
from .linalg import as_matrix, seeded_gaussian

KINDS = ("laplacian", "sobel", "dct_highpass", "learned_basis", "random", "identity")

# Desk-scale default for kinds whose rank is a free choice.
DEFAULT_FREE_K = 64

SOBEL_GX = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
SOBEL_GY = np.array([[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]])
LAPLACIAN_2D = np.array([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]])


@dataclass(frozen=True)
class ProjectionMatrix:
    kind: str
    h: np.ndarray = field(repr=False)
    spatial: tuple[int, int] | None = None

    @property
    def k(self) -> int:
        return self.h.shape[0]

    @property
    def d(self) -> int:
        return self.h.shape[1]


def _even_subset(rows: np.ndarray, k: int) -> np.ndarray:
    """Evenly spaced row subset, preserving order; k <= len(rows)."""
    total = rows.shape[0]
    if k == total:
        return rows
    idx = np.unique(np.round(np.linspace(0, total - 1, k)).astype(int))
    # Rounding collisions are impossible for k <= total, but guard anyway.
    while idx.size < k:
        extra = np.setdiff1d(np.arange(total), idx)[: k - idx.size]
        idx = np.sort(np.concatenate([idx, extra]))
    return rows[idx]


def _laplacian_1d_rows(d: int) -> np.ndarray:
    if d < 3:
        raise ConfigError(f"1D laplacian needs d >= 3, got {d}")
    rows = np.zeros((d - 2, d))
    for i in range(d - 2):
        rows[i, i:i + 3] = (1.0, -2.0, 1.0)
    return rows


def _stencil_2d_rows(kernel: np.ndarray, spatial: tuple[int, int], d: int) -> np.ndarray:
    h, w = spatial
    if h * w != d:
        raise ConfigError(f"spatial {spatial} does not flatten to d={d}")
    if h < 3 or w < 3:
        raise ConfigError(f"2D stencil needs both sides >= 3, got {spatial}")
    rows = np.zeros(((h - 2) * (w - 2), d))
    r = 0
    for i in range(1, h - 1):
        for j in range(1, w - 1):
            for di in (-1, 0, 1):
                for dj in (-1, 0, 1):
                    rows[r, (i + di) * w + (j + dj)] += kernel[di + 1, dj + 1]
            r += 1
    return rows


def _dct_rows(d: int, k: int) -> np.ndarray:
    """Highest-k rows of the orthonormal DCT-II basis."""
    n = np.arange(d)
    freqs = np.arange(d - k, d)
    rows = np.cos(np.pi * (2.0 * n[None, :] + 1.0) * freqs[:, None] / (2.0 * d))
    scale = np.where(freqs == 0, np.sqrt(1.0 / d), np.sqrt(2.0 / d))
    return rows * scale[:, None]


def laplacian_filter_1d(features: np.ndarray) -> np.ndarray:
    """Same-size second difference along the feature axis, zero padded."""
    padded = np.pad(features, ((0, 0), (1, 1)))
    return padded[:, :-2] - 2.0 * padded[:, 1:-1] + padded[:, 2:]


def _learned_rows(calib_features, d: int, k: int) -> np.ndarray:
    feats = as_matrix(calib_features, "calib_features")
    if feats.shape[1] != d:
        raise DimensionError(f"calib features width {feats.shape[1]} != d={d}")
    if feats.shape[0] < k:
        raise ConfigError(f"need >= {k} calibration rows for k={k}, got {feats.shape[0]}")
    filtered = laplacian_filter_1d(feats)
    _, _, vt = np.linalg.svd(filtered, full_matrices=False)
    rows = vt[:k]
    # Deterministic sign convention: largest-|.| entry of each row positive.
    for i in range(rows.shape[0]):
        j = int(np.argmax(np.abs(rows[i])))
        if rows[i, j] < 0:
            rows[i] = -rows[i]
    return rows


def make_projection(kind: str, d: int, k: int | None = None,
                    spatial: tuple[int, int] | None = None,
                    seed: int | None = None,
                    calib_features=None) -> ProjectionMatrix:
    """Build the k x d projection for one layer.

    k=None (or 0) picks the kind's default: every valid stencil position
    for laplacian/sobel, min(64, d-2) for dct/learned/random, d for identity.
    Requesting more rows than a stencil kind can place is a config error;
    requesting fewer subsets the valid positions at even spacing.
    """
    if kind not in KINDS:
        raise ConfigError(f"unknown projection kind {kind!r}")
    if d < 1:
        raise DimensionError(f"d must be >= 1, got {d}")
    if k is not None and k == 0:
        k = None
    if k is not None and k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")

    if kind == "identity":
        if k is not None and k != d:
            raise ConfigError(f"identity projection requires k == d, got k={k}, d={d}")
        return ProjectionMatrix(kind, np.eye(d), spatial)

    if kind == "laplacian":
        if spatial is not None:
            rows = _stencil_2d_rows(LAPLACIAN_2D, spatial, d)
        else:
            rows = _laplacian_1d_rows(d)
    elif kind == "sobel":
        if spatial is None:
            raise ConfigError("sobel projection requires a spatial shape")
        rows = np.vstack([
            _stencil_2d_rows(SOBEL_GX, spatial, d),
            _stencil_2d_rows(SOBEL_GY, spatial, d),
        ])
    elif kind == "dct_highpass":
        kk = min(DEFAULT_FREE_K, max(1, d - 2)) if k is None else k
        if kk > d:
            raise ConfigError(f"dct_highpass k={kk} exceeds d={d}")
        return ProjectionMatrix(kind, _dct_rows(d, kk), spatial)
    elif kind == "learned_basis":
        if calib_features is None:
            raise ConfigError("learned_basis projection requires calibration features")
        kk = min(DEFAULT_FREE_K, max(1, d - 2)) if k is None else k
        if kk > d:
            raise ConfigError(f"learned_basis k={kk} exceeds d={d}")
        return ProjectionMatrix(kind, _learned_rows(calib_features, d, kk), spatial)
    else:  # random
        if seed is None:
            raise ConfigError("random projection requires a seed")
        kk = min(DEFAULT_FREE_K, max(1, d - 2)) if k is None else k
        g = seeded_gaussian(kk, d, seed)
        norms = np.linalg.norm(g, axis=1, keepdims=True)
        norms[norms == 0.0] = 1.0
        return ProjectionMatrix(kind, g / norms, spatial)

    if k is not None:
        if k > rows.shape[0]:
            raise ConfigError(
                f"{kind} places {rows.shape[0]} rows for this shape, requested k={k}"
            )
        rows = _even_subset(rows, k)
    return ProjectionMatrix(kind, rows, spatial)


def default_k(kind: str, d: int, spatial: tuple[int, int] | None = None) -> int:
    """Rank make_projection would choose for k=None."""
    if kind == "identity":
        return d
    if kind == "laplacian":
        if spatial is not None:
            return (spatial[0] - 2) * (spatial[1] - 2)
        return d - 2
    if kind == "sobel":
        if spatial is None:
            raise ConfigError("sobel projection requires a spatial shape")
        return 2 * (spatial[0] - 2) * (spatial[1] - 2)
    return min(DEFAULT_FREE_K, max(1, d - 2))
