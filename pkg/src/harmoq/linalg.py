"""Dense-matrix primitives: validation, stabilized Cholesky solves,
seeded Gaussian draws, and the HQT1 tensor file format.

All computation is float64 internally; files store float32.
"""

from __future__ import annotations

import struct

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import DataError, DimensionError, IOFormatError, SingularityError

HQT_MAGIC = b"HQT1"

# Relative asymmetry above this is rejected, not silently symmetrized,
# so upstream statistics bugs surface here.
SYMMETRY_RTOL = 1e-10

DEFAULT_SOLVER_EPS = 1e-6


def as_matrix(values, name: str = "matrix") -> np.ndarray:
    """Validate and convert to a 2D float64 array with finite entries."""
    a = np.asarray(values, dtype=np.float64)
    if a.ndim != 2:
        raise DimensionError(f"{name}: expected 2 dimensions, got {a.ndim}")
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise DimensionError(f"{name}: zero-sized dimension in shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise DataError(f"{name}: non-finite entries")
    return a


def seeded_gaussian(rows: int, cols: int, seed: int) -> np.ndarray:
    """Deterministic standard-normal matrix for a given seed."""
    if rows < 1 or cols < 1:
        raise DimensionError(f"seeded_gaussian: invalid shape ({rows}, {cols})")
    rng = np.random.default_rng(seed)
    return rng.standard_normal((rows, cols))


def check_symmetric(a: np.ndarray, name: str = "matrix") -> None:
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"{name}: not square, shape {a.shape}")
    denom = max(float(np.abs(a).max()), 1e-300)
    gap = float(np.abs(a - a.T).max())
    if gap > SYMMETRY_RTOL * denom:
        raise DataError(
            f"{name}: asymmetry {gap / denom:.3e} exceeds {SYMMETRY_RTOL:.0e} relative"
        )


def cholesky_solve(a, b, eps: float = DEFAULT_SOLVER_EPS) -> np.ndarray:
    """Solve X (A + eps I) = B for X, with A symmetric positive semidefinite.

    A is k x k, B is m x k; the stabilizer eps keeps the factorization
    well-posed when A is merely PSD. Asymmetric A is rejected.
    """
    a = as_matrix(a, "A")
    b = as_matrix(b, "B")
    check_symmetric(a, "A")
    if b.shape[1] != a.shape[0]:
        raise DimensionError(
            f"B has {b.shape[1]} columns but A is {a.shape[0]} x {a.shape[0]}"
        )
    if eps < 0:
        raise DataError(f"eps must be nonnegative, got {eps}")
    stabilized = a + eps * np.eye(a.shape[0])
    try:
        factor = cho_factor(stabilized, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SingularityError(f"Cholesky factorization failed: {exc}") from exc
    # X (A + eps I) = B  <=>  (A + eps I) X^T = B^T by symmetry.
    return cho_solve(factor, b.T, check_finite=False).T


def save_hqt(path, values) -> None:
    """Write a matrix as HQT1: magic, rank, rows, cols (uint32 LE), float32 LE row-major."""
    a = as_matrix(values, "tensor")
    rows, cols = a.shape
    header = HQT_MAGIC + struct.pack("<III", 2, rows, cols)
    body = a.astype("<f4").tobytes(order="C")
    with open(path, "wb") as fh:
        fh.write(header + body)


def load_hqt(path) -> np.ndarray:
    """Read an HQT1 file back as float64. Round-trips float32 payloads bit-exactly."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 16 or raw[:4] != HQT_MAGIC:
        raise IOFormatError(f"{path}: missing HQT1 magic")
    rank, rows, cols = struct.unpack("<III", raw[4:16])
    if rank != 2:
        raise IOFormatError(f"{path}: unsupported rank {rank}")
    expected = 16 + 4 * rows * cols
    if len(raw) != expected:
        raise IOFormatError(f"{path}: size {len(raw)} != expected {expected}")
    if rows < 1 or cols < 1:
        raise IOFormatError(f"{path}: degenerate shape ({rows}, {cols})")
    flat = np.frombuffer(raw, dtype="<f4", offset=16)
    a = flat.reshape(rows, cols).astype(np.float64)
    if not np.all(np.isfinite(a)):
        raise DataError(f"{path}: non-finite entries")
    return a
