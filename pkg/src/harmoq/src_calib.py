"""Structural residual calibration (SRC).

Corrects a layer's weights so that the compound first-order error
W d_x + delta_W x is cancelled where it matters structurally. The
correction is constrained to the span of the structural filters,
delta_W = Z H with coefficients Z in R^{m x k}, and Z minimizes

    E || W d_x + Z H x ||^2 + lam ||Z||_F^2

whose normal equation  Z (H S_xx H^T + lam I) = -W S_dx H^T  is solved
in closed form by one stabilized Cholesky factorization, giving

    delta_W* = -W S_dx H^T (H S_xx H^T + (lam + eps) I)^{-1} H.

For H = I this is exactly ridge calibration -W S_dx (S_xx + lam I)^{-1}.

`src_objective` evaluates the same objective at an arbitrary m x d
correction by splitting it into its structural component (coefficients
delta H^+) and the orthogonal remainder, which is penalized at the same
lam; the closed form above is its unique global minimizer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError
from .linalg import as_matrix, cholesky_solve
from .projections import ProjectionMatrix


@dataclass(frozen=True)
class SrcConfig:
    lam: float = 0.01
    solver_eps: float = 1e-6

    def __post_init__(self):
        if self.lam <= 0:
            raise ConfigError(f"lam must be positive, got {self.lam}")
        if self.solver_eps < 0:
            raise ConfigError(f"solver_eps must be nonnegative, got {self.solver_eps}")


def _h_array(h) -> np.ndarray:
    if isinstance(h, ProjectionMatrix):
        return h.h
    return as_matrix(h, "H")


def _check_shapes(w, s_xx, s_dx, h):
    d = w.shape[1]
    if s_xx.shape != (d, d) or s_dx.shape != (d, d):
        raise DimensionError(
            f"moments must be {d} x {d}, got {s_xx.shape} and {s_dx.shape}"
        )
    if h.shape[1] != d:
        raise DimensionError(f"H width {h.shape[1]} != feature dim {d}")


def compute_src_correction(w, moments, h, cfg: SrcConfig = SrcConfig()) -> np.ndarray:
    """Closed-form weight correction delta_W* (m x d).

    `moments` is the (S_xx, S_dx, S_dd) triple from finalize(); S_dd is
    not needed by the minimizer. The solver stabilizer adds to the ridge
    weight on the coefficient block, so the effective regularizer is
    lam + solver_eps.
    """
    w = as_matrix(w, "W")
    s_xx, s_dx = moments[0], moments[1]
    h = _h_array(h)
    _check_shapes(w, s_xx, s_dx, h)
    a = h @ s_xx @ h.T + cfg.lam * np.eye(h.shape[0])
    b = -(w @ s_dx) @ h.T
    z = cholesky_solve(a, b, eps=cfg.solver_eps)
    return z @ h


def pseudo_inverse_rows(h) -> np.ndarray:
    """H^+ = H^T (H H^T)^{-1} for a full-row-rank H (d x k)."""
    h = _h_array(h)
    return cholesky_solve(h @ h.T, h.T, eps=0.0)


def src_objective(delta_w, w, moments, h, lam: float) -> float:
    """Expected squared compound residual of a correction, plus ridge.

    Computed from second-order moments:

        E||W d_x + delta_par x||^2 + lam ||delta H^+||_F^2 + lam ||delta_perp||_F^2

    where delta_par = delta H^+ H is the structural component of delta
    and delta_perp the remainder orthogonal to the filter span.
    """
    if lam <= 0:
        raise ConfigError(f"lam must be positive, got {lam}")
    delta_w = as_matrix(delta_w, "delta_w")
    w = as_matrix(w, "W")
    s_xx, s_dx, s_dd = moments
    h = _h_array(h)
    _check_shapes(w, s_xx, s_dx, h)
    if delta_w.shape != w.shape:
        raise DimensionError(f"delta {delta_w.shape} must match W {w.shape}")

    hp = pseudo_inverse_rows(h)
    z = delta_w @ hp
    delta_par = z @ h
    delta_perp = delta_w - delta_par

    const = float(np.sum((w @ s_dd) * w))
    cross = 2.0 * float(np.sum((w @ s_dx) * delta_par))
    quad = float(np.sum((delta_par @ s_xx) * delta_par))
    reg = lam * (float(np.sum(z * z)) + float(np.sum(delta_perp * delta_perp)))
    return const + cross + quad + reg
