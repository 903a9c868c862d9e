"""Adaptive boundary refinement (ABR).

Projected Adam on the four clipping boundaries of a layer, driven by
straight-through gradients of the compound loss

    L = mean_batch || (sW) d_x + d_W (x/s) ||^2

with d_x, d_W the quantization errors in the scaled frame. The
straight-through rule freezes each element's grid index n, under which

    dq/dalpha = 1 - n / (2^b - 1)      dq/dbeta = n / (2^b - 1)

which reduces to dq/dalpha = 1 below the range (n = 0) and dq/dbeta = 1
above it (n = 2^b - 1). `boundary_gradients` differentiates with respect
to the *applied* bounds, i.e. the clip parameters of the quantizers as
used in the scaled frame; chain-rule factors to the unscaled frame are
the caller's concern.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError
from .linalg import as_matrix
from .quantizer import MIN_GAP, QuantizerConfig, quant_error, step_size
from .scaling import BoundarySet, applied_configs


@dataclass(frozen=True)
class RefinerConfig:
    lr_init: float = 1e-2
    lr_final: float = 1e-4
    warmup_steps: int = 300
    schedule_horizon: int = 3000
    grad_clip_norm: float = 1.0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.lr_init <= 0 or self.lr_final <= 0:
            raise ConfigError("learning rates must be positive")
        if self.lr_final > self.lr_init:
            raise ConfigError("lr_final must not exceed lr_init")
        if self.warmup_steps < 0 or self.schedule_horizon <= self.warmup_steps:
            raise ConfigError("need 0 <= warmup_steps < schedule_horizon")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigError("Adam betas must be in [0, 1)")
        if self.grad_clip_norm <= 0:
            raise ConfigError("grad_clip_norm must be positive")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be nonnegative")


@dataclass
class AdamState:
    m: np.ndarray = field(default_factory=lambda: np.zeros(4))
    v: np.ndarray = field(default_factory=lambda: np.zeros(4))
    t: int = 0

    def copy(self) -> "AdamState":
        return AdamState(self.m.copy(), self.v.copy(), self.t)


def learning_rate(cfg: RefinerConfig, step_index: int) -> float:
    """Linear warmup to lr_init, then cosine decay to lr_final over the horizon."""
    if step_index < cfg.warmup_steps:
        return cfg.lr_init * (step_index + 1) / cfg.warmup_steps
    span = cfg.schedule_horizon - cfg.warmup_steps
    progress = min((step_index - cfg.warmup_steps) / span, 1.0)
    return cfg.lr_final + 0.5 * (cfg.lr_init - cfg.lr_final) * (1.0 + math.cos(math.pi * progress))


def total_loss(w, x_batch, s: float, theta: BoundarySet,
               bits_a: int, bits_w: int, w_ref=None) -> float:
    """Batch-mean squared compound residual in the scaled frame.

    With w_ref given, the residual is taken against the full-precision
    output of the reference weights, adding the drift term (sW - sW_ref)x
    so that calibration corrections to w show up as compensation rather
    than as a moving target. w_ref=None measures w against itself.
    """
    w = as_matrix(w, "W")
    x = as_matrix(x_batch, "x_batch")
    if x.shape[1] != w.shape[1]:
        raise DimensionError(f"batch width {x.shape[1]} != weight width {w.shape[1]}")
    act_cfg, wt_cfg = applied_configs(theta, s, bits_a, bits_w)
    w_s = w * s
    x_s = x / s
    d_x = quant_error(x_s, act_cfg)
    d_w = quant_error(w_s, wt_cfg)
    residual = d_x @ w_s.T + x_s @ d_w.T
    if w_ref is not None:
        w_ref = as_matrix(w_ref, "w_ref")
        if w_ref.shape != w.shape:
            raise DimensionError("w_ref shape must match w")
        residual = residual + x_s @ (w_s - w_ref * s).T
    return float(np.mean(np.sum(residual * residual, axis=1)))


def ste_derivatives(z, cfg: QuantizerConfig) -> tuple[np.ndarray, np.ndarray]:
    """(dq/dalpha, dq/dbeta) per element under the frozen-index rule."""
    z = np.asarray(z, dtype=np.float64)
    delta = step_size(cfg)
    idx = np.rint(np.clip((z - cfg.alpha) / delta, 0.0, float(cfg.levels)))
    frac = idx / cfg.levels
    return 1.0 - frac, frac


def boundary_gradients(w, x_batch, s: float, theta: BoundarySet,
                       bits_a: int, bits_w: int, w_ref=None) -> np.ndarray:
    """Gradient of total_loss w.r.t. the applied bounds
    (alpha_x/s, beta_x/s, s*alpha_w, s*beta_w), in that order.

    w_ref selects the same reference frame as in total_loss; the drift
    term is constant in theta but enters through the product rule.
    """
    w = as_matrix(w, "W")
    x = as_matrix(x_batch, "x_batch")
    if x.shape[1] != w.shape[1]:
        raise DimensionError(f"batch width {x.shape[1]} != weight width {w.shape[1]}")
    act_cfg, wt_cfg = applied_configs(theta, s, bits_a, bits_w)
    w_s = w * s
    x_s = x / s
    d_x = quant_error(x_s, act_cfg)
    d_w = quant_error(w_s, wt_cfg)
    residual = d_x @ w_s.T + x_s @ d_w.T          # n x m
    if w_ref is not None:
        w_ref = as_matrix(w_ref, "w_ref")
        if w_ref.shape != w.shape:
            raise DimensionError("w_ref shape must match w")
        residual = residual + x_s @ (w_s - w_ref * s).T
    n = x.shape[0]

    da_x, db_x = ste_derivatives(x_s, act_cfg)    # n x d each
    back_act = residual @ w_s                     # n x d
    g_alpha_x = 2.0 * float(np.sum(back_act * da_x)) / n
    g_beta_x = 2.0 * float(np.sum(back_act * db_x)) / n

    da_w, db_w = ste_derivatives(w_s, wt_cfg)     # m x d each
    back_wt = residual.T @ x_s                    # m x d
    g_alpha_w = 2.0 * float(np.sum(back_wt * da_w)) / n
    g_beta_w = 2.0 * float(np.sum(back_wt * db_w)) / n

    return np.array([g_alpha_x, g_beta_x, g_alpha_w, g_beta_w])


def refine_step(state: AdamState, theta: BoundarySet, gradient,
                cfg: RefinerConfig, step_index: int) -> tuple[AdamState, BoundarySet]:
    """One projected Adam step on (alpha_x, beta_x, alpha_w, beta_w).

    Order: global norm clip, optional decoupled-style L2 term, Adam moment
    update with bias correction, parameter step at the scheduled rate, then
    projection alpha <- min(alpha, beta - 0.01) on both bound pairs.
    """
    g = np.asarray(gradient, dtype=np.float64).copy()
    if g.shape != (4,):
        raise DimensionError(f"gradient must have shape (4,), got {g.shape}")
    vec = theta.to_array()

    norm = float(np.linalg.norm(g))
    if norm > cfg.grad_clip_norm:
        g *= cfg.grad_clip_norm / norm
    if cfg.weight_decay > 0.0:
        g += cfg.weight_decay * vec

    out = state.copy()
    out.t += 1
    out.m = cfg.beta1 * out.m + (1.0 - cfg.beta1) * g
    out.v = cfg.beta2 * out.v + (1.0 - cfg.beta2) * g * g
    m_hat = out.m / (1.0 - cfg.beta1 ** out.t)
    v_hat = out.v / (1.0 - cfg.beta2 ** out.t)
    lr = learning_rate(cfg, step_index)
    vec = vec - lr * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)

    vec[0] = min(vec[0], vec[1] - MIN_GAP)
    vec[2] = min(vec[2], vec[3] - MIN_GAP)
    return out, BoundarySet.from_array(vec)
