"""Harmonized quantization pipeline.

One outer iteration refreshes calibration statistics under the current
quantizers, applies the closed-form structural weight correction (SRC),
recomputes the balancing scale (HSO), runs a fixed number of boundary
refinement steps (ABR), then re-checks the error-balance constraint:
a gap above eps recomputes the scale, a gap above retrigger * eps also
re-applies the correction. Iterations that increase the fixed-batch
loss are rolled back and the refinement rate is halved, so the
accepted-loss sequence is non-increasing by construction.

Statistics are collected sequentially: each layer sees the quantized
chain's activations while its reference stays the original net's tap at
the same tile, so the correction targets the layer's total deployed
deviation, upstream drift included, and per-layer gains compose through
the stack. The gating loss is the exact deviation of the quantized
chain from the original model on one fixed seeded batch of tiles.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DimensionError
from .projections import ProjectionMatrix, make_projection
from .quantizer import calibrate_bounds, fake_quantize
from .refiner import AdamState, RefinerConfig, boundary_gradients, refine_step
from .scaling import (BoundarySet, applied_configs, component_mse, optimal_scale,
                      scale_validity_interval)
from .src_calib import SrcConfig, compute_src_correction
from .stats import CalibStats, finalize, update_stats
from .toynet import LayerQuantState, ToyNet, _activate, collect_taps

COMPONENTS = ("SRC", "HSO", "ABR")

STATS_CHUNK = 64


@dataclass(frozen=True)
class PipelineConfig:
    bits_a: int = 2
    bits_w: int = 2
    seed: int = 42
    components: frozenset = frozenset(COMPONENTS)
    tau: float = 1e-4
    max_iters: int = 3000
    early_stop_delta: float = 1e-5
    early_stop_patience: int = 50
    epsilon_frac: float = 0.01
    src_retrigger_factor: float = 1.5
    rollback_lr_factor: float = 0.5
    rebalance_period: int = 5
    max_rollbacks: int = 60
    batch_size: int = 128
    calib_method: str = "minmax"
    percentile_p: float = 99.0
    symmetric: bool = False
    shared_scale: bool = False
    stats_momentum: float = 0.9
    stats_warmup: int = 200
    stats_repeats: int = 1
    projection_kind: str = "laplacian"
    projection_k: int | None = None
    projection_seed: int = 11
    src: SrcConfig = SrcConfig()
    refiner: RefinerConfig = RefinerConfig()

    def __post_init__(self):
        unknown = set(self.components) - set(COMPONENTS)
        if unknown:
            raise ConfigError(f"unknown components {sorted(unknown)}")
        if self.tau <= 0 or self.early_stop_delta <= 0:
            raise ConfigError("tau and early_stop_delta must be positive")
        if self.max_iters < 1 or self.rebalance_period < 1:
            raise ConfigError("max_iters and rebalance_period must be >= 1")
        if self.epsilon_frac <= 0:
            raise ConfigError("epsilon_frac must be positive")
        if self.src_retrigger_factor < 1.0:
            raise ConfigError("src_retrigger_factor must be >= 1")
        if not 0.0 < self.rollback_lr_factor < 1.0:
            raise ConfigError("rollback_lr_factor must be in (0, 1)")
        if self.batch_size < 1 or self.max_rollbacks < 1:
            raise ConfigError("batch_size and max_rollbacks must be >= 1")
        if self.early_stop_patience < 1:
            raise ConfigError("early_stop_patience must be >= 1")
        if self.stats_repeats < 1:
            raise ConfigError("stats_repeats must be >= 1")


@dataclass
class TraceRecord:
    iter: int
    loss: float
    gap: float
    s_per_layer: list[float]
    rollback: bool
    src_reapplied: bool
    correction_norms: list[float]

    def to_dict(self) -> dict:
        return {
            "iter": self.iter,
            "loss": self.loss,
            "gap": self.gap,
            "s_per_layer": list(self.s_per_layer),
            "rollback": self.rollback,
            "src_reapplied": self.src_reapplied,
            "correction_norms": list(self.correction_norms),
        }


@dataclass
class PipelineResult:
    net: ToyNet
    states: list[LayerQuantState]
    trace: list[TraceRecord]
    initial_loss: float
    final_loss: float
    stop_reason: str
    calib_digest: str


def enforce_balance(theta: BoundarySet, s: float, bits_a: int, bits_w: int,
                    eps: float, retrigger: float = 1.5) -> tuple[float, frozenset]:
    """Check |MSE_x - MSE_w| against eps; return (new scale, actions).

    gap <= eps keeps s; eps < gap <= retrigger * eps rebalances; beyond
    that the correction is flagged for re-application as well.
    """
    if eps <= 0:
        raise ConfigError(f"eps must be positive, got {eps}")
    gap = abs(component_mse("act", s, theta, bits_a)
              - component_mse("wt", s, theta, bits_w))
    if gap <= eps:
        return s, frozenset()
    s_new = optimal_scale(theta, bits_a, bits_w)
    if gap <= retrigger * eps:
        return s_new, frozenset({"rescale"})
    return s_new, frozenset({"rescale", "src_reapply"})


def _digest_images(images) -> str:
    h = hashlib.sha256()
    for img in images:
        a = np.ascontiguousarray(np.asarray(img, dtype=np.float64))
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()


def _balance_gap(theta: BoundarySet, s: float, cfg: PipelineConfig) -> float:
    return abs(component_mse("act", s, theta, cfg.bits_a)
               - component_mse("wt", s, theta, cfg.bits_w))


class _LayerWork:
    """Mutable optimization state of one layer.

    w_base holds the layer's original FP weights; the net's live weights
    are always w_base + cum_correction, and the loss is referenced to
    w_base so corrections register as compensation.
    """

    def __init__(self, index, w_base, theta, s, proj, eps):
        self.index = index
        self.w_base = w_base.copy()
        self.theta = theta
        self.s = s
        self.proj: ProjectionMatrix = proj
        self.eps = eps
        self.adam = AdamState()
        self.cum_correction = None  # total base-frame weight drift

    def snapshot(self, net):
        return (net.layers[self.index].w.copy(), self.theta, self.s,
                self.adam.copy(),
                None if self.cum_correction is None else self.cum_correction.copy())

    def restore(self, net, snap):
        net.layers[self.index].w = snap[0].copy()
        self.theta, self.s = snap[1], snap[2]
        self.adam = snap[3].copy()
        self.cum_correction = None if snap[4] is None else snap[4].copy()

    def correction_norm(self) -> float:
        if self.cum_correction is None:
            return 0.0
        return float(np.linalg.norm(self.cum_correction))


def _chain_pass(net: ToyNet, works: list[_LayerWork], cfg: PipelineConfig,
                taps: list[np.ndarray],
                update: set[int] | None = None) -> list[np.ndarray]:
    """One quantized forward over all calibration tiles, layer by layer.

    Returns each layer's chain input (base frame). For layers in
    `update`, streams fresh statistics first: x is the quantized chain's
    activation and delta_x its quantized value minus the original net's
    tap at the same tile, so the closed form compensates accumulated
    upstream drift along with the local quantizer error. The correction
    replaces the layer's weights in place (base + total) before the walk
    continues, which makes re-running at unchanged state a no-op: totals
    settle instead of compounding.
    """
    x = taps[0]
    inputs: list[np.ndarray] = []
    for work in works:
        layer = net.layers[work.index]
        act_cfg, wt_cfg = applied_configs(work.theta, work.s, cfg.bits_a, cfg.bits_w)
        inputs.append(x)
        x_s = x / work.s
        q_s = fake_quantize(x_s, act_cfg)
        if update is not None and work.index in update:
            # base-frame solve: the correction step precedes scaling, so
            # the ridge penalty cannot drift with the balancing scale
            d_b = q_s * work.s - taps[work.index]
            stats = CalibStats(x.shape[1], momentum=cfg.stats_momentum,
                               warmup=cfg.stats_warmup)
            for _ in range(cfg.stats_repeats):
                for start in range(0, x.shape[0], STATS_CHUNK):
                    chunk = slice(start, start + STATS_CHUNK)
                    stats = update_stats(stats, x[chunk], d_b[chunk])
            work.cum_correction = compute_src_correction(
                work.w_base, finalize(stats), work.proj, cfg.src)
            layer.w = work.w_base + work.cum_correction
        w_q = fake_quantize(layer.w * work.s, wt_cfg)
        y = q_s @ w_q.T + layer.b
        if work.index < net.n_layers - 1:
            y = _activate(y, net.cfg.activation)
        x = y
    return inputs


def _batch_loss(net: ToyNet, works: list[_LayerWork], cfg: PipelineConfig,
                inputs: list[np.ndarray], refs: list[np.ndarray],
                batch_idx: np.ndarray) -> float:
    """Summed exact per-layer deviation from the original model's outputs.

    Each term is the mean squared row deviation of the layer's quantized
    product from the original pre-activation output on the fixed batch;
    biases cancel. The product is invariant to the balancing scale, so
    the loss only moves through boundaries, corrections and the chain.
    """
    total = 0.0
    for work in works:
        act_cfg, wt_cfg = applied_configs(work.theta, work.s, cfg.bits_a, cfg.bits_w)
        q_x = fake_quantize(inputs[work.index][batch_idx] / work.s, act_cfg)
        q_w = fake_quantize(net.layers[work.index].w * work.s, wt_cfg)
        err = q_x @ q_w.T - refs[work.index]
        total += float(np.mean(np.sum(err * err, axis=1)))
    return total


def _shared_scale(works: list[_LayerWork], cfg: PipelineConfig) -> float:
    pooled = BoundarySet(
        min(w.theta.alpha_x for w in works),
        max(w.theta.beta_x for w in works),
        min(w.theta.alpha_w for w in works),
        max(w.theta.beta_w for w in works),
    )
    s = optimal_scale(pooled, cfg.bits_a, cfg.bits_w)
    lo = max(scale_validity_interval(w.theta)[0] for w in works)
    hi = min(scale_validity_interval(w.theta)[1] for w in works)
    return min(max(s, lo), hi)


def run_harmoq(net: ToyNet, calib_images, cfg: PipelineConfig = PipelineConfig()) -> PipelineResult:
    """Optimize quantization parameters of every layer of `net`.

    The net is copied; calibration images are low-resolution inputs.
    Components absent from cfg.components are skipped; with all three
    disabled the result is exactly the min-max initialization.
    """
    net = net.copy()
    calib_images = list(calib_images)
    if not calib_images:
        raise DimensionError("need at least one calibration image")
    digest = _digest_images(calib_images)

    taps = collect_taps(net, calib_images)
    n_samples = taps[0].shape[0]
    if "SRC" in cfg.components and n_samples * cfg.stats_repeats < cfg.stats_warmup:
        raise ConfigError(
            f"{n_samples} tiles x {cfg.stats_repeats} repeats cannot reach "
            f"the statistics warmup of {cfg.stats_warmup} samples")
    rng = np.random.default_rng(cfg.seed)
    batch_idx = rng.choice(n_samples, size=min(cfg.batch_size, n_samples), replace=False)
    batch_idx.sort()

    use_src = "SRC" in cfg.components
    use_hso = "HSO" in cfg.components
    use_abr = "ABR" in cfg.components

    works: list[_LayerWork] = []
    for i, layer in enumerate(net.layers):
        ax, bx = calibrate_bounds(taps[i], method=cfg.calib_method,
                                  p=cfg.percentile_p, symmetric=cfg.symmetric)
        aw, bw = calibrate_bounds(layer.w, method=cfg.calib_method,
                                  p=cfg.percentile_p, symmetric=cfg.symmetric)
        theta = BoundarySet(ax, bx, aw, bw)
        proj = make_projection(
            cfg.projection_kind, layer.in_dim, cfg.projection_k,
            spatial=layer.spatial, seed=cfg.projection_seed,
            calib_features=taps[i],
        ) if use_src else None
        eps = cfg.epsilon_frac * 0.5 * (
            component_mse("act", 1.0, theta, cfg.bits_a)
            + component_mse("wt", 1.0, theta, cfg.bits_w))
        works.append(_LayerWork(i, layer.w, theta, 1.0, proj, eps))

    refs = [taps[i][batch_idx] @ net.layers[i].w.T for i in range(net.n_layers)]
    all_layers = {w.index for w in works}

    inputs = _chain_pass(net, works, cfg, taps)
    initial_loss = _batch_loss(net, works, cfg, inputs, refs, batch_idx)
    accepted_loss = initial_loss
    prev_loss = initial_loss
    snapshot = [w.snapshot(net) for w in works]

    trace: list[TraceRecord] = []
    lr_scale = 1.0
    abr_clock = 0
    consecutive_rollbacks = 0
    patience = 0
    stop_reason = "outer_cap"
    max_outer = max(1, math.ceil(cfg.max_iters / cfg.rebalance_period))

    for outer in range(1, max_outer + 1):
        src_reapplied = False

        inputs = _chain_pass(net, works, cfg, taps,
                             update=all_layers if use_src else None)

        if use_hso:
            if cfg.shared_scale:
                s = _shared_scale(works, cfg)
                for w in works:
                    w.s = s
            else:
                for w in works:
                    w.s = optimal_scale(w.theta, cfg.bits_a, cfg.bits_w)

        if use_abr:
            ref_cfg = cfg.refiner if lr_scale == 1.0 else replace(
                cfg.refiner,
                lr_init=cfg.refiner.lr_init * lr_scale,
                lr_final=cfg.refiner.lr_final * lr_scale,
            )
            for _ in range(cfg.rebalance_period):
                for w in works:
                    g_app = boundary_gradients(net.layers[w.index].w,
                                               inputs[w.index][batch_idx], w.s,
                                               w.theta, cfg.bits_a, cfg.bits_w,
                                               w_ref=w.w_base)
                    chain = np.array([1.0 / w.s, 1.0 / w.s, w.s, w.s])
                    w.adam, w.theta = refine_step(w.adam, w.theta, g_app * chain,
                                                  ref_cfg, abr_clock)
                abr_clock += 1

        if use_hso:
            reapply: set[int] = set()
            for w in works:
                s_new, actions = enforce_balance(w.theta, w.s, cfg.bits_a, cfg.bits_w,
                                                 w.eps, cfg.src_retrigger_factor)
                if "rescale" in actions:
                    w.s = s_new
                if "src_reapply" in actions and use_src:
                    reapply.add(w.index)
            if cfg.shared_scale:
                s = _shared_scale(works, cfg)
                for w in works:
                    w.s = s
            if reapply:
                _chain_pass(net, works, cfg, taps, update=reapply)
                src_reapplied = True

        inputs = _chain_pass(net, works, cfg, taps)
        loss = _batch_loss(net, works, cfg, inputs, refs, batch_idx)
        gap = max(_balance_gap(w.theta, w.s, cfg) for w in works)
        # convergence looks at successive evaluations: rolled-back retries
        # shrink toward a fixed candidate as the rate halves, so their
        # deltas flatten below tau even when the accepted loss is lower
        delta_l = abs(loss - prev_loss)
        prev_loss = loss
        record = TraceRecord(outer, loss, gap, [w.s for w in works],
                             loss > accepted_loss, src_reapplied,
                             [w.correction_norm() for w in works])
        trace.append(record)

        if loss > accepted_loss:
            for w, snap in zip(works, snapshot):
                w.restore(net, snap)
            lr_scale *= cfg.rollback_lr_factor
            consecutive_rollbacks += 1
            if delta_l < cfg.tau:
                stop_reason = "converged"
                break
            if consecutive_rollbacks >= cfg.max_rollbacks:
                stop_reason = "rollback_stall"
                break
        else:
            accepted_loss = loss
            snapshot = [w.snapshot(net) for w in works]
            consecutive_rollbacks = 0
            if delta_l < cfg.tau:
                stop_reason = "converged"
                break
            if delta_l < cfg.early_stop_delta:
                patience += 1
                if patience >= cfg.early_stop_patience:
                    stop_reason = "early_stop"
                    break
            else:
                patience = 0

        if use_abr and abr_clock >= cfg.max_iters:
            stop_reason = "step_cap"
            break

    states = [LayerQuantState(w.theta, w.s, cfg.bits_a, cfg.bits_w) for w in works]
    return PipelineResult(net, states, trace, initial_loss, accepted_loss,
                          stop_reason, digest)


SUBSET_LABELS = ("none", "SRC", "HSO", "ABR", "SRC+HSO", "SRC+ABR", "HSO+ABR",
                 "SRC+HSO+ABR")


def ablation_run(net: ToyNet, calib_images, cfg: PipelineConfig):
    """Run all 8 component subsets under identical inputs.

    Returns a list of per-subset dicts; the shared calibration digest is
    asserted identical across runs.
    """
    rows = []
    digests = set()
    for label in SUBSET_LABELS:
        comps = frozenset() if label == "none" else frozenset(label.split("+"))
        sub_cfg = replace(cfg, components=comps)
        result = run_harmoq(net, calib_images, sub_cfg)
        digests.add(result.calib_digest)
        rows.append({
            "subset": label,
            "final_loss": result.final_loss,
            "initial_loss": result.initial_loss,
            "iters": len(result.trace),
            "stop_reason": result.stop_reason,
            "calib_digest": result.calib_digest,
            "result": result,
        })
    if len(digests) != 1:
        raise ConfigError("calibration inputs differed across ablation runs")
    return rows
