"""Corpus evaluation and per-layer quantization sensitivity.

Fidelity is measured against the full-precision forward pass of the
same network: PSNR and SSIM between the quantized and unquantized
outputs on held-out images. Sensitivity probes quantize one side of
one layer at a time (raw min-max bounds, unit scale) and report each
layer's share of the induced output error.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, DimensionError
from .metrics import psnr, ssim
from .scaling import BoundarySet
from .quantizer import calibrate_bounds
from .toynet import LayerQuantState, ToyNet, collect_taps, forward

SIDES = ("wt", "act")


def baseline_states(net: ToyNet, calib_images, bits_a: int | None,
                    bits_w: int | None, method: str = "minmax",
                    p: float = 99.0, symmetric: bool = False) -> list[LayerQuantState]:
    """Single-shot calibration: bounds from the data, unit scale.

    A side with bits=None stays full precision. This is the reference
    point every optimized configuration is compared against.
    """
    taps = collect_taps(net, calib_images)
    states = []
    for i, layer in enumerate(net.layers):
        ax, bx = calibrate_bounds(taps[i], method=method, p=p, symmetric=symmetric)
        aw, bw = calibrate_bounds(layer.w, method=method, p=p, symmetric=symmetric)
        states.append(LayerQuantState(BoundarySet(ax, bx, aw, bw), 1.0, bits_a, bits_w))
    return states


def evaluate_corpus(net: ToyNet, states: list[LayerQuantState] | None,
                    lr_images, ref_net: ToyNet | None = None) -> dict:
    """PSNR/SSIM of the quantized output against the FP output, per image.

    ref_net supplies the full-precision reference when net carries
    calibration-corrected weights; by default net is its own reference.
    """
    lr_images = list(lr_images)
    if not lr_images:
        raise DimensionError("need at least one evaluation image")
    reference = net if ref_net is None else ref_net
    psnrs, ssims = [], []
    for lr in lr_images:
        ref = forward(reference, lr, None)
        out = forward(net, lr, states)
        psnrs.append(psnr(out, ref))
        ssims.append(ssim(out, ref))
    return {
        "psnr": psnrs,
        "ssim": ssims,
        "psnr_mean": float(np.mean(psnrs)),
        "ssim_mean": float(np.mean(ssims)),
    }


def _single_layer_states(base: list[LayerQuantState], index: int, side: str,
                         bits: int) -> list[LayerQuantState]:
    states = []
    for i, st in enumerate(base):
        if i != index:
            states.append(LayerQuantState(st.theta, 1.0, None, None))
        elif side == "act":
            states.append(LayerQuantState(st.theta, 1.0, bits, None))
        else:
            states.append(LayerQuantState(st.theta, 1.0, None, bits))
    return states


def layer_sensitivity(net: ToyNet, calib_images, eval_images, side: str,
                      bits: int = 4) -> list[dict]:
    """Output-MSE contribution of quantizing one layer's side at a time.

    Returns one row per layer with the mean squared output deviation
    from the FP forward pass and its share of the per-layer total.
    """
    if side not in SIDES:
        raise ConfigError(f"side must be one of {SIDES}, got {side!r}")
    eval_images = list(eval_images)
    if not eval_images:
        raise DimensionError("need at least one evaluation image")
    base = baseline_states(net, calib_images, None, None)
    refs = [forward(net, lr, None) for lr in eval_images]
    mses = []
    for i in range(net.n_layers):
        states = _single_layer_states(base, i, side, bits)
        errs = [
            float(np.mean((forward(net, lr, states) - ref) ** 2))
            for lr, ref in zip(eval_images, refs)
        ]
        mses.append(float(np.mean(errs)))
    total = sum(mses)
    rows = []
    for i, mse in enumerate(mses):
        rows.append({
            "layer": i,
            "side": side,
            "bits": bits,
            "output_mse": mse,
            "proportion": mse / total if total > 0 else 0.0,
        })
    return rows


def bit_sweep(net: ToyNet, calib_images, eval_images, side: str,
              bits_list) -> list[dict]:
    """Corpus PSNR/SSIM with every layer's given side quantized at each width."""
    if side not in SIDES:
        raise ConfigError(f"side must be one of {SIDES}, got {side!r}")
    rows = []
    for bits in bits_list:
        if bits is None:
            states = None
        elif side == "act":
            states = baseline_states(net, calib_images, bits, None)
        else:
            states = baseline_states(net, calib_images, None, bits)
        summary = evaluate_corpus(net, states, eval_images)
        rows.append({
            "side": side,
            "bits": bits,
            "psnr": summary["psnr_mean"],
            "ssim": summary["ssim_mean"],
        })
    return rows


def sensitivity_report(net: ToyNet, calib_images, eval_images,
                       bits: int = 4, sweep_bits=(2, 3, 4, 6, 8)) -> dict:
    """Per-layer contributions plus bit-width sweeps for both sides."""
    return {
        "per_layer": {
            side: layer_sensitivity(net, calib_images, eval_images, side, bits)
            for side in SIDES
        },
        "sweep": [
            row
            for side in SIDES
            for row in bit_sweep(net, calib_images, eval_images, side, sweep_bits)
        ],
    }
