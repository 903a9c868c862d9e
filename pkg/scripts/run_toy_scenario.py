#!/usr/bin/env python3
"""Run the bundled toy scenario end to end, in memory.

Generates the synthetic corpus, builds the toy net, calibrates the two
single-shot baselines, runs the harmonized pipeline, and prints a small
comparison table plus the loss trajectory. No files are written; use
the CLI for reproducible on-disk runs.

    python scripts/run_toy_scenario.py
    python scripts/run_toy_scenario.py --config configs/toy-3bit.cfg
"""

import argparse

from harmoq.config import corpus_config, load_config, net_config, pipeline_config
from harmoq.corpus import generate_corpus
from harmoq.evaluation import baseline_states, evaluate_corpus
from harmoq.pipeline import run_harmoq
from harmoq.toynet import build_toynet


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=None, help="key=value config file")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    help="override a single config key")
    args = ap.parse_args()

    cfg = load_config(args.config, args.set)
    calib_pairs, eval_pairs = generate_corpus(corpus_config(cfg), cfg["corpus.seed"])
    calib = [lr for lr, _ in calib_pairs]
    evl = [lr for lr, _ in eval_pairs]
    net = build_toynet(net_config(cfg))
    bits_a, bits_w = cfg["quant.bits_a"], cfg["quant.bits_w"]

    print(f"toy scenario at W{bits_w}A{bits_a}, "
          f"{len(calib)} calibration / {len(evl)} evaluation images")

    for method in ("minmax", "percentile"):
        states = baseline_states(net, calib, bits_a, bits_w, method=method,
                                 p=cfg["quant.percentile_p"])
        summary = evaluate_corpus(net, states, evl)
        print(f"{method:>12s}: {summary['psnr_mean']:6.2f} dB psnr, "
              f"{summary['ssim_mean']:.4f} ssim")

    result = run_harmoq(net, calib, pipeline_config(cfg))
    summary = evaluate_corpus(result.net, result.states, evl, ref_net=net)
    print(f"{'harmonized':>12s}: {summary['psnr_mean']:6.2f} dB psnr, "
          f"{summary['ssim_mean']:.4f} ssim")
    print(f"loss {result.initial_loss:.6f} -> {result.final_loss:.6f} "
          f"in {len(result.trace)} outer iterations ({result.stop_reason})")
    print("per-layer scales:", [round(s, 4) for s in
                                result.trace[-1].s_per_layer])


if __name__ == "__main__":
    main()
