#!/usr/bin/env python3
"""Component ablation over all 8 subsets of {SRC, HSO, ABR}.

Every subset runs on identical calibration inputs (checked by digest)
and identical seeds, so rows differ only in which steps are enabled.
Prints the grid and optionally dumps it as JSON for plotting.

    python scripts/run_ablation.py
    python scripts/run_ablation.py --out ablation.json
"""

import argparse
import json

from harmoq.config import corpus_config, load_config, net_config, pipeline_config
from harmoq.corpus import generate_corpus
from harmoq.evaluation import evaluate_corpus
from harmoq.pipeline import ablation_run
from harmoq.toynet import build_toynet


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=None, help="key=value config file")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    help="override a single config key")
    ap.add_argument("--out", default=None, help="write rows as JSON here")
    args = ap.parse_args()

    cfg = load_config(args.config, args.set)
    calib_pairs, eval_pairs = generate_corpus(corpus_config(cfg), cfg["corpus.seed"])
    calib = [lr for lr, _ in calib_pairs]
    evl = [lr for lr, _ in eval_pairs]
    net = build_toynet(net_config(cfg))

    rows = []
    print(f"{'subset':>12s} {'final loss':>12s} {'psnr':>7s} {'ssim':>7s} "
          f"{'iters':>5s}  stop")
    for entry in ablation_run(net, calib, pipeline_config(cfg)):
        result = entry["result"]
        summary = evaluate_corpus(result.net, result.states, evl, ref_net=net)
        row = {
            "subset": entry["subset"],
            "final_loss": entry["final_loss"],
            "psnr": summary["psnr_mean"],
            "ssim": summary["ssim_mean"],
            "iterations": entry["iters"],
            "stop_reason": entry["stop_reason"],
        }
        rows.append(row)
        print(f"{row['subset']:>12s} {row['final_loss']:12.6f} "
              f"{row['psnr']:7.2f} {row['ssim']:7.4f} "
              f"{row['iterations']:5d}  {row['stop_reason']}")

    best = min(rows, key=lambda r: r["final_loss"])
    print(f"lowest final loss: {best['subset']} ({best['final_loss']:.6f})")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(rows, fh, indent=2)
        print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
