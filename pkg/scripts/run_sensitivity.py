#!/usr/bin/env python3
"""Weight-vs-activation sensitivity study on the toy net.

Quantizes one side of one layer at a time to measure each layer's share
of the induced output error, then sweeps bit widths with a whole side
quantized to chart how fidelity degrades.

    python scripts/run_sensitivity.py
    python scripts/run_sensitivity.py --set sens.bits=2
"""

import argparse
import json

from harmoq.config import corpus_config, load_config, net_config, sweep_bits
from harmoq.corpus import generate_corpus
from harmoq.evaluation import sensitivity_report
from harmoq.toynet import build_toynet


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=None, help="key=value config file")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    help="override a single config key")
    ap.add_argument("--out", default=None, help="write the report as JSON here")
    args = ap.parse_args()

    cfg = load_config(args.config, args.set)
    calib_pairs, eval_pairs = generate_corpus(corpus_config(cfg), cfg["corpus.seed"])
    calib = [lr for lr, _ in calib_pairs]
    evl = [lr for lr, _ in eval_pairs]
    net = build_toynet(net_config(cfg))

    report = sensitivity_report(net, calib, evl, bits=cfg["sens.bits"],
                                sweep_bits=sweep_bits(cfg))

    print(f"per-layer output MSE share at {cfg['sens.bits']} bits")
    for side in ("wt", "act"):
        shares = " ".join(f"{row['proportion']:.3f}"
                          for row in report["per_layer"][side])
        print(f"  {side:>3s}: {shares}")

    print("bit sweep (one side quantized, the other full precision)")
    for row in report["sweep"]:
        bits = "fp" if row["bits"] is None else f"{row['bits']}b"
        print(f"  {row['side']:>3s} {bits:>3s}: {row['psnr']:6.2f} dB, "
              f"ssim {row['ssim']:.4f}")

    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2)
        print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
