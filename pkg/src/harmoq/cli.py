"""Command line front end.

Subcommands: gen-corpus, calibrate, quantize, eval, ablate, sensitivity,
report. Exit codes: 0 success, 2 usage or configuration error, 3 I/O or
format error, 4 numeric or data error.

Heavy imports happen inside the handlers so --threads can pin the BLAS
thread pools before numpy is loaded.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

from .errors import (
    ConfigError,
    DataError,
    DimensionError,
    IOFormatError,
    NumericError,
    SingularityError,
    StateError,
)

__version__ = "0.1.0"

_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS")


def _sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_json(path, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_json(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise IOFormatError(f"{path}: invalid JSON: {exc}") from None


def _write_rows(path, rows, fmt: str) -> None:
    """Rows of dicts to JSON or CSV; CSV columns are the union of keys."""
    if fmt == "json":
        _write_json(path, rows)
        return
    import csv

    columns: list[str] = []
    for row in rows:
        for key in row:
            if key not in columns:
                columns.append(key)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def _load_run_config(args):
    from .config import load_config

    cfg = load_config(getattr(args, "config", None), getattr(args, "set", None) or [])
    return cfg


def _load_corpus(corpus_dir):
    """Read a gen-corpus directory; returns (calib_lr, eval_lr, manifest)."""
    from .corpus import load_pgm

    manifest_path = os.path.join(corpus_dir, "corpus.json")
    if not os.path.isfile(manifest_path):
        raise IOFormatError(f"{corpus_dir}: no corpus.json (run gen-corpus first)")
    manifest = _read_json(manifest_path)
    counts = manifest.get("counts", {})
    calib, evl = [], []
    for group, n, dest in (("calib", counts.get("calib", 0), calib),
                           ("eval", counts.get("eval", 0), evl)):
        for i in range(n):
            dest.append(load_pgm(os.path.join(corpus_dir, f"{group}_{i:03d}_lr.pgm")))
    if not calib or not evl:
        raise IOFormatError(f"{corpus_dir}: corpus.json lists no images")
    return calib, evl, manifest


def _corpus_digests(corpus_dir, manifest) -> dict:
    return {
        name: _sha256_file(os.path.join(corpus_dir, name))
        for name in sorted(manifest.get("files", {}))
    }


def _build_net(cfg):
    from .config import net_config
    from .toynet import build_toynet

    return build_toynet(net_config(cfg))


def cmd_gen_corpus(args) -> int:
    from .config import corpus_config, serialize_config
    from .corpus import generate_corpus, save_pgm

    cfg = _load_run_config(args)
    if args.seed is not None:
        cfg["corpus.seed"] = args.seed
    calib, evl = generate_corpus(corpus_config(cfg), cfg["corpus.seed"])
    os.makedirs(args.out, exist_ok=True)
    files = {}
    for group, pairs in (("calib", calib), ("eval", evl)):
        for i, (lr, hr) in enumerate(pairs):
            for tag, img in (("lr", lr), ("hr", hr)):
                name = f"{group}_{i:03d}_{tag}.pgm"
                save_pgm(os.path.join(args.out, name), img)
                files[name] = _sha256_file(os.path.join(args.out, name))
    manifest = {
        "kind": "harmoq-corpus",
        "version": __version__,
        "seed": cfg["corpus.seed"],
        "counts": {"calib": len(calib), "eval": len(evl)},
        "config": serialize_config(cfg),
        "files": files,
    }
    _write_json(os.path.join(args.out, "corpus.json"), manifest)
    print(f"wrote {len(files)} images to {args.out} "
          f"({len(calib)} calibration, {len(evl)} evaluation)")
    return 0


def cmd_calibrate(args) -> int:
    from .evaluation import baseline_states

    cfg = _load_run_config(args)
    calib, _, _ = _load_corpus(args.corpus)
    net = _build_net(cfg)
    method = args.method or cfg["quant.calib_method"]
    states = baseline_states(net, calib, cfg["quant.bits_a"], cfg["quant.bits_w"],
                             method=method, p=cfg["quant.percentile_p"],
                             symmetric=cfg["quant.symmetric"])
    payload = {
        "method": method,
        "bits_a": cfg["quant.bits_a"],
        "bits_w": cfg["quant.bits_w"],
        "layers": [
            {
                "layer": i,
                "alpha_x": st.theta.alpha_x,
                "beta_x": st.theta.beta_x,
                "alpha_w": st.theta.alpha_w,
                "beta_w": st.theta.beta_w,
                "s": st.s,
            }
            for i, st in enumerate(states)
        ],
    }
    if args.out:
        _write_json(args.out, payload)
        print(f"wrote bounds for {len(states)} layers to {args.out}")
    else:
        json.dump(payload, sys.stdout, indent=2, sort_keys=True)
        print()
    return 0


def _write_run(outdir, cfg, result, corpus_dir, corpus_manifest, eval_summary) -> None:
    from .config import serialize_config
    from .linalg import save_hqt

    os.makedirs(outdir, exist_ok=True)
    layer_files = []
    for i, layer in enumerate(result.net.layers):
        name = f"layer{i}.hqt"
        save_hqt(os.path.join(outdir, name), layer.w)
        layer_files.append(name)
    states_payload = {
        "bits_a": cfg["quant.bits_a"],
        "bits_w": cfg["quant.bits_w"],
        "layers": [
            {
                "layer": i,
                "weights": layer_files[i],
                "alpha_x": st.theta.alpha_x,
                "beta_x": st.theta.beta_x,
                "alpha_w": st.theta.alpha_w,
                "beta_w": st.theta.beta_w,
                "s": st.s,
            }
            for i, st in enumerate(result.states)
        ],
    }
    _write_json(os.path.join(outdir, "states.json"), states_payload)
    with open(os.path.join(outdir, "trace.jsonl"), "w", encoding="utf-8") as fh:
        for rec in result.trace:
            fh.write(json.dumps(rec.to_dict(), sort_keys=True))
            fh.write("\n")
    summary = {
        "initial_loss": result.initial_loss,
        "final_loss": result.final_loss,
        "iterations": len(result.trace),
        "stop_reason": result.stop_reason,
        "s_per_layer": [st.s for st in result.states],
        "psnr_mean": eval_summary["psnr_mean"],
        "ssim_mean": eval_summary["ssim_mean"],
    }
    _write_json(os.path.join(outdir, "summary.json"), summary)
    run_manifest = {
        "kind": "harmoq-run",
        "version": __version__,
        "subcommand": "quantize",
        "config": serialize_config(cfg),
        "corpus": {
            "path": os.path.abspath(corpus_dir),
            "files": _corpus_digests(corpus_dir, corpus_manifest),
        },
        "outputs": sorted(layer_files + ["states.json", "trace.jsonl"]),
    }
    _write_json(os.path.join(outdir, "run-manifest.json"), run_manifest)


def cmd_quantize(args) -> int:
    from .config import config_from_strings, pipeline_config
    from .evaluation import evaluate_corpus
    from .pipeline import run_harmoq

    if args.from_manifest:
        manifest = _read_json(args.from_manifest)
        if manifest.get("kind") != "harmoq-run":
            raise IOFormatError(f"{args.from_manifest}: not a run manifest")
        cfg = config_from_strings(manifest["config"])
        corpus_dir = args.corpus or manifest["corpus"]["path"]
        calib, evl, corpus_manifest = _load_corpus(corpus_dir)
        recorded = manifest["corpus"]["files"]
        actual = _corpus_digests(corpus_dir, corpus_manifest)
        if recorded != actual:
            raise IOFormatError(
                "corpus files do not match the digests in the manifest")
    else:
        if not args.corpus:
            raise ConfigError("quantize needs --corpus (or --from-manifest)")
        cfg = _load_run_config(args)
        if args.seed is not None:
            cfg["pipeline.seed"] = args.seed
        corpus_dir = args.corpus
        calib, evl, corpus_manifest = _load_corpus(corpus_dir)

    net = _build_net(cfg)
    result = run_harmoq(net, calib, pipeline_config(cfg))
    eval_summary = evaluate_corpus(result.net, result.states, evl, ref_net=net)
    _write_run(args.out, cfg, result, corpus_dir, corpus_manifest, eval_summary)
    print(f"{result.stop_reason} after {len(result.trace)} iterations: "
          f"loss {result.initial_loss:.6g} -> {result.final_loss:.6g}, "
          f"psnr {eval_summary['psnr_mean']:.2f} dB")
    return 0


def _states_from_run(net, run_dir):
    from .linalg import load_hqt
    from .scaling import BoundarySet
    from .toynet import LayerQuantState

    payload = _read_json(os.path.join(run_dir, "states.json"))
    layers = payload["layers"]
    if len(layers) != net.n_layers:
        raise IOFormatError(
            f"{run_dir}: states.json has {len(layers)} layers, net has {net.n_layers}")
    states = []
    for entry in layers:
        w = load_hqt(os.path.join(run_dir, entry["weights"]))
        net.layers[entry["layer"]].w = w
        theta = BoundarySet(entry["alpha_x"], entry["beta_x"],
                            entry["alpha_w"], entry["beta_w"])
        states.append(LayerQuantState(theta, entry["s"],
                                      payload["bits_a"], payload["bits_w"]))
    return states


def cmd_eval(args) -> int:
    from .evaluation import baseline_states, evaluate_corpus

    cfg = _load_run_config(args)
    calib, evl, _ = _load_corpus(args.corpus)
    net = _build_net(cfg)
    quant_net = net
    if args.run:
        quant_net = net.copy()
        states = _states_from_run(quant_net, args.run)
        label = f"run:{args.run}"
    elif args.baseline:
        states = baseline_states(net, calib, cfg["quant.bits_a"], cfg["quant.bits_w"],
                                 method=args.baseline, p=cfg["quant.percentile_p"],
                                 symmetric=cfg["quant.symmetric"])
        label = f"baseline:{args.baseline}"
    else:
        raise ConfigError("eval needs --run DIR or --baseline METHOD")
    summary = evaluate_corpus(quant_net, states, evl, ref_net=net)
    rows = [
        {"image": i, "psnr": p, "ssim": s}
        for i, (p, s) in enumerate(zip(summary["psnr"], summary["ssim"]))
    ]
    rows.append({"image": "mean", "psnr": summary["psnr_mean"],
                 "ssim": summary["ssim_mean"]})
    if args.out:
        _write_rows(args.out, rows, args.format)
        print(f"wrote {args.out}")
    print(f"{label}: psnr {summary['psnr_mean']:.2f} dB, "
          f"ssim {summary['ssim_mean']:.4f}")
    return 0


def cmd_ablate(args) -> int:
    from .config import pipeline_config
    from .evaluation import evaluate_corpus
    from .pipeline import ablation_run

    cfg = _load_run_config(args)
    if args.seed is not None:
        cfg["pipeline.seed"] = args.seed
    calib, evl, _ = _load_corpus(args.corpus)
    net = _build_net(cfg)
    rows = []
    for entry in ablation_run(net, calib, pipeline_config(cfg)):
        result = entry["result"]
        summary = evaluate_corpus(result.net, result.states, evl, ref_net=net)
        rows.append({
            "subset": entry["subset"],
            "final_loss": entry["final_loss"],
            "initial_loss": entry["initial_loss"],
            "iterations": entry["iters"],
            "stop_reason": entry["stop_reason"],
            "psnr": summary["psnr_mean"],
            "ssim": summary["ssim_mean"],
        })
    out = args.out or ("ablation.json" if args.format == "json" else "ablation.csv")
    _write_rows(out, rows, args.format)
    best = min(rows, key=lambda r: r["final_loss"])
    for row in rows:
        marker = " <- lowest loss" if row is best else ""
        print(f"{row['subset']:>12s}: loss {row['final_loss']:.6g}, "
              f"psnr {row['psnr']:.2f} dB{marker}")
    print(f"wrote {out}")
    return 0


def cmd_sensitivity(args) -> int:
    from .config import sweep_bits
    from .evaluation import sensitivity_report

    cfg = _load_run_config(args)
    calib, evl, _ = _load_corpus(args.corpus)
    net = _build_net(cfg)
    report = sensitivity_report(net, calib, evl, bits=cfg["sens.bits"],
                                sweep_bits=sweep_bits(cfg))
    if args.format == "csv":
        rows = []
        for side in ("wt", "act"):
            for row in report["per_layer"][side]:
                rows.append({"kind": "per_layer", **row})
        for row in report["sweep"]:
            rows.append({"kind": "sweep", **row})
        out = args.out or "sensitivity.csv"
        _write_rows(out, rows, "csv")
    else:
        out = args.out or "sensitivity.json"
        _write_json(out, report)
    print(f"wrote {out}")
    return 0


def _md_table(rows, columns) -> list[str]:
    def fmt(v):
        if isinstance(v, float):
            return f"{v:.6g}"
        return str(v)

    lines = ["| " + " | ".join(columns) + " |",
             "| " + " | ".join("---" for _ in columns) + " |"]
    for row in rows:
        lines.append("| " + " | ".join(fmt(row.get(c, "")) for c in columns) + " |")
    return lines


def cmd_report(args) -> int:
    indir = args.indir
    sections = []
    summary_path = os.path.join(indir, "summary.json")
    if os.path.isfile(summary_path):
        s = _read_json(summary_path)
        sections.append("## Run summary\n")
        sections.extend([
            f"- loss: {s['initial_loss']:.6g} -> {s['final_loss']:.6g} "
            f"({s['stop_reason']}, {s['iterations']} iterations)",
            f"- psnr vs FP output: {s['psnr_mean']:.2f} dB, "
            f"ssim {s['ssim_mean']:.4f}",
            f"- scales: {', '.join(f'{v:.4g}' for v in s['s_per_layer'])}",
            "",
        ])
    ablation_path = os.path.join(indir, "ablation.json")
    if os.path.isfile(ablation_path):
        rows = _read_json(ablation_path)
        sections.append("## Component ablation\n")
        sections.extend(_md_table(
            rows, ["subset", "final_loss", "psnr", "ssim", "iterations",
                   "stop_reason"]))
        sections.append("")
    sens_path = os.path.join(indir, "sensitivity.json")
    if os.path.isfile(sens_path):
        rep = _read_json(sens_path)
        sections.append("## Per-layer sensitivity\n")
        for side in ("wt", "act"):
            sections.append(f"### {'Weights' if side == 'wt' else 'Activations'}\n")
            sections.extend(_md_table(
                rep["per_layer"][side],
                ["layer", "bits", "output_mse", "proportion"]))
            sections.append("")
        sections.append("### Bit-width sweep\n")
        sections.extend(_md_table(rep["sweep"], ["side", "bits", "psnr", "ssim"]))
        sections.append("")
    if not sections:
        raise IOFormatError(
            f"{indir}: nothing to report (no summary.json, ablation.json "
            f"or sensitivity.json)")
    out = args.out or os.path.join(indir, "report.md")
    with open(out, "w", encoding="utf-8") as fh:
        fh.write("# Quantization report\n\n")
        fh.write("\n".join(sections))
        fh.write("\n")
    print(f"wrote {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="harmoq",
        description="Harmonized post-training quantization on a toy "
                    "super-resolution stack.",
        epilog="exit codes: 0 ok, 2 usage/config, 3 I/O, 4 numeric/data",
    )
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    parser.add_argument("--threads", type=int, metavar="N",
                        help="pin BLAS/OpenMP thread pools to N")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="FILE",
                        help="key=value configuration file")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override one configuration key (repeatable)")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-corpus", parents=[common],
                       help="generate the synthetic image corpus")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_gen_corpus)

    p = sub.add_parser("calibrate", parents=[common],
                       help="single-shot bound calibration, no optimization")
    p.add_argument("--corpus", required=True, metavar="DIR")
    p.add_argument("--method", choices=["minmax", "percentile"])
    p.add_argument("--out", metavar="FILE")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("quantize", parents=[common],
                       help="run the harmonized optimization pipeline")
    p.add_argument("--corpus", metavar="DIR")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--seed", type=int)
    p.add_argument("--from-manifest", metavar="FILE",
                   help="replay a recorded run bit-exactly")
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("eval", parents=[common],
                       help="PSNR/SSIM of a run or baseline against FP output")
    p.add_argument("--corpus", required=True, metavar="DIR")
    p.add_argument("--run", metavar="DIR", help="quantize output directory")
    p.add_argument("--baseline", choices=["minmax", "percentile"])
    p.add_argument("--out", metavar="FILE")
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", parents=[common],
                       help="rerun the pipeline over all component subsets")
    p.add_argument("--corpus", required=True, metavar="DIR")
    p.add_argument("--out", metavar="FILE")
    p.add_argument("--seed", type=int)
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("sensitivity", parents=[common],
                       help="per-layer and per-bit-width sensitivity study")
    p.add_argument("--corpus", required=True, metavar="DIR")
    p.add_argument("--out", metavar="FILE")
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.set_defaults(func=cmd_sensitivity)

    p = sub.add_parser("report", help="merge run outputs into a markdown report")
    p.add_argument("--in", dest="indir", required=True, metavar="DIR")
    p.add_argument("--out", metavar="FILE")
    p.set_defaults(func=cmd_report)

    return parser


def execute(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code
        return code if isinstance(code, int) else 0
    if args.threads is not None:
        if args.threads < 1:
            print("error: --threads must be >= 1", file=sys.stderr)
            return 2
        for var in _THREAD_VARS:
            os.environ[var] = str(args.threads)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (IOFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (DataError, DimensionError, NumericError, SingularityError,
            StateError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


def main() -> None:
    sys.exit(execute())


if __name__ == "__main__":
    main()
