"""Harmonized post-training quantization for small dense networks.

Three coordinated steps: a closed-form structural weight correction in
a high-frequency projection space, a closed-form scale that balances
activation and weight rounding error, and gradient refinement of the
clipping boundaries. A toy super-resolution stack plus a synthetic
corpus make the whole loop runnable on a desk.

Submodules are imported lazily so that `import harmoq` stays cheap and
the CLI can pin BLAS thread pools before numpy loads.
"""

import importlib

__version__ = "0.1.0"

_EXPORTS = {
    # errors
    "HarmoqError": ".errors",
    "ConfigError": ".errors",
    "DataError": ".errors",
    "DimensionError": ".errors",
    "IOFormatError": ".errors",
    "NumericError": ".errors",
    "SingularityError": ".errors",
    "StateError": ".errors",
    # linear algebra and storage
    "cholesky_solve": ".linalg",
    "load_hqt": ".linalg",
    "save_hqt": ".linalg",
    "seeded_gaussian": ".linalg",
    # quantizer
    "MIN_GAP": ".quantizer",
    "QuantizerConfig": ".quantizer",
    "calibrate_bounds": ".quantizer",
    "fake_quantize": ".quantizer",
    "minmax_bounds": ".quantizer",
    "percentile_bounds": ".quantizer",
    "quant_error": ".quantizer",
    "theoretical_mse": ".quantizer",
    # streaming statistics
    "CalibStats": ".stats",
    "finalize": ".stats",
    "update_stats": ".stats",
    # projections
    "ProjectionMatrix": ".projections",
    "default_k": ".projections",
    "make_projection": ".projections",
    # structural correction
    "SrcConfig": ".src_calib",
    "compute_src_correction": ".src_calib",
    "src_objective": ".src_calib",
    # scale harmonization
    "BoundarySet": ".scaling",
    "applied_configs": ".scaling",
    "apply_scale": ".scaling",
    "component_mse": ".scaling",
    "optimal_scale": ".scaling",
    "scale_validity_interval": ".scaling",
    # boundary refinement
    "AdamState": ".refiner",
    "RefinerConfig": ".refiner",
    "boundary_gradients": ".refiner",
    "learning_rate": ".refiner",
    "refine_step": ".refiner",
    "total_loss": ".refiner",
    # metrics, corpus, toy network
    "psnr": ".metrics",
    "ssim": ".metrics",
    "CorpusConfig": ".corpus",
    "generate_corpus": ".corpus",
    "load_pgm": ".corpus",
    "save_pgm": ".corpus",
    "LayerQuantState": ".toynet",
    "ToyNet": ".toynet",
    "ToyNetConfig": ".toynet",
    "build_toynet": ".toynet",
    "collect_taps": ".toynet",
    "forward": ".toynet",
    # pipeline and studies
    "COMPONENTS": ".pipeline",
    "PipelineConfig": ".pipeline",
    "PipelineResult": ".pipeline",
    "SUBSET_LABELS": ".pipeline",
    "TraceRecord": ".pipeline",
    "ablation_run": ".pipeline",
    "enforce_balance": ".pipeline",
    "run_harmoq": ".pipeline",
    "baseline_states": ".evaluation",
    "bit_sweep": ".evaluation",
    "evaluate_corpus": ".evaluation",
    "layer_sensitivity": ".evaluation",
    "sensitivity_report": ".evaluation",
    # configuration
    "DEFAULTS": ".config",
    "load_config": ".config",
    "net_config": ".config",
    "pipeline_config": ".config",
    "corpus_config": ".config",
    "serialize_config": ".config",
}

__all__ = sorted(_EXPORTS) + ["__version__"]


def __getattr__(name: str):
    try:
        module = _EXPORTS[name]
    except KeyError:
        raise AttributeError(f"module {__name__!r} has no attribute {name!r}") from None
    return getattr(importlib.import_module(module, __name__), name)


def __dir__():
    return __all__
