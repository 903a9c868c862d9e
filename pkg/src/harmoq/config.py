"""Flat key=value run configuration.

One dotted key per line, '#' comments, blank lines ignored. Every key
must appear in DEFAULTS; unknown keys are rejected so typos fail loud.
Values are typed by their default. The same serialized form feeds the
run manifest, so a rerun parses exactly the bytes it recorded.
"""

from __future__ import annotations

from .corpus import CorpusConfig
from .errors import ConfigError
from .pipeline import COMPONENTS, PipelineConfig
from .refiner import RefinerConfig
from .src_calib import SrcConfig
from .toynet import ToyNetConfig

DEFAULTS: dict = {
    "corpus.images": 64,
    "corpus.eval_images": 16,
    "corpus.lr_size": 16,
    "corpus.upscale": 2,
    "corpus.edge_density": 3,
    "corpus.texture_waves": 2,
    "corpus.noise_level": 0.01,
    "corpus.seed": 3,
    "net.layer_dims": (16, 32, 32, 16),
    "net.activation": "relu",
    "net.patch_side": 16,
    "net.seed": 7,
    "quant.bits_a": 2,
    "quant.bits_w": 2,
    "quant.calib_method": "minmax",
    "quant.percentile_p": 99.0,
    "quant.symmetric": False,
    "pipeline.components": "SRC+HSO+ABR",
    "pipeline.seed": 42,
    "pipeline.tau": 1e-4,
    "pipeline.max_iters": 3000,
    "pipeline.early_stop_delta": 1e-5,
    "pipeline.early_stop_patience": 50,
    "pipeline.epsilon_frac": 0.01,
    "pipeline.src_retrigger_factor": 1.5,
    "pipeline.rollback_lr_factor": 0.5,
    "pipeline.rebalance_period": 5,
    "pipeline.max_rollbacks": 60,
    "pipeline.batch_size": 128,
    "pipeline.shared_scale": False,
    "stats.momentum": 0.9,
    "stats.warmup": 200,
    "stats.repeats": 1,
    "src.lam": 0.01,
    "src.solver_eps": 1e-6,
    "projection.kind": "laplacian",
    "projection.k": 0,
    "projection.seed": 11,
    "refiner.lr_init": 1e-2,
    "refiner.lr_final": 1e-4,
    "refiner.warmup_steps": 300,
    "refiner.schedule_horizon": 3000,
    "refiner.grad_clip_norm": 1.0,
    "refiner.weight_decay": 0.0,
    "sens.bits": 4,
    "sens.sweep": (2, 3, 4, 6, 8),
}

_TRUE = {"true", "1", "yes", "on"}
_FALSE = {"false", "0", "no", "off"}


def parse_scalar(key: str, raw: str):
    """Type a raw string by the key's default value."""
    default = DEFAULTS[key]
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            if not raw:
                return ()
            return tuple(int(part) for part in raw.split(","))
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {exc}") from None


def serialize_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_config_text(text: str) -> dict:
    """Parse key=value lines into a typed dict (unknown keys rejected)."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected key=value, got {stripped!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in DEFAULTS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = parse_scalar(key, raw)
    return out


def load_config(path: str | None = None, overrides=()) -> dict:
    """DEFAULTS, overlaid with an optional file, then key=value overrides."""
    cfg = dict(DEFAULTS)
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        cfg.update(parse_config_text(text))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must be key=value, got {item!r}")
        key, _, raw = item.partition("=")
        key = key.strip()
        if key not in DEFAULTS:
            raise ConfigError(f"unknown key {key!r}")
        cfg[key] = parse_scalar(key, raw)
    return cfg


def serialize_config(cfg: dict) -> dict:
    """Canonical string form of every key, for the run manifest."""
    return {key: serialize_value(cfg[key]) for key in sorted(DEFAULTS)}


def config_from_strings(raw: dict) -> dict:
    """Inverse of serialize_config."""
    cfg = dict(DEFAULTS)
    for key, value in raw.items():
        if key not in DEFAULTS:
            raise ConfigError(f"unknown key {key!r}")
        cfg[key] = parse_scalar(key, str(value))
    return cfg


def parse_components(raw: str) -> frozenset:
    if raw.strip().lower() in {"none", ""}:
        return frozenset()
    parts = [p.strip().upper() for p in raw.split("+")]
    unknown = set(parts) - set(COMPONENTS)
    if unknown:
        raise ConfigError(f"unknown components {sorted(unknown)}")
    return frozenset(parts)


def serialize_components(components) -> str:
    parts = [c for c in COMPONENTS if c in components]
    return "+".join(parts) if parts else "none"


def corpus_config(cfg: dict) -> CorpusConfig:
    return CorpusConfig(
        images=cfg["corpus.images"],
        eval_images=cfg["corpus.eval_images"],
        lr_size=cfg["corpus.lr_size"],
        upscale=cfg["corpus.upscale"],
        edge_density=cfg["corpus.edge_density"],
        texture_waves=cfg["corpus.texture_waves"],
        noise_level=cfg["corpus.noise_level"],
    )


def net_config(cfg: dict) -> ToyNetConfig:
    side = cfg["net.patch_side"]
    return ToyNetConfig(
        layer_dims=tuple(cfg["net.layer_dims"]),
        activation=cfg["net.activation"],
        upscale=cfg["corpus.upscale"],
        patch=(side, side),
        seed=cfg["net.seed"],
    )


def pipeline_config(cfg: dict) -> PipelineConfig:
    k = cfg["projection.k"]
    return PipelineConfig(
        bits_a=cfg["quant.bits_a"],
        bits_w=cfg["quant.bits_w"],
        seed=cfg["pipeline.seed"],
        components=parse_components(cfg["pipeline.components"]),
        tau=cfg["pipeline.tau"],
        max_iters=cfg["pipeline.max_iters"],
        early_stop_delta=cfg["pipeline.early_stop_delta"],
        early_stop_patience=cfg["pipeline.early_stop_patience"],
        epsilon_frac=cfg["pipeline.epsilon_frac"],
        src_retrigger_factor=cfg["pipeline.src_retrigger_factor"],
        rollback_lr_factor=cfg["pipeline.rollback_lr_factor"],
        rebalance_period=cfg["pipeline.rebalance_period"],
        max_rollbacks=cfg["pipeline.max_rollbacks"],
        batch_size=cfg["pipeline.batch_size"],
        calib_method=cfg["quant.calib_method"],
        percentile_p=cfg["quant.percentile_p"],
        symmetric=cfg["quant.symmetric"],
        shared_scale=cfg["pipeline.shared_scale"],
        stats_momentum=cfg["stats.momentum"],
        stats_warmup=cfg["stats.warmup"],
        stats_repeats=cfg["stats.repeats"],
        projection_kind=cfg["projection.kind"],
        projection_k=None if k == 0 else k,
        projection_seed=cfg["projection.seed"],
        src=SrcConfig(lam=cfg["src.lam"], solver_eps=cfg["src.solver_eps"]),
        refiner=RefinerConfig(
            lr_init=cfg["refiner.lr_init"],
            lr_final=cfg["refiner.lr_final"],
            warmup_steps=cfg["refiner.warmup_steps"],
            schedule_horizon=cfg["refiner.schedule_horizon"],
            grad_clip_norm=cfg["refiner.grad_clip_norm"],
            weight_decay=cfg["refiner.weight_decay"],
        ),
    )


def sweep_bits(cfg: dict) -> list:
    """Bit widths for the sensitivity sweep; 32 or more means full precision."""
    return [None if b >= 32 else b for b in cfg["sens.sweep"]]
