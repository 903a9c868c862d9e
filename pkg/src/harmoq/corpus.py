"""Synthetic grayscale corpus for the toy super-resolution task.

Each high-resolution image mixes flat regions, hard step edges and
sinusoidal gratings, then the low-resolution input is produced by box
downsampling. Everything is driven by one seed so a corpus regenerates
bit-identically. Images travel as PGM (P5, maxval 255) on disk.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, IOFormatError
from .metrics import as_image


@dataclass(frozen=True)
class CorpusConfig:
    images: int = 64
    eval_images: int = 16
    lr_size: int = 16
    upscale: int = 2
    edge_density: int = 3
    texture_waves: int = 2
    noise_level: float = 0.01

    def __post_init__(self):
        if self.images < 1 or self.eval_images < 0:
            raise ConfigError("corpus needs at least one calibration image")
        if self.lr_size < 4:
            raise ConfigError(f"lr_size must be >= 4, got {self.lr_size}")
        if self.upscale < 1:
            raise ConfigError(f"upscale must be >= 1, got {self.upscale}")
        if self.edge_density < 0 or self.texture_waves < 0:
            raise ConfigError("edge_density and texture_waves must be >= 0")
        if self.noise_level < 0:
            raise ConfigError("noise_level must be >= 0")

    @property
    def hr_size(self) -> int:
        return self.lr_size * self.upscale


def _synth_hr(rng: np.random.Generator, size: int, cfg: CorpusConfig) -> np.ndarray:
    img = np.full((size, size), rng.uniform(0.2, 0.8))
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)

    for _ in range(cfg.edge_density):
        # Random oriented half-plane step.
        angle = rng.uniform(0.0, np.pi)
        offset = rng.uniform(0.25, 0.75) * size
        level = rng.uniform(-0.5, 0.5)
        mask = (np.cos(angle) * xx + np.sin(angle) * yy) > offset
        img = np.where(mask, img + level, img)

    for _ in range(cfg.texture_waves):
        freq = rng.uniform(0.5, 3.0) * 2.0 * np.pi / size
        angle = rng.uniform(0.0, np.pi)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        amp = rng.uniform(0.05, 0.2)
        img = img + amp * np.sin(freq * (np.cos(angle) * xx + np.sin(angle) * yy) + phase)

    if cfg.noise_level > 0:
        img = img + cfg.noise_level * rng.standard_normal((size, size))
    return np.clip(img, 0.0, 1.0)


def _box_downsample(img: np.ndarray, factor: int) -> np.ndarray:
    h, w = img.shape
    return img.reshape(h // factor, factor, w // factor, factor).mean(axis=(1, 3))


def generate_corpus(cfg: CorpusConfig, seed: int):
    """Return (calib, eval) lists of (lr, hr) image pairs, deterministically."""
    rng = np.random.default_rng(seed)
    size = cfg.hr_size

    def batch(count):
        pairs = []
        for _ in range(count):
            hr = _synth_hr(rng, size, cfg)
            lr = _box_downsample(hr, cfg.upscale)
            pairs.append((lr, hr))
        return pairs

    return batch(cfg.images), batch(cfg.eval_images)


def save_pgm(path, image) -> None:
    """Write a [0, 1] plane as binary PGM with maxval 255."""
    img = as_image(image)
    data = np.rint(img * 255.0).astype(np.uint8)
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header + data.tobytes(order="C"))


def _read_token(raw: bytes, pos: int) -> tuple[bytes, int]:
    while pos < len(raw):
        if raw[pos:pos + 1].isspace():
            pos += 1
        elif raw[pos:pos + 1] == b"#":
            while pos < len(raw) and raw[pos:pos + 1] != b"\n":
                pos += 1
        else:
            break
    start = pos
    while pos < len(raw) and not raw[pos:pos + 1].isspace():
        pos += 1
    if start == pos:
        raise IOFormatError("truncated PGM header")
    return raw[start:pos], pos


def load_pgm(path) -> np.ndarray:
    """Read a binary PGM into a [0, 1] float plane."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:2] != b"P5":
        raise IOFormatError(f"{path}: not a binary PGM")
    pos = 2
    fields = []
    for _ in range(3):
        token, pos = _read_token(raw, pos)
        fields.append(token)
    try:
        width, height, maxval = (int(f) for f in fields)
    except ValueError as exc:
        raise IOFormatError(f"{path}: bad PGM header") from exc
    if maxval != 255:
        raise IOFormatError(f"{path}: expected maxval 255, got {maxval}")
    pos += 1  # single whitespace after maxval
    body = raw[pos:pos + width * height]
    if len(body) != width * height:
        raise IOFormatError(f"{path}: truncated pixel data")
    if width < 1 or height < 1:
        raise DataError(f"{path}: degenerate image {width} x {height}")
    pixels = np.frombuffer(body, dtype=np.uint8).reshape(height, width)
    return pixels.astype(np.float64) / 255.0
