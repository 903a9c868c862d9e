"""Toy super-resolution network.

Nearest-neighbor pre-upsampling followed by a dense stack over flattened
tiles: an input tile of patch_size pixels is mapped through the hidden
feature widths and back to patch_size pixels. Biases stay full precision
in every mode. The first layer's input features keep the tile's spatial
shape, so 2D structural stencils apply there; hidden features are
shapeless vectors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError
from .quantizer import QuantizerConfig, fake_quantize
from .scaling import BoundarySet, applied_configs

try:
    from scipy.special import erf
except ImportError:  # pragma: no cover
    erf = None


@dataclass(frozen=True)
class ToyNetConfig:
    layer_dims: tuple[int, ...] = (16, 32, 32, 16)
    activation: str = "relu"
    upscale: int = 2
    patch: tuple[int, int] = (16, 16)
    seed: int = 7

    def __post_init__(self):
        if len(self.layer_dims) < 1:
            raise ConfigError("layer_dims must not be empty")
        if any(w < 4 for w in self.layer_dims):
            raise ConfigError(f"all hidden widths must be >= 4, got {self.layer_dims}")
        if self.activation not in ("relu", "gelu"):
            raise ConfigError(f"activation must be relu or gelu, got {self.activation!r}")
        if self.upscale < 1:
            raise ConfigError(f"upscale must be >= 1, got {self.upscale}")
        if self.patch[0] < 4 or self.patch[1] < 4:
            raise ConfigError(f"patch sides must be >= 4, got {self.patch}")

    @property
    def patch_area(self) -> int:
        return self.patch[0] * self.patch[1]


@dataclass
class DenseLayer:
    w: np.ndarray                       # m x d
    b: np.ndarray                       # m
    spatial: tuple[int, int] | None = None  # shape of the d input features, if any

    @property
    def out_dim(self) -> int:
        return self.w.shape[0]

    @property
    def in_dim(self) -> int:
        return self.w.shape[1]


@dataclass
class ToyNet:
    cfg: ToyNetConfig
    layers: list[DenseLayer] = field(default_factory=list)

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    def copy(self) -> "ToyNet":
        return ToyNet(self.cfg, [DenseLayer(l.w.copy(), l.b.copy(), l.spatial)
                                 for l in self.layers])


def build_toynet(cfg: ToyNetConfig) -> ToyNet:
    """Seeded random net: patch_area -> layer_dims... -> patch_area."""
    rng = np.random.default_rng(cfg.seed)
    widths = [cfg.patch_area, *cfg.layer_dims, cfg.patch_area]
    layers = []
    for i in range(len(widths) - 1):
        d, m = widths[i], widths[i + 1]
        w = rng.standard_normal((m, d)) / np.sqrt(d)
        b = 0.01 * rng.standard_normal(m)
        if i == len(widths) - 2:
            b = b + 0.5  # keep outputs centered in the displayable range
        spatial = cfg.patch if i == 0 else None
        layers.append(DenseLayer(w, b, spatial))
    return ToyNet(cfg, layers)


def _activate(y: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(y, 0.0)
    if erf is None:
        raise ConfigError("gelu requires scipy")
    return 0.5 * y * (1.0 + erf(y / np.sqrt(2.0)))


def nn_upsample(image: np.ndarray, factor: int) -> np.ndarray:
    return np.repeat(np.repeat(image, factor, axis=0), factor, axis=1)


def image_to_tiles(image: np.ndarray, patch: tuple[int, int]) -> np.ndarray:
    """Cut an image into non-overlapping flattened tiles (rows)."""
    h, w = image.shape
    ph, pw = patch
    if h % ph or w % pw:
        raise DimensionError(f"image {image.shape} does not tile by {patch}")
    tiles = image.reshape(h // ph, ph, w // pw, pw).transpose(0, 2, 1, 3)
    return tiles.reshape(-1, ph * pw)


def tiles_to_image(tiles: np.ndarray, shape: tuple[int, int],
                   patch: tuple[int, int]) -> np.ndarray:
    h, w = shape
    ph, pw = patch
    grid = tiles.reshape(h // ph, w // pw, ph, pw).transpose(0, 2, 1, 3)
    return grid.reshape(h, w)


@dataclass
class LayerQuantState:
    """Quantization state of one layer: boundaries, scale, bit widths."""
    theta: BoundarySet
    s: float
    bits_a: int | None
    bits_w: int | None

    def configs(self) -> tuple[QuantizerConfig | None, QuantizerConfig | None]:
        act = wt = None
        if self.bits_a is not None and self.bits_w is not None:
            act, wt = applied_configs(self.theta, self.s, self.bits_a, self.bits_w)
        elif self.bits_a is not None:
            act = QuantizerConfig(self.bits_a, self.theta.alpha_x / self.s,
                                  self.theta.beta_x / self.s)
        elif self.bits_w is not None:
            wt = QuantizerConfig(self.bits_w, self.theta.alpha_w * self.s,
                                 self.theta.beta_w * self.s)
        return act, wt


def _forward_tiles(net: ToyNet, tiles: np.ndarray,
                   states: list[LayerQuantState] | None) -> np.ndarray:
    x = tiles
    for i, layer in enumerate(net.layers):
        if states is None:
            y = x @ layer.w.T + layer.b
        else:
            st = states[i]
            act_cfg, wt_cfg = st.configs()
            w_s = layer.w * st.s
            x_s = x / st.s
            if act_cfg is not None:
                x_s = fake_quantize(x_s, act_cfg)
            if wt_cfg is not None:
                w_s = fake_quantize(w_s, wt_cfg)
            y = x_s @ w_s.T + layer.b
        if i < net.n_layers - 1:
            y = _activate(y, net.cfg.activation)
        x = y
    return x


def forward(net: ToyNet, lr_image: np.ndarray,
            states: list[LayerQuantState] | None = None) -> np.ndarray:
    """Run the net on one low-resolution image; clamped [0, 1] output.

    states=None runs full precision; otherwise each layer fake-quantizes
    its scaled weights and input activations per its state.
    """
    if states is not None and len(states) != net.n_layers:
        raise DimensionError(
            f"need {net.n_layers} layer states, got {len(states)}"
        )
    up = nn_upsample(np.asarray(lr_image, dtype=np.float64), net.cfg.upscale)
    tiles = image_to_tiles(up, net.cfg.patch)
    out = _forward_tiles(net, tiles, states)
    if out.shape[1] != net.cfg.patch_area:
        raise DimensionError("net output width does not match the patch area")
    return np.clip(tiles_to_image(out, up.shape, net.cfg.patch), 0.0, 1.0)


def collect_taps(net: ToyNet, lr_images) -> list[np.ndarray]:
    """Per-layer input activations of the full-precision net, all images stacked."""
    taps = [[] for _ in net.layers]
    for lr in lr_images:
        up = nn_upsample(np.asarray(lr, dtype=np.float64), net.cfg.upscale)
        x = image_to_tiles(up, net.cfg.patch)
        for i, layer in enumerate(net.layers):
            taps[i].append(x)
            y = x @ layer.w.T + layer.b
            if i < net.n_layers - 1:
                y = _activate(y, net.cfg.activation)
            x = y
    return [np.vstack(rows) for rows in taps]
