"""Forward-only miniature matting network around the attention memory block.

Encoder: four stride-2 3x3 convolutions with ReLU, emitting features at
1/2, 1/4, 1/8 and 1/16 of the input. The memory block sits at the 1/16
bottleneck. Decoder: three up-sampling blocks that concatenate the
bilinearly upsampled previous output with the same-scale skip feature and
the average-pooled source image, followed by a residual channel-reducing
convolution; a final block concatenates only the upsampled output with the
source image. The output block is two 3x3 convolutions with a fixed-
statistics per-channel normalization and ReLU between them, emitting three
foreground channels and one alpha channel through logistic squashing.

Processing a clip is strictly causal: frame t's outputs depend only on
frames 0..t through the sliding memory bank.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import expit

from .attention import (AttentionParams, attend, fuse_readout, init_attention_params,
                        lowres_heads, params_from_arrays, params_to_arrays,
                        project_qkv, push_frame)
from .compositor import Clip
from .errors import ArgumentError, ConfigError, ShapeError
from .grid import Grid, avg_pool, bilinear_resize, conv2d
from .metrics import ConvLayer, NetworkConfig

_NORM_EPS = 1e-5


@dataclass(frozen=True)
class ToyNetConfig:
    """Channel widths per scale (1/2, 1/4, 1/8, 1/16) plus memory-block dims.

    The bottleneck feature width C_f is widths[3] by construction.
    """

    widths: tuple[int, int, int, int] = (16, 24, 32, 64)
    key_dim: int = 16
    value_dim: int = 16
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if len(self.widths) != 4 or min(self.widths) < 1:
            raise ConfigError(f"widths must be four positive integers, got {self.widths}")
        if self.key_dim < 1 or self.value_dim < 1:
            raise ConfigError("key_dim and value_dim must be >= 1")

    @property
    def feature_dim(self) -> int:
        return self.widths[3]


@dataclass(frozen=True)
class FeaturePyramid:
    """Feature grids at exactly 1/2, 1/4, 1/8 and 1/16 of the source dims."""

    half: Grid
    quarter: Grid
    eighth: Grid
    sixteenth: Grid

    def scales(self) -> tuple[Grid, Grid, Grid, Grid]:
        return (self.half, self.quarter, self.eighth, self.sixteenth)


@dataclass(frozen=True)
class BlockWeights:
    conv_w: np.ndarray
    conv_b: np.ndarray
    proj_w: np.ndarray
    proj_b: np.ndarray


@dataclass(frozen=True)
class OutputWeights:
    conv1_w: np.ndarray
    conv1_b: np.ndarray
    norm_mean: np.ndarray
    norm_var: np.ndarray
    norm_gamma: np.ndarray
    norm_beta: np.ndarray
    conv2_w: np.ndarray
    conv2_b: np.ndarray


@dataclass(frozen=True)
class ToyNetWeights:
    encoder: tuple[tuple[np.ndarray, np.ndarray], ...]
    attention: AttentionParams
    decoder: tuple[BlockWeights, ...]
    output: OutputWeights


def init_weights(config: ToyNetConfig) -> ToyNetWeights:
    """Seeded Gaussian init, std 1/sqrt(fan_in); all biases zero."""
    rng = np.random.default_rng(config.seed)

    def conv(in_ch, out_ch, k):
        std = 1.0 / np.sqrt(in_ch * k * k)
        return rng.normal(0.0, std, (out_ch, in_ch, k, k)), np.zeros(out_ch)

    w1, w2, w3, w4 = config.widths
    encoder = (conv(3, w1, 3), conv(w1, w2, 3), conv(w2, w3, 3), conv(w3, w4, 3))

    attention = init_attention_params(config.feature_dim, config.key_dim,
                                      config.value_dim,
                                      seed=int(rng.integers(2 ** 63)))

    def block(in_ch, out_ch):
        cw, cb = conv(in_ch, out_ch, 3)
        pw, pb = conv(in_ch, out_ch, 1)
        return BlockWeights(cw, cb, pw, pb)

    decoder = (
        block(w4 + w3 + 3, w3),   # 1/16 -> 1/8
        block(w3 + w2 + 3, w2),   # 1/8  -> 1/4
        block(w2 + w1 + 3, w1),   # 1/4  -> 1/2
        block(w1 + 3, w1),        # 1/2  -> full (no skip feature)
    )

    c1w, c1b = conv(w1, w1, 3)
    c2w, c2b = conv(w1, 4, 3)
    output = OutputWeights(c1w, c1b, np.zeros(w1), np.ones(w1),
                           np.ones(w1), np.zeros(w1), c2w, c2b)
    return ToyNetWeights(encoder, attention, decoder, output)


def weights_to_arrays(weights: ToyNetWeights) -> dict[str, np.ndarray]:
    """Flat named-array view of every weight block (the serialization form)."""
    out: dict[str, np.ndarray] = {}
    for i, (w, b) in enumerate(weights.encoder):
        out[f"encoder{i}_w"] = w
        out[f"encoder{i}_b"] = b
    for name, arr in params_to_arrays(weights.attention).items():
        out[f"attn_{name}"] = arr
    for i, blk in enumerate(weights.decoder):
        out[f"decoder{i}_conv_w"] = blk.conv_w
        out[f"decoder{i}_conv_b"] = blk.conv_b
        out[f"decoder{i}_proj_w"] = blk.proj_w
        out[f"decoder{i}_proj_b"] = blk.proj_b
    o = weights.output
    out.update({"output_conv1_w": o.conv1_w, "output_conv1_b": o.conv1_b,
                "output_norm_mean": o.norm_mean, "output_norm_var": o.norm_var,
                "output_norm_gamma": o.norm_gamma, "output_norm_beta": o.norm_beta,
                "output_conv2_w": o.conv2_w, "output_conv2_b": o.conv2_b})
    return out


def weights_from_arrays(arrays: dict[str, np.ndarray]) -> ToyNetWeights:
    try:
        encoder = tuple((arrays[f"encoder{i}_w"], arrays[f"encoder{i}_b"])
                        for i in range(4))
        attention = params_from_arrays(
            {k[len("attn_"):]: v for k, v in arrays.items() if k.startswith("attn_")})
        decoder = tuple(BlockWeights(arrays[f"decoder{i}_conv_w"],
                                     arrays[f"decoder{i}_conv_b"],
                                     arrays[f"decoder{i}_proj_w"],
                                     arrays[f"decoder{i}_proj_b"])
                        for i in range(4))
        output = OutputWeights(arrays["output_conv1_w"], arrays["output_conv1_b"],
                               arrays["output_norm_mean"], arrays["output_norm_var"],
                               arrays["output_norm_gamma"], arrays["output_norm_beta"],
                               arrays["output_conv2_w"], arrays["output_conv2_b"])
    except KeyError as e:
        raise ConfigError(f"weight container missing array {e}") from e
    return ToyNetWeights(encoder, attention, decoder, output)


def _conv_bias(grid: Grid, w: np.ndarray, b: np.ndarray, stride: int = 1) -> Grid:
    return Grid(conv2d(grid, w, stride=stride, padding="reflect").data + b)


def _relu(grid: Grid) -> Grid:
    return Grid(np.maximum(grid.data, 0.0))


def _concat(*grids: Grid) -> Grid:
    return Grid(np.concatenate([g.data for g in grids], axis=2))


def encode_pyramid(frame: Grid, weights: ToyNetWeights) -> FeaturePyramid:
    """Four stride-2 convolutions with ReLU; dims must be divisible by 16."""
    if frame.channels != 3:
        raise ShapeError(f"expected a 3-channel frame, got {frame.channels} channels")
    if frame.height % 16 or frame.width % 16:
        raise ArgumentError(
            f"frame dims must be divisible by 16, got {frame.height}x{frame.width}")
    scales = []
    x = frame
    for w, b in weights.encoder:
        x = _relu(_conv_bias(x, w, b, stride=2))
        scales.append(x)
    return FeaturePyramid(*scales)


def _residual_block(z: Grid, blk: BlockWeights) -> Grid:
    main = _relu(_conv_bias(z, blk.conv_w, blk.conv_b))
    short = _conv_bias(z, blk.proj_w, blk.proj_b)
    return Grid(main.data + short.data)


def _fixed_norm(grid: Grid, o: OutputWeights) -> Grid:
    scale = o.norm_gamma / np.sqrt(o.norm_var + _NORM_EPS)
    return Grid((grid.data - o.norm_mean) * scale + o.norm_beta)


def decode_and_output(pyramid: FeaturePyramid, fused: Grid, frame: Grid,
                      weights: ToyNetWeights) -> tuple[Grid, Grid]:
    """Upsample through the skip scales and emit (fg, alpha) at frame size.

    Both outputs pass through logistic squashing, so values are in (0, 1)
    for any finite weights; all-zero weights give 0.5 everywhere.
    """
    if fused.shape != pyramid.sixteenth.shape:
        raise ShapeError(f"fused bottleneck shape {fused.shape} != "
                         f"pyramid 1/16 shape {pyramid.sixteenth.shape}")
    skips = (pyramid.eighth, pyramid.quarter, pyramid.half)
    x = fused
    for blk, skip in zip(weights.decoder[:3], skips):
        up = bilinear_resize(x, skip.height, skip.width)
        pooled = avg_pool(frame, frame.height // skip.height)
        x = _residual_block(_concat(up, skip, pooled), blk)
    up = bilinear_resize(x, frame.height, frame.width)
    x = _residual_block(_concat(up, frame), weights.decoder[3])

    t = _relu(_fixed_norm(_conv_bias(x, weights.output.conv1_w,
                                     weights.output.conv1_b), weights.output))
    logits = _conv_bias(t, weights.output.conv2_w, weights.output.conv2_b)
    fg = Grid(expit(logits.data[:, :, 0:3]))
    alpha = Grid(expit(logits.data[:, :, 3:4]))
    return fg, alpha


@dataclass(frozen=True)
class ForwardResult:
    pred_fg: Clip
    pred_alpha: Clip
    lowres_alpha: tuple[Grid, ...]
    lowres_fg: tuple[Grid, ...]


def forward_clip(clip: Clip, config: ToyNetConfig,
                 weights: Optional[ToyNetWeights] = None) -> ForwardResult:
    """Per frame: encode, slide the bottleneck features into the memory bank,
    attend over it, fuse, decode; also emits the low-resolution head outputs
    used for direct supervision of the memory block."""
    if clip.role != "image":
        raise ArgumentError(f"expected an image clip, got role {clip.role!r}")
    if weights is None:
        weights = init_weights(config)

    bank = None
    fgs, alphas, lr_alphas, lr_fgs = [], [], [], []
    for frame in clip.frames:
        pyramid = encode_pyramid(frame, weights)
        features = pyramid.sixteenth
        bank = push_frame(bank, features)
        q, k, v = project_qkv(features, bank, weights.attention)
        readout = attend(q, k, v, weights.attention.key_dim)
        fused = fuse_readout(features, readout, weights.attention)
        alpha_lr, fg_lr = lowres_heads(fused, weights.attention)
        fg, alpha = decode_and_output(pyramid, fused, frame, weights)
        fgs.append(fg)
        alphas.append(alpha)
        lr_alphas.append(alpha_lr)
        lr_fgs.append(fg_lr)

    return ForwardResult(Clip(tuple(fgs), "foreground", clip.frame_rate),
                         Clip(tuple(alphas), "alpha", clip.frame_rate),
                         tuple(lr_alphas), tuple(lr_fgs))


def encode_features(clip: Clip, weights: ToyNetWeights) -> list[Grid]:
    """Bottleneck (1/16) features of every frame; input to the fitting loop."""
    return [encode_pyramid(f, weights).sixteenth for f in clip.frames]


def default_macs_config(config: Optional[ToyNetConfig] = None) -> NetworkConfig:
    """The encoder chain as a sequential conv config for MAC accounting.

    Decoder blocks concatenate skip tensors and so do not form a single
    channel chain; the counter covers plain sequential stacks.
    """
    config = config or ToyNetConfig()
    w1, w2, w3, w4 = config.widths
    return NetworkConfig((
        ConvLayer(3, w1, 3, 2),
        ConvLayer(w1, w2, 3, 2),
        ConvLayer(w2, w3, 3, 2),
        ConvLayer(w3, w4, 3, 2),
    ))
