"""Desk-scale video-matting numerics toolkit.

Grid primitives, alpha compositing with synthetic ground truth, an
attention-based temporal memory block with analytic gradients, the full
matting loss suite, the standard metric battery, and a forward-only toy
network that ties them together.
"""
from .attention import (AttentionParams, AttnGradients, MemoryBank, attend,
                        backward, fit_direct_supervision, forward_supervised,
                        fuse_readout, init_attention_params, lowres_heads,
                        project_qkv, push_frame)
from .compositor import Clip, SynthSpec, composite, replace_background, synth_clip
from .grid import Grid, avg_pool, bilinear_resize, conv2d, gaussian_down2, softmax_rows
from .losses import (LaplacianPyramid, LossBreakdown, alpha_loss, build_pyramid,
                     compose_losses, composition_loss, laplacian_loss,
                     reconstruct_pyramid, temporal_aggregation_loss,
                     temporal_coherence_loss)
from .metrics import (ConvLayer, MetricReport, NetworkConfig, conn_metric,
                      count_macs, dtssd, evaluate_clip, grad_metric, mad, mse)
from .network import (FeaturePyramid, ToyNetConfig, ToyNetWeights,
                      decode_and_output, encode_pyramid, forward_clip, init_weights)

__version__ = "0.1.0"

__all__ = [
    "AttentionParams", "AttnGradients", "MemoryBank", "attend", "backward",
    "fit_direct_supervision", "forward_supervised", "fuse_readout",
    "init_attention_params", "lowres_heads", "project_qkv", "push_frame",
    "Clip", "SynthSpec", "composite", "replace_background", "synth_clip",
    "Grid", "avg_pool", "bilinear_resize", "conv2d", "gaussian_down2",
    "softmax_rows",
    "LaplacianPyramid", "LossBreakdown", "alpha_loss", "build_pyramid",
    "compose_losses", "composition_loss", "laplacian_loss",
    "reconstruct_pyramid", "temporal_aggregation_loss",
    "temporal_coherence_loss",
    "ConvLayer", "MetricReport", "NetworkConfig", "conn_metric", "count_macs",
    "dtssd", "evaluate_clip", "grad_metric", "mad", "mse",
    "FeaturePyramid", "ToyNetConfig", "ToyNetWeights", "decode_and_output",
    "encode_pyramid", "forward_clip", "init_weights",
]
