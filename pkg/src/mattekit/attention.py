"""Attention readout over a three-frame feature memory, with exact gradients.

The block keeps the features of the current frame and its two predecessors
in a fixed three-slot bank. Per-pixel linear maps (1x1-convolution
semantics) produce a query from the current frame and key/value pairs from
every bank slot; scaled-dot-product attention reconstructs a readout that
is fused back into the current features through a residual projection.
Two logistic heads emit low-resolution alpha and foreground predictions,
and the L1 distance of those predictions to downsampled ground truth is
the training objective of ``forward_supervised``/``backward``.

All forward/backward functions are pure given (inputs, params); parameter
arrays are read-only, and the fitting loop builds fresh parameter objects
each step so concurrent fits on separate copies are safe.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit

from .errors import ArgumentError, DomainError, NumericError, ShapeError, StateError
from .grid import Grid, softmax_rows

PARAM_FIELDS = ("w_query", "w_key", "w_value", "w_readout",
                "alpha_w", "alpha_b", "fg_w", "fg_b")


@dataclass(frozen=True)
class MemoryBank:
    """Exactly three same-shape feature grids: frames t, t-1, t-2 in order."""

    slots: tuple[Grid, Grid, Grid]

    def __post_init__(self):
        object.__setattr__(self, "slots", tuple(self.slots))
        if len(self.slots) != 3:
            raise ShapeError(f"memory bank needs exactly 3 slots, got {len(self.slots)}")
        shape = self.slots[0].shape
        for i, s in enumerate(self.slots):
            if s.shape != shape:
                raise ShapeError(f"slot {i} shape {s.shape} != slot 0 shape {shape}")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.slots[0].shape


def push_frame(bank: Optional[MemoryBank], features: Grid) -> MemoryBank:
    """Slide ``features`` into the bank; an empty bank warms up by replication."""
    if bank is None:
        return MemoryBank((features, features, features))
    if features.shape != bank.shape:
        raise ShapeError(f"features shape {features.shape} != bank shape {bank.shape}")
    return MemoryBank((features, bank.slots[0], bank.slots[1]))


def _frozen(arr) -> np.ndarray:
    a = np.array(arr, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class AttentionParams:
    """Projection weights and low-resolution prediction heads.

    Shapes: w_query/w_key (C_f, d_k), w_value (C_f, d_v), w_readout
    (d_v, C_f), alpha head (C_f, 1) + (1,), foreground head (C_f, 3) + (3,).
    Arrays are copied and marked read-only on construction.
    """

    w_query: np.ndarray
    w_key: np.ndarray
    w_value: np.ndarray
    w_readout: np.ndarray
    alpha_w: np.ndarray
    alpha_b: np.ndarray
    fg_w: np.ndarray
    fg_b: np.ndarray

    def __post_init__(self):
        for name in PARAM_FIELDS:
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        c = self.w_query.shape[0]
        if self.w_query.ndim != 2 or self.w_key.shape != self.w_query.shape:
            raise ShapeError("w_query and w_key must be matching (C_f, d_k) matrices")
        if self.w_value.ndim != 2 or self.w_value.shape[0] != c:
            raise ShapeError("w_value must be (C_f, d_v)")
        if self.w_readout.shape != (self.w_value.shape[1], c):
            raise ShapeError("w_readout must be (d_v, C_f)")
        if self.alpha_w.shape != (c, 1) or self.alpha_b.shape != (1,):
            raise ShapeError("alpha head must be (C_f, 1) weights with a single bias")
        if self.fg_w.shape != (c, 3) or self.fg_b.shape != (3,):
            raise ShapeError("fg head must be (C_f, 3) weights with 3 biases")
        if self.key_dim < 1 or self.value_dim < 1:
            raise ArgumentError("d_k and d_v must be >= 1")
        for name in PARAM_FIELDS:
            if not np.isfinite(getattr(self, name)).all():
                raise ArgumentError(f"non-finite values in {name}")

    @property
    def feature_dim(self) -> int:
        return self.w_query.shape[0]

    @property
    def key_dim(self) -> int:
        return self.w_query.shape[1]

    @property
    def value_dim(self) -> int:
        return self.w_value.shape[1]


@dataclass(frozen=True)
class AttnGradients:
    """Loss gradients, one block per AttentionParams field (same shapes)."""

    w_query: np.ndarray
    w_key: np.ndarray
    w_value: np.ndarray
    w_readout: np.ndarray
    alpha_w: np.ndarray
    alpha_b: np.ndarray
    fg_w: np.ndarray
    fg_b: np.ndarray

    def as_dict(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_FIELDS}


def init_attention_params(feature_dim: int, key_dim: int, value_dim: int,
                          seed: int, scale: float = 0.2) -> AttentionParams:
    """Seeded Gaussian init (std ``scale``) with zero head biases."""
    rng = np.random.default_rng(seed)
    return AttentionParams(
        w_query=rng.normal(0.0, scale, (feature_dim, key_dim)),
        w_key=rng.normal(0.0, scale, (feature_dim, key_dim)),
        w_value=rng.normal(0.0, scale, (feature_dim, value_dim)),
        w_readout=rng.normal(0.0, scale, (value_dim, feature_dim)),
        alpha_w=rng.normal(0.0, scale, (feature_dim, 1)),
        alpha_b=np.zeros(1),
        fg_w=rng.normal(0.0, scale, (feature_dim, 3)),
        fg_b=np.zeros(3),
    )


def params_to_arrays(params: AttentionParams) -> dict[str, np.ndarray]:
    return {name: getattr(params, name) for name in PARAM_FIELDS}


def params_from_arrays(arrays: dict[str, np.ndarray]) -> AttentionParams:
    missing = set(PARAM_FIELDS) - set(arrays)
    extra = set(arrays) - set(PARAM_FIELDS)
    if missing or extra:
        raise ArgumentError(f"bad parameter container: missing {sorted(missing)}, "
                            f"unknown {sorted(extra)}")
    return AttentionParams(**{name: arrays[name] for name in PARAM_FIELDS})


def _rows(features: Grid) -> np.ndarray:
    """Flatten h x w x C features to (h*w, C) rows in row-major pixel order."""
    return features.data.reshape(-1, features.channels)


def project_qkv(features: Grid, bank: MemoryBank,
                params: AttentionParams) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-pixel linear projections of the query frame and all bank slots.

    Keys and values stack the three slots' rows in slot order, giving
    (h*w, d_k), (3*h*w, d_k) and (3*h*w, d_v).
    """
    if features.shape != bank.shape:
        raise ShapeError(f"features shape {features.shape} != bank shape {bank.shape}")
    if features.channels != params.feature_dim:
        raise ShapeError(f"features have {features.channels} channels, "
                         f"params expect {params.feature_dim}")
    q = _rows(features) @ params.w_query
    slot_rows = [_rows(s) for s in bank.slots]
    k = np.vstack([r @ params.w_key for r in slot_rows])
    v = np.vstack([r @ params.w_value for r in slot_rows])
    return q, k, v


def attention_logits(q: np.ndarray, k: np.ndarray, d_k: int) -> np.ndarray:
    """Scaled dot-product logits Q K^T / sqrt(d_k)."""
    return (q @ k.T) / np.sqrt(float(d_k))


def attend(q: np.ndarray, k: np.ndarray, v: np.ndarray, d_k: int) -> np.ndarray:
    """softmax(Q K^T / sqrt(d_k)) V; every output row is a convex
    combination of the rows of V."""
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if q.ndim != 2 or k.ndim != 2 or v.ndim != 2:
        raise ShapeError("q, k, v must be 2-D matrices")
    if q.shape[1] != d_k or k.shape[1] != d_k:
        raise ShapeError(f"q/k width must equal d_k={d_k}, got {q.shape[1]}/{k.shape[1]}")
    if k.shape[0] != v.shape[0]:
        raise ShapeError(f"k has {k.shape[0]} rows but v has {v.shape[0]}")
    return softmax_rows(attention_logits(q, k, d_k)) @ v


def fuse_readout(features: Grid, readout: np.ndarray,
                 params: AttentionParams) -> Grid:
    """Residual fusion Y = X + reshape(R W_readout); identity when W_readout = 0."""
    readout = np.asarray(readout, dtype=np.float64)
    n = features.height * features.width
    if readout.shape != (n, params.value_dim):
        raise ShapeError(f"readout must be ({n}, {params.value_dim}), got {readout.shape}")
    if features.channels != params.feature_dim:
        raise ShapeError(f"features have {features.channels} channels, "
                         f"params expect {params.feature_dim}")
    fused = _rows(features) + readout @ params.w_readout
    return Grid(fused.reshape(features.shape))


def lowres_heads(fused: Grid, params: AttentionParams) -> tuple[Grid, Grid]:
    """Per-pixel affine maps + logistic squashing -> (alpha_lr, fg_lr) in (0, 1)."""
    if fused.channels != params.feature_dim:
        raise ShapeError(f"fused features have {fused.channels} channels, "
                         f"params expect {params.feature_dim}")
    y = _rows(fused)
    alpha = expit(y @ params.alpha_w + params.alpha_b)
    fg = expit(y @ params.fg_w + params.fg_b)
    h, w = fused.height, fused.width
    return Grid(alpha.reshape(h, w, 1)), Grid(fg.reshape(h, w, 3))


@dataclass
class AttentionCache:
    """Intermediates of one forward_supervised call, consumed by backward.

    ``params`` is the exact object the forward ran with; backward refuses
    anything else.
    """

    params: AttentionParams
    x_query: np.ndarray
    slot_rows: list[np.ndarray]
    q: np.ndarray
    k: np.ndarray
    v: np.ndarray
    weights: np.ndarray
    readout: np.ndarray
    fused_rows: np.ndarray
    pred_alpha: np.ndarray
    pred_fg: np.ndarray
    gt_alpha: np.ndarray
    gt_fg: np.ndarray
    loss: float


def _check_unit_range(arr: np.ndarray, what: str) -> None:
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise DomainError(f"{what} values must lie in [0, 1]")


def forward_supervised(features: Grid, bank: MemoryBank, params: AttentionParams,
                       gt_alpha_lr: Grid, gt_fg_lr: Grid) -> tuple[float, AttentionCache]:
    """Full chain project -> attend -> fuse -> heads, plus the supervision loss.

    The loss is the mean absolute difference of the alpha head to
    ``gt_alpha_lr`` plus the mean absolute difference of the foreground head
    to ``gt_fg_lr``; both ground-truth grids must already be at the feature
    resolution with values in [0, 1].
    """
    h, w = features.height, features.width
    if gt_alpha_lr.shape != (h, w, 1):
        raise ShapeError(f"gt alpha must be {h}x{w}x1, got {gt_alpha_lr.shape}")
    if gt_fg_lr.shape != (h, w, 3):
        raise ShapeError(f"gt foreground must be {h}x{w}x3, got {gt_fg_lr.shape}")
    _check_unit_range(gt_alpha_lr.data, "gt alpha")
    _check_unit_range(gt_fg_lr.data, "gt foreground")

    x_query = _rows(features)
    slot_rows = [_rows(s) for s in bank.slots]
    q, k, v = project_qkv(features, bank, params)
    weights = softmax_rows(attention_logits(q, k, params.key_dim))
    readout = weights @ v
    fused_rows = x_query + readout @ params.w_readout
    pred_alpha = expit(fused_rows @ params.alpha_w + params.alpha_b)
    pred_fg = expit(fused_rows @ params.fg_w + params.fg_b)

    gt_a = gt_alpha_lr.data.reshape(-1, 1)
    gt_f = gt_fg_lr.data.reshape(-1, 3)
    loss = float(np.mean(np.abs(pred_alpha - gt_a)) + np.mean(np.abs(pred_fg - gt_f)))

    cache = AttentionCache(params, x_query, slot_rows, q, k, v, weights, readout,
                           fused_rows, pred_alpha, pred_fg, gt_a, gt_f, loss)
    return loss, cache


def backward(cache: AttentionCache, params: AttentionParams,
             return_internals: bool = False):
    """Exact gradients of the supervision loss w.r.t. every parameter block.

    The L1 subgradient at exactly-zero residuals is 0, so a perfect fit
    yields all-zero gradients. With ``return_internals`` the gradients come
    paired with a dict of intermediate gradients (d_values, d_weights,
    d_logits) for diagnostics.
    """
    if cache.params is not params:
        raise StateError("cache was produced by a different params object")

    n = cache.x_query.shape[0]
    d_pred_alpha = np.sign(cache.pred_alpha - cache.gt_alpha) / cache.pred_alpha.size
    d_pred_fg = np.sign(cache.pred_fg - cache.gt_fg) / cache.pred_fg.size
    d_za = d_pred_alpha * cache.pred_alpha * (1.0 - cache.pred_alpha)
    d_zf = d_pred_fg * cache.pred_fg * (1.0 - cache.pred_fg)

    g_alpha_w = cache.fused_rows.T @ d_za
    g_alpha_b = d_za.sum(axis=0)
    g_fg_w = cache.fused_rows.T @ d_zf
    g_fg_b = d_zf.sum(axis=0)

    d_fused = d_za @ params.alpha_w.T + d_zf @ params.fg_w.T
    g_readout_w = cache.readout.T @ d_fused
    d_read = d_fused @ params.w_readout.T

    d_weights = d_read @ cache.v.T
    d_values = cache.weights.T @ d_read
    row_dot = (d_weights * cache.weights).sum(axis=1, keepdims=True)
    d_logits = cache.weights * (d_weights - row_dot)

    inv_sqrt = 1.0 / np.sqrt(float(params.key_dim))
    d_q = d_logits @ cache.k * inv_sqrt
    d_k = d_logits.T @ cache.q * inv_sqrt

    g_query = cache.x_query.T @ d_q
    g_key = np.zeros_like(params.w_key)
    g_value = np.zeros_like(params.w_value)
    for i, rows in enumerate(cache.slot_rows):
        g_key += rows.T @ d_k[i * n:(i + 1) * n]
        g_value += rows.T @ d_values[i * n:(i + 1) * n]

    grads = AttnGradients(g_query, g_key, g_value, g_readout_w,
                          g_alpha_w, g_alpha_b, g_fg_w, g_fg_b)
    if return_internals:
        return grads, {"d_values": d_values, "d_weights": d_weights,
                       "d_logits": d_logits}
    return grads


def fit_direct_supervision(features: Sequence[Grid], gt_alpha_lr: Sequence[Grid],
                           gt_fg_lr: Sequence[Grid],
                           params: Optional[AttentionParams] = None,
                           steps: int = 300, step_size: float = 0.05,
                           seed: int = 0) -> tuple[AttentionParams, list[float]]:
    """Plain gradient descent on the supervision loss averaged over a clip.

    Memory banks are built causally from the feature sequence (first frame
    replicated during warm-up) and stay fixed; only the parameters move.
    ``trace[i]`` is the clip loss at the parameters entering step i, so the
    trace has exactly ``steps`` entries. When ``params`` is omitted they are
    seeded from ``seed`` with d_k = d_v = C_f; the run is deterministic
    either way.
    """
    if steps < 1:
        raise ArgumentError(f"steps must be >= 1, got {steps}")
    if not step_size > 0.0:
        raise ArgumentError(f"step_size must be > 0, got {step_size}")
    if not (len(features) == len(gt_alpha_lr) == len(gt_fg_lr)):
        raise ShapeError("features and ground-truth sequences must share length")
    if len(features) < 1:
        raise ArgumentError("need at least one frame to fit")

    if params is None:
        c = features[0].channels
        params = init_attention_params(c, c, c, seed)

    banks = []
    bank = None
    for f in features:
        bank = push_frame(bank, f)
        banks.append(bank)

    t = len(features)
    trace: list[float] = []
    for step in range(steps):
        total = 0.0
        acc = {name: np.zeros_like(getattr(params, name)) for name in PARAM_FIELDS}
        for f, b, ga, gf in zip(features, banks, gt_alpha_lr, gt_fg_lr):
            loss, cache = forward_supervised(f, b, params, ga, gf)
            total += loss
            grads = backward(cache, params)
            for name in PARAM_FIELDS:
                acc[name] += getattr(grads, name)
        mean_loss = total / t
        if not np.isfinite(mean_loss):
            raise NumericError(f"non-finite loss at step {step}", step=step)
        trace.append(mean_loss)
        params = AttentionParams(**{
            name: getattr(params, name) - step_size * (acc[name] / t)
            for name in PARAM_FIELDS})
    return params, trace


def clip_loss(features: Sequence[Grid], gt_alpha_lr: Sequence[Grid],
              gt_fg_lr: Sequence[Grid], params: AttentionParams) -> float:
    """Supervision loss averaged over a clip at fixed parameters."""
    bank = None
    total = 0.0
    for f, ga, gf in zip(features, gt_alpha_lr, gt_fg_lr):
        bank = push_frame(bank, f)
        loss, _ = forward_supervised(f, bank, params, ga, gf)
        total += loss
    return total / len(features)
