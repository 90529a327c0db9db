"""Matting evaluation battery: MAD, MSE, Grad, Conn, dtSSD, and a MAC counter.

Reporting scales follow the conventions of the published matting
benchmarks, which the values here are meant to sit next to:

* MAD and MSE are means of |diff| and diff^2 scaled by 1e3.
* Grad and Conn are pixel sums scaled by 1e-3.
* dtSSD is the mean over frame pairs of per-pair RMS, scaled by 1e2.

Grad uses first-order Gaussian derivative filters (sigma 1.4, truncated at
ceil(3*sigma), L2-normalized, reflect padding). Conn sweeps thresholds
0.1..0.9 in steps of 0.1 with distance tolerance 0.15; both constants are
overridable. Every metric is deterministic regardless of worker threads.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .compositor import Clip
from .errors import (ArgumentError, ConfigError, DegenerateInputError,
                     DomainError, ShapeError)
from .grid import Grid, conv2d

METRIC_NAMES = ("mad", "mse", "grad", "conn", "dtssd")
GRAD_SIGMA = 1.4
CONN_STEP = 0.1
CONN_TOLERANCE = 0.15

_FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])


def _check_pair(pred: Grid, gt: Grid) -> None:
    if pred.shape != gt.shape:
        raise ShapeError(f"shapes disagree: {pred.shape} vs {gt.shape}")
    for name, g in (("pred", pred), ("gt", gt)):
        if g.data.min() < 0.0 or g.data.max() > 1.0:
            raise DomainError(f"{name} values must lie in [0, 1]")


def mad(pred: Grid, gt: Grid) -> float:
    """1e3 * mean absolute difference."""
    _check_pair(pred, gt)
    return 1e3 * float(np.mean(np.abs(pred.data - gt.data)))


def mse(pred: Grid, gt: Grid) -> float:
    """1e3 * mean squared difference."""
    _check_pair(pred, gt)
    d = pred.data - gt.data
    return 1e3 * float(np.mean(d * d))


def _gauss(x: np.ndarray, sigma: float) -> np.ndarray:
    return np.exp(-x ** 2 / (2.0 * sigma ** 2)) / (sigma * np.sqrt(2.0 * np.pi))


def _dgauss(x: np.ndarray, sigma: float) -> np.ndarray:
    return -x * _gauss(x, sigma) / sigma ** 2


def gaussian_derivative_kernels(sigma: float = GRAD_SIGMA) -> tuple[np.ndarray, np.ndarray]:
    """x- and y-derivative-of-Gaussian filters, truncated at ceil(3*sigma).

    kx[i, j] = gauss(i - r) * dgauss(j - r) smooths vertically and
    differentiates horizontally; ky is its transpose. Both are normalized
    to unit L2 norm, matching the published benchmark filters.
    """
    r = math.ceil(3.0 * sigma)
    offsets = np.arange(-r, r + 1, dtype=np.float64)
    kx = np.outer(_gauss(offsets, sigma), _dgauss(offsets, sigma))
    kx = kx / np.sqrt(np.sum(kx * kx))
    return kx, kx.T


def _gradient_magnitude(matte: np.ndarray, kx: np.ndarray, ky: np.ndarray) -> np.ndarray:
    g = Grid(matte)
    kernel_x = kx[np.newaxis, np.newaxis, :, :]
    kernel_y = ky[np.newaxis, np.newaxis, :, :]
    gx = conv2d(g, kernel_x, stride=1, padding="reflect").data[:, :, 0]
    gy = conv2d(g, kernel_y, stride=1, padding="reflect").data[:, :, 0]
    return np.sqrt(gx * gx + gy * gy)


def grad_metric(pred: Grid, gt: Grid, sigma: float = GRAD_SIGMA) -> float:
    """1e-3 * sum over pixels of (|grad pred| - |grad gt|)^2."""
    _check_pair(pred, gt)
    if pred.channels != 1:
        raise ShapeError(f"grad metric needs 1-channel mattes, got {pred.channels}")
    kx, ky = gaussian_derivative_kernels(sigma)
    pm = _gradient_magnitude(pred.data[:, :, 0], kx, ky)
    gm = _gradient_magnitude(gt.data[:, :, 0], kx, ky)
    return 1e-3 * float(np.sum((pm - gm) ** 2))


def _largest_component(mask: np.ndarray) -> np.ndarray:
    """Largest 4-connected component of a binary mask; empty mask -> empty.

    Ties on size go to the component whose first pixel comes earliest in
    row-major order (scipy labels in scan order, so that is label argmax).
    """
    labels, count = ndimage.label(mask, structure=_FOUR_CONNECTED)
    if count == 0:
        return np.zeros_like(mask, dtype=bool)
    sizes = ndimage.sum_labels(np.ones_like(labels), labels, index=np.arange(1, count + 1))
    keep = int(np.argmax(sizes)) + 1
    return labels == keep


def conn_metric(pred: Grid, gt: Grid, step: float = CONN_STEP,
                tolerance: float = CONN_TOLERANCE) -> float:
    """Connectivity error between two mattes.

    For each threshold theta in {step, 2*step, ..., 1 - step}, Omega(theta)
    is the largest 4-connected component of {pred >= theta} & {gt >= theta}.
    Per pixel, l is the largest theta whose Omega contains it (0 if none).
    With d = alpha - l per matte, phi = 1 - d where d >= tolerance else 1,
    and the metric is 1e-3 * sum |phi(pred) - phi(gt)|.

    An empty intersection at the lowest threshold means there is no source
    region to anchor connectivity and raises DegenerateInputError rather
    than silently falling back to a single matte.
    """
    _check_pair(pred, gt)
    if pred.channels != 1:
        raise ShapeError(f"conn metric needs 1-channel mattes, got {pred.channels}")
    p = pred.data[:, :, 0]
    g = gt.data[:, :, 0]

    n_steps = int(round(1.0 / step)) - 1
    thresholds = [step * i for i in range(1, n_steps + 1)]
    l_map = np.zeros_like(p)
    for theta in thresholds:
        inter = (p >= theta) & (g >= theta)
        if theta == thresholds[0] and not inter.any():
            raise DegenerateInputError(
                "no joint component at the lowest threshold; mattes are degenerate")
        if not inter.any():
            continue
        omega = _largest_component(inter)
        l_map = np.where(omega, theta, l_map)

    def phi(alpha: np.ndarray) -> np.ndarray:
        d = alpha - l_map
        return np.where(d >= tolerance, 1.0 - d, 1.0)

    return 1e-3 * float(np.sum(np.abs(phi(p) - phi(g))))


def dtssd(pred: Clip, gt: Clip) -> float:
    """1e2 * mean over consecutive pairs of the RMS of the difference of
    temporal derivatives (pred_{t+1}-pred_t) - (gt_{t+1}-gt_t)."""
    if len(pred) != len(gt):
        raise ShapeError(f"frame counts disagree: {len(pred)} vs {len(gt)}")
    if pred.frames[0].shape != gt.frames[0].shape:
        raise ShapeError("frame shapes disagree")
    if len(pred) < 2:
        raise ArgumentError(f"dtSSD needs T >= 2 frames, got {len(pred)}")
    vals = []
    for t in range(len(pred) - 1):
        dp = pred.frames[t + 1].data - pred.frames[t].data
        dg = gt.frames[t + 1].data - gt.frames[t].data
        vals.append(np.sqrt(np.mean((dp - dg) ** 2)))
    return 1e2 * float(np.mean(vals))


# --- MAC accounting -------------------------------------------------------

@dataclass(frozen=True)
class ConvLayer:
    in_ch: int
    out_ch: int
    kernel: int
    stride: int = 1

    def __post_init__(self):
        for name in ("in_ch", "out_ch", "kernel", "stride"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise ConfigError(f"layer {name} must be a positive integer, got {v!r}")


@dataclass(frozen=True)
class NetworkConfig:
    """Ordered conv-layer chain; spatial dims follow from a stated input size."""

    layers: tuple[ConvLayer, ...]

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        for i in range(1, len(self.layers)):
            if self.layers[i].in_ch != self.layers[i - 1].out_ch:
                raise ConfigError(
                    f"layer {i} expects {self.layers[i].in_ch} input channels but "
                    f"layer {i - 1} emits {self.layers[i - 1].out_ch}")

    @classmethod
    def from_json_dict(cls, doc: dict) -> "NetworkConfig":
        extra = set(doc) - {"layers"}
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        layers = []
        for i, entry in enumerate(doc.get("layers", [])):
            bad = set(entry) - {"in_ch", "out_ch", "kernel", "stride"}
            if bad:
                raise ConfigError(f"layer {i} has unknown keys: {sorted(bad)}")
            try:
                layers.append(ConvLayer(entry["in_ch"], entry["out_ch"],
                                        entry["kernel"], entry.get("stride", 1)))
            except KeyError as e:
                raise ConfigError(f"layer {i} missing key {e}") from e
        return cls(tuple(layers))

    def to_json_dict(self) -> dict:
        return {"layers": [{"in_ch": l.in_ch, "out_ch": l.out_ch,
                            "kernel": l.kernel, "stride": l.stride}
                           for l in self.layers]}


def layer_macs(config: NetworkConfig, input_h: int, input_w: int) -> list[dict]:
    """Per-layer MAC table with chained output dims (ceil same-padding rule)."""
    if input_h < 1 or input_w < 1:
        raise ArgumentError("input dims must be positive")
    rows = []
    h, w = input_h, input_w
    for i, layer in enumerate(config.layers):
        out_h = -(-h // layer.stride)
        out_w = -(-w // layer.stride)
        macs = out_h * out_w * layer.in_ch * layer.out_ch * layer.kernel ** 2
        rows.append({"layer": i, "in_ch": layer.in_ch, "out_ch": layer.out_ch,
                     "kernel": layer.kernel, "stride": layer.stride,
                     "out_h": out_h, "out_w": out_w, "macs": macs})
        h, w = out_h, out_w
    return rows


def count_macs(config: NetworkConfig, input_h: int, input_w: int) -> int:
    """Total multiply-accumulates of the conv chain at the given input size."""
    return sum(r["macs"] for r in layer_macs(config, input_h, input_w))


# --- Reports --------------------------------------------------------------

PER_FRAME_METRICS = ("mad", "mse", "grad", "conn")

REPORT_SCHEMA = {
    "type": "object",
    "required": ["meta", "per_frame", "aggregate"],
    "additionalProperties": False,
    "properties": {
        "meta": {
            "type": "object",
            "required": ["frames", "height", "width", "config_hash"],
            "additionalProperties": False,
            "properties": {
                "frames": {"type": "integer", "minimum": 1},
                "height": {"type": "integer", "minimum": 1},
                "width": {"type": "integer", "minimum": 1},
                "config_hash": {"type": "string", "pattern": "^[0-9a-f]{12}$"},
            },
        },
        "per_frame": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["frame"],
                "additionalProperties": False,
                "properties": {
                    "frame": {"type": "integer", "minimum": 0},
                    "mad": {"type": "number", "minimum": 0},
                    "mse": {"type": "number", "minimum": 0},
                    "grad": {"type": "number", "minimum": 0},
                    "conn": {"type": "number", "minimum": 0},
                },
            },
        },
        "aggregate": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "mad": {"type": "number", "minimum": 0},
                "mse": {"type": "number", "minimum": 0},
                "grad": {"type": "number", "minimum": 0},
                "conn": {"type": "number", "minimum": 0},
                "dtssd": {"type": "number", "minimum": 0},
            },
        },
    },
}


@dataclass(frozen=True)
class MetricReport:
    """Per-frame and aggregate metric values plus run metadata.

    Aggregate per-frame metrics are the plain mean of the per-frame values;
    dtSSD exists only at the aggregate level.
    """

    per_frame: tuple[dict, ...]
    aggregate: dict
    meta: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {"meta": dict(self.meta),
                "per_frame": [dict(r) for r in self.per_frame],
                "aggregate": dict(self.aggregate)}

    def to_csv_text(self) -> str:
        """One row per frame plus an aggregate row; unselected cells empty."""
        cols = ["frame", "mad", "mse", "grad", "conn", "dtssd"]
        lines = [",".join(cols)]
        for rec in self.per_frame:
            lines.append(",".join(
                [str(rec["frame"])] +
                [_csv_num(rec.get(m)) for m in cols[1:]]))
        lines.append(",".join(
            ["aggregate"] + [_csv_num(self.aggregate.get(m)) for m in cols[1:]]))
        return "\n".join(lines) + "\n"


def _csv_num(v) -> str:
    return "" if v is None else repr(float(v))


def config_hash(selected: tuple[str, ...], frames: int, height: int, width: int) -> str:
    doc = {"metrics": sorted(selected), "frames": frames,
           "height": height, "width": width,
           "grad_sigma": GRAD_SIGMA, "conn_step": CONN_STEP,
           "conn_tolerance": CONN_TOLERANCE}
    blob = json.dumps(doc, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def evaluate_clip(pred: Clip, gt: Clip,
                  metrics: tuple[str, ...] = METRIC_NAMES) -> MetricReport:
    """Run the selected metrics over two aligned alpha clips."""
    unknown = set(metrics) - set(METRIC_NAMES)
    if unknown:
        raise ArgumentError(f"unknown metrics: {sorted(unknown)}")
    if len(pred) != len(gt):
        raise ShapeError(f"frame counts disagree: {len(pred)} vs {len(gt)}")
    funcs = {"mad": mad, "mse": mse, "grad": grad_metric, "conn": conn_metric}
    selected = [m for m in PER_FRAME_METRICS if m in metrics]

    per_frame = []
    for t, (p, g) in enumerate(zip(pred.frames, gt.frames)):
        rec = {"frame": t}
        for m in selected:
            rec[m] = funcs[m](p, g)
        per_frame.append(rec)

    aggregate = {m: float(np.mean([rec[m] for rec in per_frame])) for m in selected}
    if "dtssd" in metrics:
        aggregate["dtssd"] = dtssd(pred, gt)

    meta = {"frames": len(pred), "height": pred.height, "width": pred.width,
            "config_hash": config_hash(tuple(metrics), len(pred),
                                       pred.height, pred.width)}
    return MetricReport(tuple(per_frame), aggregate, meta)


def validate_report(doc: dict) -> None:
    """Raise jsonschema.ValidationError if ``doc`` breaks the report schema."""
    import jsonschema

    jsonschema.validate(doc, REPORT_SCHEMA)
