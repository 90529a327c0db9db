"""Dense float64 grid primitives: convolution, resampling, pooling, softmax.

Every operation is a pure function: inputs are never mutated, outputs are
freshly allocated, and all reductions run in a fixed order so repeated calls
produce bit-identical results regardless of thread count.

Conventions fixed here and relied on everywhere else in the package:

* 64-bit floats only.
* ``conv2d`` computes cross-correlation (no kernel flip) with same-padding
  and the ceil(dim / stride) output-size rule.
* Reflect padding mirrors without repeating the border sample
  ([a, b, c] padded by 1 -> [b, a, b, c, b]).
* ``bilinear_resize`` aligns samples on half-pixel centers.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ArgumentError, ShapeError


class Grid:
    """H x W x C array of finite float64 values.

    The universal pixel/feature container. The backing array is row-major
    (channel fastest) and marked read-only; construction copies its input
    and rejects NaN/Inf.
    """

    __slots__ = ("data",)

    def __init__(self, data):
        arr = np.array(data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, np.newaxis]
        if arr.ndim != 3:
            raise ShapeError(f"grid data must be 2-D or 3-D, got {arr.ndim}-D")
        if min(arr.shape) < 1:
            raise ShapeError(f"grid dims must be positive, got {arr.shape}")
        if not np.isfinite(arr).all():
            raise ArgumentError("grid values must be finite")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        self.data = arr

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    @classmethod
    def full(cls, height: int, width: int, channels: int, value: float) -> "Grid":
        return cls(np.full((height, width, channels), value, dtype=np.float64))

    @classmethod
    def zeros(cls, height: int, width: int, channels: int) -> "Grid":
        return cls(np.zeros((height, width, channels), dtype=np.float64))

    def __repr__(self) -> str:
        return f"Grid({self.height}x{self.width}x{self.channels})"


def same_pad_amount(dim: int, k: int, stride: int) -> tuple[int, int]:
    """Leading/trailing pad for same-padding with out = ceil(dim / stride)."""
    out = -(-dim // stride)
    total = max((out - 1) * stride + k - dim, 0)
    lead = total // 2
    return lead, total - lead


def _pad2d(arr: np.ndarray, pad_h, pad_w, padding: str) -> np.ndarray:
    spec = (pad_h, pad_w, (0, 0))
    if padding == "reflect":
        return np.pad(arr, spec, mode="reflect")
    if padding == "zero":
        return np.pad(arr, spec, mode="constant")
    raise ArgumentError(f"padding must be 'reflect' or 'zero', got {padding!r}")


def conv2d(grid: Grid, kernel: np.ndarray, stride: int = 1,
           padding: str = "reflect") -> Grid:
    """2-D cross-correlation of ``grid`` with a [out_ch, in_ch, kh, kw] kernel.

    Same-padding with output spatial dims ceil(dim / stride); kh and kw must
    be odd. Output values follow the direct dot-product definition.
    """
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.ndim != 4:
        raise ShapeError(f"kernel must be 4-D [out, in, kh, kw], got {kernel.ndim}-D")
    if not np.isfinite(kernel).all():
        raise ArgumentError("kernel values must be finite")
    out_ch, in_ch, kh, kw = kernel.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise ArgumentError(f"kernel spatial dims must be odd, got {kh}x{kw}")
    if in_ch != grid.channels:
        raise ShapeError(f"kernel expects {in_ch} channels, grid has {grid.channels}")
    if not isinstance(stride, int) or stride < 1:
        raise ArgumentError(f"stride must be a positive integer, got {stride!r}")

    pad_h = same_pad_amount(grid.height, kh, stride)
    pad_w = same_pad_amount(grid.width, kw, stride)
    padded = _pad2d(grid.data, pad_h, pad_w, padding)
    windows = sliding_window_view(padded, (kh, kw), axis=(0, 1))[::stride, ::stride]
    # optimize=False keeps the contraction on numpy's single-threaded C path,
    # which fixes the reduction order (bit-reproducibility is contractual).
    out = np.einsum("xycij,ocij->xyo", windows, kernel, optimize=False)
    return Grid(out)


def _linear_coords(n: int, out: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    centers = (np.arange(out, dtype=np.float64) + 0.5) * (n / out) - 0.5
    centers = np.clip(centers, 0.0, float(n - 1))
    i0 = np.minimum(np.floor(centers).astype(np.intp), n - 1)
    i1 = np.minimum(i0 + 1, n - 1)
    return i0, i1, centers - i0


def bilinear_resize(grid: Grid, out_h: int, out_w: int) -> Grid:
    """Bilinear interpolation to (out_h, out_w) with half-pixel-center alignment.

    Channels are preserved. The lerp form a + w*(b - a) is used so constant
    grids and the identity-size case come out exact.
    """
    if out_h < 1 or out_w < 1:
        raise ArgumentError(f"output dims must be >= 1, got {out_h}x{out_w}")
    y0, y1, wy = _linear_coords(grid.height, out_h)
    x0, x1, wx = _linear_coords(grid.width, out_w)
    d = grid.data
    wx = wx[np.newaxis, :, np.newaxis]
    wy = wy[:, np.newaxis, np.newaxis]
    top = d[y0[:, None], x0[None, :]]
    top = top + wx * (d[y0[:, None], x1[None, :]] - top)
    bot = d[y1[:, None], x0[None, :]]
    bot = bot + wx * (d[y1[:, None], x1[None, :]] - bot)
    return Grid(top + wy * (bot - top))


_SMOOTH5_TAPS = ((-2, 1.0 / 16.0), (-1, 4.0 / 16.0), (1, 4.0 / 16.0), (2, 1.0 / 16.0))


def _smooth5(arr: np.ndarray, axis: int) -> np.ndarray:
    """[1,4,6,4,1]/16 smoothing along one axis, reflect padded.

    Computed as center + sum w_i * (x_i - center) so constants pass through
    bit-exactly.
    """
    pad = [(0, 0)] * arr.ndim
    pad[axis] = (2, 2)
    p = np.pad(arr, pad, mode="reflect")
    n = arr.shape[axis]

    def take(off):
        idx = [slice(None)] * arr.ndim
        idx[axis] = slice(2 + off, 2 + off + n)
        return p[tuple(idx)]

    center = take(0)
    acc = center.copy()
    for off, w in _SMOOTH5_TAPS:
        acc += w * (take(off) - center)
    return acc


def gaussian_down2(grid: Grid) -> Grid:
    """Smooth with the separable [1,4,6,4,1]/16 kernel, then keep every
    second sample starting at index 0. Output dims are ceil(dim / 2)."""
    if grid.height < 2 or grid.width < 2:
        raise ArgumentError(
            f"gaussian_down2 needs dims >= 2, got {grid.height}x{grid.width}")
    sm = _smooth5(_smooth5(grid.data, 0), 1)
    return Grid(sm[::2, ::2])


def avg_pool(grid: Grid, k: int) -> Grid:
    """Non-overlapping k x k mean per channel; k must divide both dims."""
    if not isinstance(k, int) or k < 1:
        raise ArgumentError(f"pool size must be a positive integer, got {k!r}")
    h, w, c = grid.shape
    if h % k or w % k:
        raise ArgumentError(f"pool size {k} must divide dims {h}x{w}")
    blocks = grid.data.reshape(h // k, k, w // k, k, c)
    return Grid(blocks.mean(axis=(1, 3)))


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with per-row max subtraction for stability.

    Each output row is non-negative and sums to 1 within 1e-12 for any
    finite input.
    """
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 2:
        raise ShapeError(f"logits must be a 2-D matrix, got {z.ndim}-D")
    if not np.isfinite(z).all():
        raise ArgumentError("logits must be finite")
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)
