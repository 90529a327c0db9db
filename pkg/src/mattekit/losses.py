"""Training objective: image terms, temporal terms, and their composition.

All norms use mean reduction so values are resolution independent. The
Laplacian term weights band level s by 2^(s-1) with s = 1 at the finest
level; the lowest-frequency residual is excluded from the weighted sum.
The temporal coherence term realizes d/dt as forward differences and the
2-norm as an RMS over all pixels and frame pairs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .compositor import Clip
from .errors import ArgumentError, DomainError, ShapeError
from .grid import Grid, bilinear_resize, gaussian_down2


@dataclass(frozen=True)
class LaplacianPyramid:
    """Band-pass levels (finest first) plus the lowest-frequency residual."""

    bands: tuple[Grid, ...]
    residual: Grid

    @property
    def levels(self) -> int:
        return len(self.bands)


def build_pyramid(grid: Grid, levels: int) -> LaplacianPyramid:
    """Decompose ``grid`` into ``levels`` band-pass grids plus a residual.

    Level s has dims ceil(dims / 2^(s-1)); each band is the difference
    between a scale and the bilinear upsampling of the next coarser scale,
    so summing back up reconstructs the input.
    """
    if levels < 1:
        raise ArgumentError(f"levels must be >= 1, got {levels}")
    bands = []
    current = grid
    for _ in range(levels):
        if current.height < 2 or current.width < 2:
            raise ArgumentError(
                f"dims {grid.height}x{grid.width} too small for {levels} levels")
        coarser = gaussian_down2(current)
        up = bilinear_resize(coarser, current.height, current.width)
        bands.append(Grid(current.data - up.data))
        current = coarser
    return LaplacianPyramid(tuple(bands), current)


def reconstruct_pyramid(pyr: LaplacianPyramid) -> Grid:
    """Up-add telescoping: recovers the source grid within 1e-10."""
    current = pyr.residual
    for band in reversed(pyr.bands):
        up = bilinear_resize(current, band.height, band.width)
        current = Grid(up.data + band.data)
    return current


def _check_clip_pair(pred: Clip, gt: Clip) -> None:
    if len(pred) != len(gt):
        raise ShapeError(f"frame counts disagree: {len(pred)} vs {len(gt)}")
    if pred.frames[0].shape != gt.frames[0].shape:
        raise ShapeError(f"frame shapes disagree: {pred.frames[0].shape} "
                         f"vs {gt.frames[0].shape}")


def _mean_l1(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.mean(np.abs(a - b)))


def alpha_loss(pred: Clip, gt: Clip) -> float:
    """Mean absolute difference over all pixels and frames."""
    _check_clip_pair(pred, gt)
    return float(np.mean([_mean_l1(p.data, g.data)
                          for p, g in zip(pred.frames, gt.frames)]))


def laplacian_loss(pred: Clip, gt: Clip, levels: int = 5) -> float:
    """Sum over band levels of 2^(s-1) * meanL1 of the band difference,
    averaged over frames. The residual level does not contribute, so a
    constant offset between the inputs is invisible here."""
    _check_clip_pair(pred, gt)
    per_frame = []
    for p, g in zip(pred.frames, gt.frames):
        pp = build_pyramid(p, levels)
        gp = build_pyramid(g, levels)
        total = 0.0
        for s, (pb, gb) in enumerate(zip(pp.bands, gp.bands), start=1):
            total += (2.0 ** (s - 1)) * _mean_l1(pb.data, gb.data)
        per_frame.append(total)
    return float(np.mean(per_frame))


def composition_loss(pred_alpha: Clip, pred_fg: Clip,
                     gt_alpha: Clip, gt_fg: Clip) -> float:
    """meanL1 between the premultiplied foregrounds alpha*F of both sides."""
    _check_clip_pair(pred_alpha, gt_alpha)
    _check_clip_pair(pred_fg, gt_fg)
    if len(pred_alpha) != len(pred_fg):
        raise ShapeError("alpha and foreground clips must share frame count")
    vals = []
    for pa, pf, ga, gf in zip(pred_alpha.frames, pred_fg.frames,
                              gt_alpha.frames, gt_fg.frames):
        vals.append(_mean_l1(pa.data * pf.data, ga.data * gf.data))
    return float(np.mean(vals))


def temporal_coherence_loss(pred: Clip, gt: Clip) -> float:
    """RMS of the frame-to-frame forward-difference residuals.

    sqrt(mean over all pixels and the T-1 consecutive pairs of
    ((pred_{t+1} - pred_t) - (gt_{t+1} - gt_t))^2). Adding any
    time-constant per-pixel field to both frames of one side leaves the
    value unchanged.
    """
    _check_clip_pair(pred, gt)
    if len(pred) < 2:
        raise ArgumentError(f"need T >= 2 frames, got {len(pred)}")
    sq_sum = 0.0
    count = 0
    for t in range(len(pred) - 1):
        dp = pred.frames[t + 1].data - pred.frames[t].data
        dg = gt.frames[t + 1].data - gt.frames[t].data
        r = dp - dg
        sq_sum += float(np.sum(r * r))
        count += r.size
    return float(np.sqrt(sq_sum / count))


def temporal_aggregation_loss(pred_alpha_lr: Clip, pred_fg_lr: Clip,
                              gt_alpha_lr: Clip, gt_fg_lr: Clip) -> float:
    """meanL1(alpha_lr diff) + meanL1(fg_lr diff) at the low resolution.

    Callers downsample the ground truth (avg_pool or bilinear_resize) to the
    prediction size before calling.
    """
    _check_clip_pair(pred_alpha_lr, gt_alpha_lr)
    _check_clip_pair(pred_fg_lr, gt_fg_lr)
    a = float(np.mean([_mean_l1(p.data, g.data)
                       for p, g in zip(pred_alpha_lr.frames, gt_alpha_lr.frames)]))
    f = float(np.mean([_mean_l1(p.data, g.data)
                       for p, g in zip(pred_fg_lr.frames, gt_fg_lr.frames)]))
    return a + f


@dataclass(frozen=True)
class LossBreakdown:
    """All loss components plus their composed sums.

    image_term = alpha_l1 + laplacian + composition;
    temporal_term = aggregation + coherence; total = image_term +
    temporal_term. Construction enforces these identities to 1e-12.
    """

    alpha_l1: float
    laplacian: float
    composition: float
    image_term: float
    aggregation: float
    coherence: float
    temporal_term: float
    total: float

    def __post_init__(self):
        for name in ("alpha_l1", "laplacian", "composition", "aggregation", "coherence"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0.0:
                raise DomainError(f"{name} must be a non-negative finite scalar, got {v}")
        checks = (
            (self.image_term, self.alpha_l1 + self.laplacian + self.composition),
            (self.temporal_term, self.aggregation + self.coherence),
            (self.total, self.image_term + self.temporal_term),
        )
        for got, want in checks:
            if abs(got - want) > 1e-12:
                raise DomainError(f"composed sum {got} != {want}")

    def as_dict(self) -> dict[str, float]:
        return {
            "alpha_l1": self.alpha_l1, "laplacian": self.laplacian,
            "composition": self.composition, "image_term": self.image_term,
            "aggregation": self.aggregation, "coherence": self.coherence,
            "temporal_term": self.temporal_term, "total": self.total,
        }


def compose_losses(alpha_l1: float, laplacian: float, composition: float,
                   aggregation: float, coherence: float) -> LossBreakdown:
    """Sum the five primitive terms into the composed breakdown."""
    image_term = alpha_l1 + laplacian + composition
    temporal_term = aggregation + coherence
    return LossBreakdown(alpha_l1, laplacian, composition, image_term,
                         aggregation, coherence, temporal_term,
                         image_term + temporal_term)
