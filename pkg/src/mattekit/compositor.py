"""Alpha compositing and synthetic clip generation with exact ground truth.

Synthetic clips carry an analytically defined sprite (disk or square) with a
linear alpha ramp at its edge, a solid foreground color, and a smooth
background gradient. Every output is fully determined by (spec, seed).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ArgumentError, DomainError, ShapeError
from .grid import Grid

ROLES = ("image", "alpha", "foreground")
_ROLE_CHANNELS = {"image": 3, "alpha": 1, "foreground": 3}


@dataclass(frozen=True)
class Clip:
    """Ordered sequence of same-shape frames tagged with a pixel role.

    role "alpha" requires 1 channel, "image" and "foreground" require 3;
    values must lie in [0, 1] for every role. frame_rate is informational.
    """

    frames: tuple[Grid, ...]
    role: str
    frame_rate: float = 30.0

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))
        if self.role not in ROLES:
            raise ArgumentError(f"role must be one of {ROLES}, got {self.role!r}")
        if len(self.frames) < 1:
            raise ArgumentError("clip needs at least one frame")
        shape = self.frames[0].shape
        want_c = _ROLE_CHANNELS[self.role]
        if shape[2] != want_c:
            raise ShapeError(f"role {self.role!r} requires {want_c} channels, got {shape[2]}")
        for i, f in enumerate(self.frames):
            if f.shape != shape:
                raise ShapeError(f"frame {i} shape {f.shape} != frame 0 shape {shape}")
            if f.data.min() < 0.0 or f.data.max() > 1.0:
                raise DomainError(f"frame {i} values outside [0, 1] for role {self.role!r}")

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def height(self) -> int:
        return self.frames[0].height

    @property
    def width(self) -> int:
        return self.frames[0].width

    @property
    def channels(self) -> int:
        return self.frames[0].channels


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of a synthetic clip; dims must be divisible by 16 and the
    sprite (radius + softness) must fit inside half the smaller dimension."""

    frames: int
    height: int
    width: int
    sprite: str = "disk"
    radius: float = 18.0
    softness: float = 6.0
    velocity: tuple[float, float] = (3.0, 2.0)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "velocity", (float(self.velocity[0]), float(self.velocity[1])))
        if self.frames < 1:
            raise ArgumentError(f"frames must be >= 1, got {self.frames}")
        if self.height % 16 or self.width % 16:
            raise ArgumentError(
                f"dims must be divisible by 16, got {self.height}x{self.width}")
        if self.sprite not in ("disk", "square"):
            raise ArgumentError(f"sprite must be 'disk' or 'square', got {self.sprite!r}")
        if self.radius <= 0 or self.softness < 0:
            raise ArgumentError("radius must be > 0 and softness >= 0")
        if self.radius + self.softness >= min(self.height, self.width) / 2:
            raise ArgumentError("radius + softness must be < min(height, width) / 2")
        if self.seed < 0:
            raise ArgumentError("seed must be a non-negative integer")


_MASK64 = (1 << 64) - 1


class XorShift64Star:
    """xorshift64* PRNG, fully specified so any language reproduces the clips.

    State init: one splitmix64 step of the user seed ::

        z = (seed + 0x9E3779B97F4A7C15) mod 2^64
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) mod 2^64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) mod 2^64
        state = z ^ (z >> 31)            # replaced by 0x9E3779B97F4A7C15 if zero

    Each draw ::

        state ^= state >> 12
        state ^= (state << 25) mod 2^64
        state ^= state >> 27
        output = (state * 0x2545F4914F6CDD1D) mod 2^64

    and ``uniform()`` maps the top 53 bits to [0, 1): (output >> 11) * 2^-53.
    """

    def __init__(self, seed: int):
        z = (seed + 0x9E3779B97F4A7C15) & _MASK64
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        z ^= z >> 31
        self.state = z if z != 0 else 0x9E3779B97F4A7C15

    def next_u64(self) -> int:
        s = self.state
        s ^= s >> 12
        s ^= (s << 25) & _MASK64
        s ^= s >> 27
        self.state = s
        return (s * 0x2545F4914F6CDD1D) & _MASK64

    def uniform(self) -> float:
        return (self.next_u64() >> 11) * (2.0 ** -53)


def composite(alpha: Grid, fg: Grid, bg: Grid) -> Grid:
    """Per-pixel blend out = alpha * fg + (1 - alpha) * bg.

    alpha must be 1-channel in [0, 1]; fg/bg must be 3-channel grids of the
    same height and width. alpha == 1 (or 0) returns fg (or bg) byte-exactly.
    """
    if alpha.channels != 1:
        raise ShapeError(f"alpha must have 1 channel, got {alpha.channels}")
    if fg.channels != 3 or bg.channels != 3:
        raise ShapeError("fg and bg must have 3 channels")
    if not (alpha.height == fg.height == bg.height and alpha.width == fg.width == bg.width):
        raise ShapeError(
            f"spatial dims disagree: alpha {alpha.shape}, fg {fg.shape}, bg {bg.shape}")
    a = alpha.data
    if a.min() < 0.0 or a.max() > 1.0:
        raise DomainError("alpha values must lie in [0, 1]")
    return Grid(a * fg.data + (1.0 - a) * bg.data)


def _fold(x: float, lo: float, hi: float) -> float:
    """Reflective (billiard) fold of x into [lo, hi]."""
    span = hi - lo
    if span <= 0.0:
        return (lo + hi) / 2.0
    y = (x - lo) % (2.0 * span)
    return lo + (y if y <= span else 2.0 * span - y)


def _sprite_alpha(spec: SynthSpec, cy: float, cx: float) -> Grid:
    yy = np.arange(spec.height, dtype=np.float64)[:, None]
    xx = np.arange(spec.width, dtype=np.float64)[None, :]
    if spec.sprite == "disk":
        d = np.sqrt((yy - cy) ** 2 + (xx - cx) ** 2)
    else:
        d = np.maximum(np.abs(yy - cy), np.abs(xx - cx))
    if spec.softness == 0.0:
        a = np.where(d <= spec.radius, 1.0, 0.0)
    else:
        a = np.clip((spec.radius + spec.softness - d) / spec.softness, 0.0, 1.0)
    return Grid(a)


def _corner_gradient(height: int, width: int, corners: np.ndarray) -> Grid:
    """Bilinear blend of four corner colors (tl, tr, bl, br), each RGB."""
    v = np.linspace(0.0, 1.0, height)[:, None, None]
    u = np.linspace(0.0, 1.0, width)[None, :, None]
    tl, tr, bl, br = corners
    top = tl + u * (tr - tl)
    bot = bl + u * (br - bl)
    return Grid(top + v * (bot - top))


def synth_clip(spec: SynthSpec) -> tuple[Clip, Clip, Clip, Grid]:
    """Generate (frames, gt_alpha, gt_fg, bg) for a moving-sprite clip.

    Draw order from the seeded XorShift64Star stream (the reproducibility
    contract): 12 uniforms for the four background corner colors (tl, tr,
    bl, br as RGB), 3 for the foreground color mapped to [0.15, 0.95], then
    2 for the start position (y, x) inside the safe margin. The sprite
    center translates by ``velocity`` per frame with reflective bounce at
    the margins; frame t depends only on (spec, t).
    """
    rng = XorShift64Star(spec.seed)
    corners = np.array([[rng.uniform() for _ in range(3)] for _ in range(4)])
    fg_color = np.array([0.15 + 0.8 * rng.uniform() for _ in range(3)])

    margin = spec.radius + spec.softness
    lo_y, hi_y = margin, spec.height - 1 - margin
    lo_x, hi_x = margin, spec.width - 1 - margin
    start_y = lo_y + rng.uniform() * max(hi_y - lo_y, 0.0)
    start_x = lo_x + rng.uniform() * max(hi_x - lo_x, 0.0)

    bg = _corner_gradient(spec.height, spec.width, corners)
    fg_frame = Grid(np.broadcast_to(fg_color, (spec.height, spec.width, 3)).copy())

    vy, vx = spec.velocity
    alphas, fgs, images = [], [], []
    for t in range(spec.frames):
        cy = _fold(start_y + vy * t, lo_y, hi_y)
        cx = _fold(start_x + vx * t, lo_x, hi_x)
        a = _sprite_alpha(spec, cy, cx)
        alphas.append(a)
        fgs.append(fg_frame)
        images.append(composite(a, fg_frame, bg))

    return (Clip(tuple(images), "image"),
            Clip(tuple(alphas), "alpha"),
            Clip(tuple(fgs), "foreground"),
            bg)


def replace_background(gt_alpha: Clip, gt_fg: Clip, new_bg: Grid) -> Clip:
    """Composite every frame of (gt_alpha, gt_fg) over a new background."""
    if gt_alpha.role != "alpha" or gt_fg.role != "foreground":
        raise ArgumentError("expected an alpha clip and a foreground clip")
    if len(gt_alpha) != len(gt_fg):
        raise ShapeError(f"frame counts disagree: {len(gt_alpha)} vs {len(gt_fg)}")
    frames = tuple(composite(a, f, new_bg)
                   for a, f in zip(gt_alpha.frames, gt_fg.frames))
    return Clip(frames, "image", frame_rate=gt_alpha.frame_rate)


def clip_from_arrays(arrays: Sequence[np.ndarray], role: str) -> Clip:
    """Convenience constructor used by tests and IO."""
    return Clip(tuple(Grid(a) for a in arrays), role)
