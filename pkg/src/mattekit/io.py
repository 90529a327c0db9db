"""On-disk formats: PNG sequences, JSON manifests, named-array containers.

Frames are written as ``frame_%05d.png``: images and foregrounds as 8-bit
RGB, alphas as 8-bit grayscale (value/255). 16-bit grayscale alphas are
accepted on read for higher-precision ground truth. All writes go through
a temp-file-then-rename so partially written outputs never appear.
"""
from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

from .compositor import Clip
from .errors import ArgumentError, ShapeError
from .grid import Grid

FRAME_PATTERN = "frame_{:05d}.png"


def atomic_write_bytes(path: Path, blob: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: Path, text: str) -> None:
    atomic_write_bytes(path, text.encode())


def atomic_write_json(path: Path, doc) -> None:
    atomic_write_text(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _png_bytes(img: Image.Image) -> bytes:
    import io as _io

    buf = _io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def write_image_png(path: Path, grid: Grid) -> None:
    """8-bit RGB; values are clamped to [0, 1] then rounded to 0..255."""
    if grid.channels != 3:
        raise ShapeError(f"image PNG needs 3 channels, got {grid.channels}")
    arr = np.clip(np.rint(grid.data * 255.0), 0, 255).astype(np.uint8)
    atomic_write_bytes(path, _png_bytes(Image.fromarray(arr, mode="RGB")))


def write_alpha_png(path: Path, grid: Grid) -> None:
    """8-bit grayscale; values are clamped to [0, 1] then rounded to 0..255."""
    if grid.channels != 1:
        raise ShapeError(f"alpha PNG needs 1 channel, got {grid.channels}")
    arr = np.clip(np.rint(grid.data[:, :, 0] * 255.0), 0, 255).astype(np.uint8)
    atomic_write_bytes(path, _png_bytes(Image.fromarray(arr, mode="L")))


def read_image_png(path: Path) -> Grid:
    with Image.open(path) as img:
        arr = np.asarray(img.convert("RGB"), dtype=np.float64)
    return Grid(arr / 255.0)


def read_alpha_png(path: Path) -> Grid:
    """Grayscale alpha; 8-bit scales by 1/255, 16-bit by 1/65535."""
    with Image.open(path) as img:
        if img.mode in ("I;16", "I;16B", "I;16L", "I"):
            arr = np.asarray(img, dtype=np.float64) / 65535.0
        else:
            arr = np.asarray(img.convert("L"), dtype=np.float64) / 255.0
    if arr.ndim != 2:
        raise ShapeError(f"alpha PNG must be single-channel, got shape {arr.shape}")
    return Grid(np.clip(arr, 0.0, 1.0))


def write_clip(directory: Path, clip: Clip) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    writer = write_alpha_png if clip.role == "alpha" else write_image_png
    for t, frame in enumerate(clip.frames):
        writer(directory / FRAME_PATTERN.format(t), frame)


def list_frame_files(directory: Path) -> list[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"not a directory: {directory}")
    files = sorted(p for p in directory.iterdir() if p.suffix.lower() == ".png")
    if not files:
        raise ArgumentError(f"no PNG frames in {directory}")
    return files


def read_clip(directory: Path, role: str) -> Clip:
    files = list_frame_files(directory)
    reader = read_alpha_png if role == "alpha" else read_image_png
    return Clip(tuple(reader(p) for p in files), role)


def save_named_arrays(path: Path, arrays: dict[str, np.ndarray]) -> None:
    """Flat named-array container: name + shape + row-major float64 values."""
    doc = {"arrays": [{"name": name,
                       "shape": list(np.asarray(arr).shape),
                       "data": np.asarray(arr, dtype=np.float64).ravel().tolist()}
                      for name, arr in sorted(arrays.items())]}
    atomic_write_json(path, doc)


def load_named_arrays(path: Path) -> dict[str, np.ndarray]:
    with open(path) as fh:
        doc = json.load(fh)
    extra = set(doc) - {"arrays"}
    if extra:
        raise ArgumentError(f"unknown container keys: {sorted(extra)}")
    out: dict[str, np.ndarray] = {}
    for entry in doc["arrays"]:
        bad = set(entry) - {"name", "shape", "data"}
        if bad:
            raise ArgumentError(f"unknown array keys: {sorted(bad)}")
        arr = np.array(entry["data"], dtype=np.float64).reshape(entry["shape"])
        out[entry["name"]] = arr
    return out


def write_loss_trace_csv(path: Path, trace: Sequence[float]) -> None:
    """One ``step,loss`` line per step, no header (row count == steps)."""
    lines = [f"{i},{repr(float(v))}" for i, v in enumerate(trace)]
    atomic_write_text(path, "\n".join(lines) + "\n")
