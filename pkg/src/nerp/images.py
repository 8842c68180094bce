"""Image file output: 16-bit grayscale radiographs and 8-bit paletted label masks."""

from __future__ import annotations

from pathlib import Path

import numpy as np

try:
    from PIL import Image
except ImportError:  # pragma: no cover - exercised only without Pillow
    Image = None

# label id -> RGB; ids past the table wrap around
_PALETTE = [
    (0, 0, 0), (230, 25, 75), (60, 180, 75), (255, 225, 25), (0, 130, 200),
    (245, 130, 48), (145, 30, 180), (70, 240, 240), (240, 50, 230),
]


def to_uint16(pixels) -> np.ndarray:
    return np.rint(np.clip(np.asarray(pixels, dtype=np.float64), 0.0, 1.0) * 65535.0).astype(np.uint16)


def write_pgm16(path, pixels) -> Path:
    path = Path(path)
    data = to_uint16(pixels)
    rows, cols = data.shape
    header = f"P5\n{cols} {rows}\n65535\n".encode("ascii")
    path.write_bytes(header + data.astype(">u2").tobytes())
    return path


def read_pgm16(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    parts = raw.split(b"\n", 3)
    cols, rows = (int(v) for v in parts[1].split())
    return np.frombuffer(parts[3], dtype=">u2").reshape(rows, cols).astype(np.uint16)


def write_radiograph(path, pixels) -> Path:
    """Write a [0, 1] image as 16-bit PNG, or PGM when Pillow is unavailable."""
    path = Path(path)
    if Image is None:
        return write_pgm16(path.with_suffix(".pgm"), pixels)
    Image.fromarray(to_uint16(pixels)).save(path, format="PNG")
    return path


def read_radiograph(path) -> np.ndarray:
    path = Path(path)
    if path.suffix == ".pgm":
        return read_pgm16(path)
    with Image.open(path) as im:
        return np.asarray(im).astype(np.uint16)


def write_mask(path, labels) -> Path:
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() > 255):
        raise ValueError("mask label ids must fit in 8 bits")
    path = Path(path)
    data = labels.astype(np.uint8)
    if Image is None:
        rows, cols = data.shape
        path = path.with_suffix(".pgm")
        path.write_bytes(f"P5\n{cols} {rows}\n255\n".encode("ascii") + data.tobytes())
        return path
    rows, cols = data.shape
    im = Image.frombytes("P", (cols, rows), np.ascontiguousarray(data).tobytes())
    palette = [c for i in range(256) for c in _PALETTE[i % len(_PALETTE)]]
    im.putpalette(palette)
    im.save(path, format="PNG")
    return path


def read_mask(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im).astype(np.int32)
