"""CT volumes, segmentation volumes and their world geometry.

World points are ordered like the voxel array axes, ``(z, y, x)`` in
millimeters. Voxel ``i`` has its center at ``origin + i * spacing``, so the
grid's bounding box extends half a voxel beyond the outermost centers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence, Tuple

import numpy as np

from . import _kernels

HU_MIN = -1100.0
HU_MAX = 3200.0
DEFAULT_WINDOW = (-1024.0, 3071.0)

Vec3 = Tuple[float, float, float]


class VolumeFormatError(ValueError):
    """Raised when a voxel file or its sidecar cannot be interpreted."""


@dataclass(frozen=True)
class Aabb:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=np.float64).reshape(3)
        hi = np.asarray(self.hi, dtype=np.float64).reshape(3)
        if not np.all(lo < hi):
            raise ValueError(f"degenerate box: lo={lo} hi={hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    @property
    def size(self) -> np.ndarray:
        return self.hi - self.lo

    def contains(self, p) -> bool:
        p = np.asarray(p, dtype=np.float64)
        return bool(np.all(p >= self.lo) and np.all(p <= self.hi))


@dataclass(frozen=True)
class Grid:
    """Shared geometry of every volume type: dims, spacing and origin."""

    dims: Tuple[int, int, int]
    spacing: np.ndarray
    origin: np.ndarray

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) != 3 or min(dims) < 1:
            raise ValueError(f"dims must be three positive integers, got {self.dims}")
        spacing = np.asarray(self.spacing, dtype=np.float64).reshape(3)
        if not np.all(spacing > 0):
            raise ValueError(f"spacing must be strictly positive, got {spacing}")
        origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)

    @property
    def bounds(self) -> Aabb:
        half = 0.5 * self.spacing
        return Aabb(self.origin - half, self.origin + (np.asarray(self.dims) - 0.5) * self.spacing)

    def same_as(self, other: "Grid") -> bool:
        return (
            self.dims == other.dims
            and np.array_equal(self.spacing, other.spacing)
            and np.array_equal(self.origin, other.origin)
        )


def _check_voxels(voxels: np.ndarray, grid: Grid) -> np.ndarray:
    if voxels.shape != grid.dims:
        raise ValueError(f"voxel array shape {voxels.shape} does not match dims {grid.dims}")
    voxels.setflags(write=False)
    return voxels


@dataclass(frozen=True)
class CtVolume:
    """Hounsfield-unit volume, clamped to ``[HU_MIN, HU_MAX]`` on construction."""

    grid: Grid
    voxels: np.ndarray

    def __post_init__(self):
        v = np.clip(np.asarray(self.voxels, dtype=np.float64), HU_MIN, HU_MAX)
        object.__setattr__(self, "voxels", _check_voxels(v, self.grid))

    @property
    def dims(self):
        return self.grid.dims

    @property
    def bounds(self) -> Aabb:
        return self.grid.bounds


@dataclass(frozen=True)
class NormalizedVolume:
    grid: Grid
    voxels: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.voxels, dtype=np.float64)
        if v.size and (v.min() < 0.0 or v.max() > 1.0):
            raise ValueError("normalized voxels must lie in [0, 1]")
        object.__setattr__(self, "voxels", _check_voxels(v, self.grid))

    @property
    def bounds(self) -> Aabb:
        return self.grid.bounds


@dataclass(frozen=True)
class SegVolume:
    """Integer label volume; 0 is background.

    ``labels`` maps label id to a display name. When omitted it is inferred
    from the nonzero values present.
    """

    grid: Grid
    voxels: np.ndarray
    labels: Mapping[int, str] = field(default_factory=dict)

    def __post_init__(self):
        v = np.ascontiguousarray(self.voxels, dtype=np.int32)
        present = set(int(x) for x in np.unique(v)) - {0}
        labels = {int(k): str(n) for k, n in dict(self.labels).items()}
        if not labels:
            labels = {k: f"label{k}" for k in sorted(present)}
        unknown = present - set(labels)
        if unknown:
            raise ValueError(f"labels {sorted(unknown)} not in declared label set {sorted(labels)}")
        if any(k <= 0 for k in labels):
            raise ValueError("declared labels must be positive; 0 is background")
        object.__setattr__(self, "voxels", _check_voxels(v, self.grid))
        object.__setattr__(self, "labels", labels)

    @property
    def label_ids(self) -> Tuple[int, ...]:
        return tuple(sorted(self.labels))


def world_to_index(grid: Grid, p) -> np.ndarray:
    return (np.asarray(p, dtype=np.float64) - grid.origin) / grid.spacing


def index_to_world(grid: Grid, i) -> np.ndarray:
    return grid.origin + np.asarray(i, dtype=np.float64) * grid.spacing


def normalize_hu(vol: CtVolume, window: Tuple[float, float] = DEFAULT_WINDOW) -> NormalizedVolume:
    lo, hi = float(window[0]), float(window[1])
    if not lo < hi:
        raise ValueError(f"window must satisfy lo < hi, got ({lo}, {hi})")
    v = np.clip((vol.voxels - lo) / (hi - lo), 0.0, 1.0)
    return NormalizedVolume(vol.grid, v)


def sample_trilinear(vol, p) -> float:
    """Trilinearly interpolate ``vol`` at world point ``p``.

    Points outside the bounding box return 0. Inside the outer half-voxel
    shell the nearest face values are held constant.
    """
    grid = vol.grid
    return float(
        _kernels.trilinear(vol.voxels, grid.origin, grid.spacing, np.asarray(p, dtype=np.float64))
    )


# --- raw volume I/O ---------------------------------------------------------

_DTYPES = {"int16": "<i2"}


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def _read_sidecar(path: Path) -> dict:
    side = sidecar_path(path)
    try:
        meta = json.loads(side.read_text())
    except FileNotFoundError as exc:
        raise VolumeFormatError(f"missing sidecar {side}") from exc
    except json.JSONDecodeError as exc:
        raise VolumeFormatError(f"garbled sidecar {side}: {exc}") from exc
    if not isinstance(meta, dict):
        raise VolumeFormatError(f"sidecar {side} must hold an object")
    for key in ("dims", "spacing_mm", "origin_mm", "dtype"):
        if key not in meta:
            raise VolumeFormatError(f"sidecar {side} lacks '{key}'")
    if meta["dtype"] not in _DTYPES:
        raise VolumeFormatError(f"unsupported scalar type {meta['dtype']!r}")
    try:
        grid = Grid(tuple(meta["dims"]), meta["spacing_mm"], meta["origin_mm"])
    except (TypeError, ValueError) as exc:
        raise VolumeFormatError(f"bad geometry in {side}: {exc}") from exc
    meta["grid"] = grid
    return meta


def _read_voxels(path: Path, meta: dict) -> np.ndarray:
    grid = meta["grid"]
    raw = np.fromfile(path, dtype=_DTYPES[meta["dtype"]])
    expected = int(np.prod(grid.dims))
    if raw.size != expected:
        raise VolumeFormatError(
            f"voxel count mismatch in {path}: sidecar dims {grid.dims} need {expected}, file holds {raw.size}"
        )
    return raw.reshape(grid.dims)


def load_volume(path) -> CtVolume:
    path = Path(path)
    meta = _read_sidecar(path)
    return CtVolume(meta["grid"], _read_voxels(path, meta).astype(np.float64))


def load_segmentation(path) -> SegVolume:
    path = Path(path)
    meta = _read_sidecar(path)
    labels = {int(k): v for k, v in meta.get("labels", {}).items()}
    return SegVolume(meta["grid"], _read_voxels(path, meta), labels)


def save_volume(path, vol, labels: Mapping[int, str] | None = None) -> None:
    """Write ``vol`` as raw little-endian int16 plus its JSON sidecar."""
    path = Path(path)
    grid = vol.grid
    np.rint(vol.voxels).astype("<i2").tofile(path)
    meta = {
        "dims": list(grid.dims),
        "spacing_mm": grid.spacing.tolist(),
        "origin_mm": grid.origin.tolist(),
        "dtype": "int16",
    }
    if labels is None and isinstance(vol, SegVolume):
        labels = vol.labels
    if labels:
        meta["labels"] = {str(k): v for k, v in sorted(labels.items())}
    sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True))


def centered_grid(dims: Sequence[int], spacing: Vec3 | float) -> Grid:
    """Grid whose bounding box is centered on the world origin."""
    dims = tuple(int(d) for d in dims)
    spacing = np.broadcast_to(np.asarray(spacing, dtype=np.float64), (3,)).copy()
    origin = -0.5 * (np.asarray(dims) - 1) * spacing
    return Grid(dims, spacing, origin)
