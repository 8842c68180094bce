"""Exact ray/voxel-grid traversal and the piecewise-constant reference projector.

Fields are treated as constant over each voxel cell, so chord lengths are
exact and the reference image needs no quadrature.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .camera import Camera, Ray, generate_rays, ray_aabb
from .projector import Mode, Radiograph, tone_map
from .radiance import RadianceVolume
from .volume import Grid


@dataclass(frozen=True)
class VoxelPath:
    indices: np.ndarray  # (k, 3) voxel indices in traversal order
    lengths: np.ndarray  # (k,) chord lengths in mm

    @property
    def total_length(self) -> float:
        return float(self.lengths.sum())

    def __len__(self) -> int:
        return int(self.lengths.size)


def _walk(grid: Grid, origin, direction, t0, t1) -> VoxelPath:
    dims = np.asarray(grid.dims, dtype=np.int64)
    cap = int(dims.sum()) + 8
    idx = np.empty((cap, 3), dtype=np.int64)
    lens = np.empty(cap)
    lo = grid.bounds.lo
    cnt = _kernels.siddon_walk(
        dims, lo, grid.spacing,
        np.asarray(origin, dtype=np.float64), np.asarray(direction, dtype=np.float64),
        float(t0), float(t1), idx, lens,
    )
    return VoxelPath(idx[:cnt].copy(), lens[:cnt].copy())


def siddon_trace(grid: Grid, ray: Ray) -> VoxelPath:
    """Voxels crossed by ``ray`` with their exact chord lengths.

    The ray is clipped against the grid's bounding box; a miss yields an
    empty path.
    """
    hit = ray_aabb(ray.origin, ray.direction, grid.bounds)
    if hit is None or hit[1] <= hit[0]:
        return VoxelPath(np.zeros((0, 3), dtype=np.int64), np.zeros(0))
    return _walk(grid, ray.origin, ray.direction, *hit)


def path_integral(field: np.ndarray, path: VoxelPath) -> float:
    """Line integral of a piecewise-constant field along ``path``."""
    if len(path) == 0:
        return 0.0
    z, y, x = path.indices.T
    return float(np.dot(field[z, y, x], path.lengths))


def path_emission(rv: RadianceVolume, path: VoxelPath) -> float:
    """Emission-absorption composite over exact chords."""
    if len(path) == 0:
        return 0.0
    z, y, x = path.indices.T
    g = rv.opacity[z, y, x]
    m = rv.matter[z, y, x]
    depth = np.concatenate([[0.0], np.cumsum(g * path.lengths)[:-1]])
    return float(np.sum(np.exp(-depth) * -np.expm1(-g * path.lengths) * m))


def siddon_project_raw(rv: RadianceVolume, cam: Camera):
    """Per-pixel emission and radiological path, both un-tone-mapped."""
    grid = rv.grid
    bundle = generate_rays(cam, grid.bounds)
    rows, cols = bundle.shape
    dirs = np.ascontiguousarray(bundle.directions.reshape(-1, 3))
    emission = np.empty(rows * cols)
    radiological = np.empty(rows * cols)
    _kernels.siddon_render(
        rv.matter, rv.opacity, grid.bounds.lo, grid.spacing,
        np.asarray(bundle.origin, dtype=np.float64), dirs,
        np.ascontiguousarray(bundle.t_near.ravel()), np.ascontiguousarray(bundle.t_far.ravel()),
        np.ascontiguousarray(bundle.hit.ravel()), emission, radiological,
    )
    return emission.reshape(rows, cols), radiological.reshape(rows, cols)


def siddon_project(rv: RadianceVolume, cam: Camera, scale: float = 1.0) -> Radiograph:
    emission, _ = siddon_project_raw(rv, cam)
    return Radiograph(tone_map(emission, scale), Mode.EA, 0, cam, emission)


def radiological_path(rv: RadianceVolume, cam: Camera) -> np.ndarray:
    """Optical depth per pixel, for diagnostics."""
    return siddon_project_raw(rv, cam)[1]
