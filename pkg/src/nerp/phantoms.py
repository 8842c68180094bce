"""Procedural phantoms for tests, demos and desk-scale dataset runs."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .radiance import RadianceVolume
from .volume import CtVolume, Grid, SegVolume, centered_grid

AIR_HU = -1000.0


@dataclass(frozen=True)
class Shape:
    """Ellipsoid or axis-aligned box; ``radii`` are semi-axes / half-sizes in mm."""

    kind: str
    center: Tuple[float, float, float]
    radii: Tuple[float, float, float]
    hu: float
    label: int = 0
    name: str = ""

    def __post_init__(self):
        if self.kind not in ("ellipsoid", "box"):
            raise ValueError(f"unknown shape kind {self.kind!r}")
        if min(self.radii) <= 0:
            raise ValueError("shape radii must be positive")
        if self.label < 0:
            raise ValueError("shape labels must be nonnegative")

    def mask(self, points: Tuple[np.ndarray, np.ndarray, np.ndarray]) -> np.ndarray:
        rel = [(p - c) / r for p, c, r in zip(points, self.center, self.radii)]
        if self.kind == "ellipsoid":
            return rel[0] ** 2 + rel[1] ** 2 + rel[2] ** 2 <= 1.0
        return (np.abs(rel[0]) <= 1.0) & (np.abs(rel[1]) <= 1.0) & (np.abs(rel[2]) <= 1.0)


@dataclass(frozen=True)
class PhantomSpec:
    grid: Grid
    shapes: Sequence[Shape] = ()
    background_hu: float = AIR_HU

    @classmethod
    def centered(cls, dims, spacing, shapes=(), background_hu: float = AIR_HU) -> "PhantomSpec":
        return cls(centered_grid(dims, spacing), tuple(shapes), background_hu)


def make_phantom(spec: PhantomSpec) -> Tuple[CtVolume, SegVolume]:
    """Rasterize ``spec`` at voxel centers; later shapes paint over earlier ones."""
    grid = spec.grid
    box = grid.bounds
    for s in spec.shapes:
        c = np.asarray(s.center, dtype=np.float64)
        r = np.asarray(s.radii, dtype=np.float64)
        if np.any(c - r < box.lo - 1e-9) or np.any(c + r > box.hi + 1e-9):
            raise ValueError(f"shape {s.name or s.kind} at {s.center} extends outside the grid")
    axes = [grid.origin[a] + np.arange(grid.dims[a]) * grid.spacing[a] for a in range(3)]
    points = np.meshgrid(*axes, indexing="ij", sparse=True)
    hu = np.full(grid.dims, float(spec.background_hu))
    labels = np.zeros(grid.dims, dtype=np.int32)
    names: Dict[int, str] = {}
    for s in spec.shapes:
        inside = s.mask(points)
        hu[inside] = s.hu
        labels[inside] = s.label
        if s.label:
            names.setdefault(s.label, s.name or f"label{s.label}")
    present = set(int(v) for v in np.unique(labels)) - {0}
    names = {k: v for k, v in names.items() if k in present}
    return CtVolume(grid, hu), SegVolume(grid, labels, names)


def sphere_spec(dims: int = 64, spacing: float = 1.0, radius: Optional[float] = None,
                hu: float = 300.0, label: int = 1) -> PhantomSpec:
    radius = radius if radius is not None else 0.3 * dims * spacing
    return PhantomSpec.centered((dims,) * 3, spacing, [Shape("ellipsoid", (0.0, 0.0, 0.0), (radius,) * 3, hu, label, "sphere")])


def chest_spec(dims: Tuple[int, int, int] = (48, 48, 48), spacing: float = 6.0, jitter: float = 0.0,
               rng: Optional[np.random.Generator] = None) -> PhantomSpec:
    """Crude thorax: soft-tissue body, two lungs, heart, spine and a nodule.

    ``jitter`` scales random size/offset changes so that many distinct
    phantoms can be drawn from one template.
    """
    ext = np.asarray(dims, dtype=np.float64) * spacing / 2.0

    def j(v):
        if rng is None or jitter == 0:
            return v
        return v * (1.0 + jitter * rng.uniform(-1.0, 1.0))

    z, y, x = ext
    shapes: List[Shape] = [
        Shape("ellipsoid", (0.0, 0.0, 0.0), (0.9 * z, j(0.6 * y), j(0.85 * x)), 30.0, 0, "body"),
        Shape("ellipsoid", (0.0, 0.0, j(-0.38 * x)), (0.7 * z, j(0.42 * y), j(0.3 * x)), -820.0, 1, "lung_left"),
        Shape("ellipsoid", (0.0, 0.0, j(0.38 * x)), (0.7 * z, j(0.42 * y), j(0.3 * x)), -820.0, 2, "lung_right"),
        Shape("ellipsoid", (j(-0.2 * z), j(-0.1 * y), 0.05 * x), (0.25 * z, 0.22 * y, 0.18 * x), 45.0, 3, "heart"),
        Shape("box", (0.0, 0.42 * y, 0.0), (0.85 * z, 0.07 * y, 0.06 * x), 700.0, 4, "spine"),
    ]
    if rng is not None and jitter > 0:
        shapes.append(Shape("ellipsoid", (rng.uniform(-0.3, 0.3) * z, 0.0, j(0.38 * x)),
                            (0.06 * z, 0.06 * y, 0.06 * x), 60.0, 5, "nodule"))
    return PhantomSpec.centered(dims, spacing, shapes)


# --- radiance phantoms built directly on the fields -------------------------

def homogeneous(dims=(20, 20, 20), spacing=5.0, mu: float = 1.0, gamma: float = 0.01) -> RadianceVolume:
    grid = centered_grid(dims, spacing)
    return RadianceVolume(grid, np.full(grid.dims, mu), np.full(grid.dims, gamma))


def gaussian_blob(dims: int = 64, spacing: float = 2.0, sigma_frac: float = 0.15,
                  mu_peak: float = 1.0, gamma_peak: float = 0.01) -> RadianceVolume:
    grid = centered_grid((dims,) * 3, spacing)
    c = (np.arange(dims) - (dims - 1) / 2.0) * spacing
    zz, yy, xx = np.meshgrid(c, c, c, indexing="ij", sparse=True)
    sigma = sigma_frac * dims * spacing
    g = np.exp(-(zz ** 2 + yy ** 2 + xx ** 2) / (2.0 * sigma ** 2))
    return RadianceVolume(grid, mu_peak * g, gamma_peak * g)


def random_smooth(rng: np.random.Generator, dims: int = 16, spacing: float = 4.0, blobs: int = 4,
                  mu_peak: float = 1.0, gamma_peak: float = 0.01) -> RadianceVolume:
    """Sum of random Gaussian blobs with independent matter and opacity amplitudes."""
    grid = centered_grid((dims,) * 3, spacing)
    c = (np.arange(dims) - (dims - 1) / 2.0) * spacing
    zz, yy, xx = np.meshgrid(c, c, c, indexing="ij", sparse=True)
    half = dims * spacing / 2.0
    mu = np.zeros(grid.dims)
    gamma = np.zeros(grid.dims)
    for _ in range(blobs):
        ctr = rng.uniform(-0.5 * half, 0.5 * half, size=3)
        sig = rng.uniform(0.15, 0.4) * half
        g = np.exp(-((zz - ctr[0]) ** 2 + (yy - ctr[1]) ** 2 + (xx - ctr[2]) ** 2) / (2 * sig ** 2))
        mu += rng.uniform(0.2, 1.0) * g
        gamma += rng.uniform(0.2, 1.0) * g
    mu *= mu_peak / mu.max()
    gamma *= gamma_peak / gamma.max()
    return RadianceVolume(grid, mu, gamma)


def sphere_volume_voxels(radius: float, spacing: float) -> float:
    """Analytic sphere volume expressed in voxels."""
    return 4.0 / 3.0 * math.pi * radius ** 3 / spacing ** 3


RADIANCE_PHANTOMS = {
    "homogeneous": lambda: homogeneous(),
    "blob": lambda: gaussian_blob(),
    "random": lambda: random_smooth(np.random.default_rng(0)),
}
