"""The viewer: emission-absorption rendering plus AIP/MIP baselines and label projection."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from . import _kernels
from .camera import Camera, Ray, RayBundle, generate_rays
from .radiance import RadianceVolume
from .volume import SegVolume

DEFAULT_SAMPLES = 512


class Mode(str, Enum):
    EA = "ea"
    AIP = "aip"
    MIP = "mip"


@dataclass(frozen=True)
class MarchResult:
    value: float
    transmittance: float
    weights: Optional[np.ndarray] = None
    t: Optional[np.ndarray] = None
    matter: Optional[np.ndarray] = None
    opacity: Optional[np.ndarray] = None
    # transmittance in front of each sample
    trans: Optional[np.ndarray] = None


@dataclass(frozen=True)
class Radiograph:
    pixels: np.ndarray
    mode: Mode = Mode.EA
    samples: int = DEFAULT_SAMPLES
    camera: Optional[Camera] = None
    # un-tone-mapped values, kept for diagnostics
    raw: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def shape(self):
        return self.pixels.shape


@dataclass(frozen=True)
class MaskImage:
    labels: np.ndarray
    occupancy: Optional[np.ndarray] = field(default=None, repr=False)


def _check_samples(n: int) -> int:
    n = int(n)
    if n < 2:
        raise ValueError(f"need at least 2 samples per ray, got {n}")
    return n


def march_ray(rv: RadianceVolume, ray: Ray, n: int = DEFAULT_SAMPLES) -> MarchResult:
    """Composite one ray with midpoint samples over its clipped interval."""
    n = _check_samples(n)
    if not ray.hits:
        return MarchResult(0.0, 1.0, np.zeros(0), np.zeros(0), np.zeros(0), np.zeros(0), np.zeros(0))
    w, m, g, tr = (np.empty(n) for _ in range(4))
    grid = rv.grid
    value, trans = _kernels.march(
        rv.matter, rv.opacity, grid.origin, grid.spacing,
        np.asarray(ray.origin, dtype=np.float64), np.asarray(ray.direction, dtype=np.float64),
        float(ray.t_near), float(ray.t_far), n, w, m, g, tr,
    )
    delta = (ray.t_far - ray.t_near) / n
    t = ray.t_near + (np.arange(n) + 0.5) * delta
    return MarchResult(value, trans, w, t, m, g, tr)


def tone_map(values: np.ndarray, scale: float = 1.0) -> np.ndarray:
    return np.clip(values * scale, 0.0, 1.0)


def _flat(bundle: RayBundle):
    rows, cols = bundle.shape
    return (
        np.ascontiguousarray(bundle.directions.reshape(rows * cols, 3)),
        np.ascontiguousarray(bundle.t_near.ravel()),
        np.ascontiguousarray(bundle.t_far.ravel()),
        np.ascontiguousarray(bundle.hit.ravel()),
    )


def render_bundle(rv: RadianceVolume, bundle: RayBundle, mode=Mode.EA, n: int = DEFAULT_SAMPLES) -> np.ndarray:
    """Raw (not tone-mapped) per-pixel values for a prepared ray bundle."""
    n = _check_samples(n)
    mode = Mode(mode)
    grid = rv.grid
    dirs, tn, tf, hit = _flat(bundle)
    out = np.empty(hit.size)
    src = np.asarray(bundle.origin, dtype=np.float64)
    if mode is Mode.EA:
        trans = np.empty(hit.size)
        _kernels.render_ea(rv.matter, rv.opacity, grid.origin, grid.spacing, src, dirs, tn, tf, hit, n, out, trans)
    else:
        _kernels.render_reduce(rv.matter, grid.origin, grid.spacing, src, dirs, tn, tf, hit, n, mode is Mode.MIP, out)
    return out.reshape(bundle.shape)


def render(rv: RadianceVolume, cam: Camera, mode=Mode.EA, n: int = DEFAULT_SAMPLES, scale: float = 1.0) -> Radiograph:
    """Render ``rv`` from ``cam``; the output is ``clip(scale * value, 0, 1)``."""
    mode = Mode(mode)
    bundle = generate_rays(cam, rv.bounds)
    raw = render_bundle(rv, bundle, mode, n)
    return Radiograph(tone_map(raw, scale), mode, int(n), cam, raw)


def project_labels(
    seg: SegVolume,
    rv: RadianceVolume,
    cam: Camera,
    n: int = DEFAULT_SAMPLES,
    tau: float = 0.0,
    occupancy_only: bool = False,
) -> MaskImage:
    """Label each pixel with the structure holding the most compositing weight.

    Occupancy per label sums the EA weights of samples whose nearest voxel
    carries that label (or the sample spacing, with ``occupancy_only``). A
    pixel takes the best label when its occupancy is positive and at least
    ``tau``; ties go to the smaller label id.
    """
    n = _check_samples(n)
    if not seg.grid.same_as(rv.grid):
        raise ValueError("segmentation and radiance volume are not co-registered")
    bundle = generate_rays(cam, rv.bounds)
    dirs, tn, tf, hit = _flat(bundle)
    label_ids = np.asarray(seg.label_ids, dtype=np.int64)
    slot_of = np.zeros(int(label_ids.max()) + 1 if label_ids.size else 1, dtype=np.int64)
    slot_of[label_ids] = np.arange(label_ids.size)
    out = np.empty(hit.size, dtype=np.int64)
    occ = np.empty(hit.size)
    grid = rv.grid
    _kernels.project_labels(
        rv.matter, rv.opacity, seg.voxels, slot_of, label_ids, grid.origin, grid.spacing,
        np.asarray(bundle.origin, dtype=np.float64), dirs, tn, tf, hit, n,
        bool(occupancy_only), float(tau), out, occ,
    )
    return MaskImage(out.reshape(bundle.shape).astype(np.int32), occ.reshape(bundle.shape))
