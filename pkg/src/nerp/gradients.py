"""Analytic pixel derivatives with respect to the matter and opacity voxels.

One forward sweep stores the compositing weights; a backward sweep keeps the
running sum of downstream emission so each sample's opacity derivative costs
O(1). Sample derivatives are scattered onto voxels with the same trilinear
weights the sampler used.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels
from .camera import Ray
from .projector import DEFAULT_SAMPLES, _check_samples, march_ray
from .radiance import RadianceVolume, TransferFunction
from .volume import NormalizedVolume


@dataclass(frozen=True)
class PixelGradient:
    """Sparse voxel derivatives of one pixel value.

    ``indices`` holds flat voxel indices (C order) in increasing order.
    """

    dims: tuple
    indices: np.ndarray
    d_matter: np.ndarray
    d_opacity: np.ndarray
    value: float = 0.0

    def __len__(self) -> int:
        return int(self.indices.size)

    @property
    def voxel_indices(self) -> np.ndarray:
        return np.stack(np.unravel_index(self.indices, self.dims), axis=-1)

    def dense(self):
        dm = np.zeros(self.dims)
        dg = np.zeros(self.dims)
        dm.flat[self.indices] = self.d_matter
        dg.flat[self.indices] = self.d_opacity
        return dm, dg

    def lookup(self, voxel) -> tuple:
        flat = np.ravel_multi_index(tuple(int(v) for v in voxel), self.dims)
        pos = np.searchsorted(self.indices, flat)
        if pos < self.indices.size and self.indices[pos] == flat:
            return float(self.d_matter[pos]), float(self.d_opacity[pos])
        return 0.0, 0.0


def sample_gradients(rv: RadianceVolume, ray: Ray, n: int = DEFAULT_SAMPLES):
    """Per-sample derivatives ``(dI/dmu(t_i), dI/dgamma(t_i))`` before scattering."""
    res = march_ray(rv, ray, n)
    if res.weights.size == 0:
        return np.zeros(0), np.zeros(0)
    delta = (ray.t_far - ray.t_near) / n
    emitted = res.weights * res.matter
    downstream = np.concatenate([np.cumsum(emitted[::-1])[::-1][1:], [0.0]])
    d_gamma = delta * (res.trans * np.exp(-res.opacity * delta) * res.matter - downstream)
    return res.weights.copy(), d_gamma


def grad_pixel(rv: RadianceVolume, ray: Ray, n: int = DEFAULT_SAMPLES) -> PixelGradient:
    n = _check_samples(n)
    dims = rv.grid.dims
    if not ray.hits:
        empty = np.zeros(0)
        return PixelGradient(dims, np.zeros(0, dtype=np.int64), empty, empty.copy())
    flat = np.empty(8 * n, dtype=np.int64)
    dm = np.empty(8 * n)
    dg = np.empty(8 * n)
    grid = rv.grid
    value, _ = _kernels.march_scatter(
        rv.matter, rv.opacity, grid.origin, grid.spacing,
        np.asarray(ray.origin, dtype=np.float64), np.asarray(ray.direction, dtype=np.float64),
        float(ray.t_near), float(ray.t_far), n, flat, dm, dg,
    )
    keep = flat >= 0
    flat, dm, dg = flat[keep], dm[keep], dg[keep]
    # stable sort, then a sequential reduction: fixed summation order
    order = np.argsort(flat, kind="stable")
    flat, dm, dg = flat[order], dm[order], dg[order]
    uniq, start = np.unique(flat, return_index=True)
    d_matter = np.add.reduceat(dm, start) if uniq.size else np.zeros(0)
    d_opacity = np.add.reduceat(dg, start) if uniq.size else np.zeros(0)
    return PixelGradient(dims, uniq, d_matter, d_opacity, float(value))


def accumulate(rv: RadianceVolume, rays: Sequence[Ray], pixel_weights, n: int = DEFAULT_SAMPLES):
    """Dense ``sum_k pixel_weights[k] * dI_k/dfield`` over rays, in ray order."""
    dm = np.zeros(rv.grid.dims)
    dg = np.zeros(rv.grid.dims)
    for ray, w in zip(rays, pixel_weights):
        g = grad_pixel(rv, ray, n)
        dm.flat[g.indices] += w * g.d_matter
        dg.flat[g.indices] += w * g.d_opacity
    return dm, dg


def chain_transfer(vol: NormalizedVolume, tf: TransferFunction, d_field: np.ndarray) -> np.ndarray:
    """Pull a field derivative back to normalized intensity through ``tf``."""
    return d_field * tf.slope(vol.voxels)


@dataclass(frozen=True)
class GradCheckReport:
    probes: int
    max_rel_matter: float
    mean_rel_matter: float
    max_rel_opacity: float
    mean_rel_opacity: float
    min_d_matter: float

    def passes(self, tol_matter: float = 1e-4, tol_opacity: float = 1e-3) -> bool:
        return (
            self.max_rel_matter <= tol_matter
            and self.max_rel_opacity <= tol_opacity
            and self.min_d_matter >= 0.0
        )

    def format(self) -> str:
        return (
            f"probes={self.probes}\n"
            f"matter : max_rel={self.max_rel_matter:.3e} mean_rel={self.mean_rel_matter:.3e}\n"
            f"opacity: max_rel={self.max_rel_opacity:.3e} mean_rel={self.mean_rel_opacity:.3e}\n"
            f"min dI/dmu={self.min_d_matter:.3e}"
        )


def relative_error(analytic, numeric, floor: float = 1e-6):
    """``|a - b| / max(|a|, |b|, floor)``; the floor absorbs finite-difference roundoff."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / scale


def _perturbed(rv: RadianceVolume, flat: int, channel: str, h: float) -> RadianceVolume:
    field = getattr(rv, channel).copy()
    field.flat[flat] += h
    if channel == "matter":
        return RadianceVolume(rv.grid, field, rv.opacity)
    return RadianceVolume(rv.grid, rv.matter, field)


def finite_difference(rv: RadianceVolume, ray: Ray, flat: int, channel: str, h: float, n: int) -> float:
    """Central difference of the pixel value in one voxel of one channel."""
    # a one-sided step keeps the field nonnegative at zero-valued voxels
    base = getattr(rv, channel).flat[flat]
    if base - h < 0:
        f0 = march_ray(rv, ray, n).value
        f1 = march_ray(_perturbed(rv, flat, channel, h), ray, n).value
        f2 = march_ray(_perturbed(rv, flat, channel, 2 * h), ray, n).value
        return (-3 * f0 + 4 * f1 - f2) / (2 * h)
    up = march_ray(_perturbed(rv, flat, channel, h), ray, n).value
    down = march_ray(_perturbed(rv, flat, channel, -h), ray, n).value
    return (up - down) / (2 * h)


def grad_check(
    rv: RadianceVolume,
    rays: Sequence[Ray],
    h: float = 1e-4,
    n: int = DEFAULT_SAMPLES,
    probes_per_ray: int = 1,
    seed: int = 0,
    floor: float = 1e-6,
) -> GradCheckReport:
    """Compare analytic derivatives to finite differences on random stencil voxels."""
    if not h > 0:
        raise ValueError("finite-difference step must be positive")
    rng = np.random.default_rng(seed)
    err_m, err_g, min_dm = [], [], np.inf
    for ray in rays:
        g = grad_pixel(rv, ray, n)
        if len(g) == 0:
            continue
        min_dm = min(min_dm, float(g.d_matter.min()))
        picks = rng.choice(len(g), size=min(probes_per_ray, len(g)), replace=False)
        for p in picks:
            flat = int(g.indices[p])
            fd_m = finite_difference(rv, ray, flat, "matter", h, n)
            fd_g = finite_difference(rv, ray, flat, "opacity", h, n)
            err_m.append(relative_error(g.d_matter[p], fd_m, floor))
            err_g.append(relative_error(g.d_opacity[p], fd_g, floor))
    if not err_m:
        return GradCheckReport(0, 0.0, 0.0, 0.0, 0.0, 0.0)
    err_m, err_g = np.asarray(err_m), np.asarray(err_g)
    return GradCheckReport(
        int(err_m.size), float(err_m.max()), float(err_m.mean()),
        float(err_g.max()), float(err_g.mean()), float(min_dm),
    )
