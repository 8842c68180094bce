import numpy as np
import pytest

from conftest import random_rays_through
from nerp.camera import Ray, ray_aabb
from nerp.gradients import (
    accumulate,
    chain_transfer,
    finite_difference,
    grad_check,
    grad_pixel,
    relative_error,
    sample_gradients,
)
from nerp.phantoms import homogeneous, random_smooth
from nerp.projector import march_ray
from nerp.radiance import RadianceVolume, TransferFunction, map_fields
from nerp.volume import NormalizedVolume, centered_grid


def clipped_rays(rv, rng, count):
    rays = []
    for o, d in random_rays_through(rv.bounds, rng, count):
        hit = ray_aabb(o, d, rv.bounds)
        if hit is not None and hit[1] > hit[0]:
            rays.append(Ray(o, d, *hit))
    return rays


def test_vacuum_kills_weights(rng):
    rv = homogeneous((6, 6, 6), 5.0, mu=1.0, gamma=0.0)
    ray = clipped_rays(rv, rng, 1)[0]
    d_mu, _ = sample_gradients(rv, ray, 64)
    assert d_mu.sum() == 0.0
    g = grad_pixel(rv, ray, 64)
    assert not g.d_matter.any()


def test_homogeneous_weights_sum(slab_phantom, rng):
    for ray in clipped_rays(slab_phantom, rng, 20):
        d_mu, _ = sample_gradients(slab_phantom, ray, 256)
        res = march_ray(slab_phantom, ray, 256)
        assert abs(d_mu.sum() - (1 - res.transmittance)) <= 1e-9
        g = grad_pixel(slab_phantom, ray, 256)
        assert abs(g.d_matter.sum() - (1 - res.transmittance)) <= 1e-9


def test_scatter_preserves_sample_totals(smooth_phantom, rng):
    for ray in clipped_rays(smooth_phantom, rng, 20):
        d_mu, d_g = sample_gradients(smooth_phantom, ray, 64)
        g = grad_pixel(smooth_phantom, ray, 64)
        assert g.d_matter.sum() == pytest.approx(d_mu.sum(), rel=1e-12, abs=1e-15)
        assert g.d_opacity.sum() == pytest.approx(d_g.sum(), rel=1e-10, abs=1e-13)
        assert g.value == pytest.approx(march_ray(smooth_phantom, ray, 64).value, rel=1e-14)


def test_support_is_near_the_ray(smooth_phantom, rng):
    ray = clipped_rays(smooth_phantom, rng, 1)[0]
    g = grad_pixel(smooth_phantom, ray, 64)
    grid = smooth_phantom.grid
    centers = grid.origin + g.voxel_indices * grid.spacing
    rel = centers - ray.origin
    along = rel @ ray.direction
    dist = np.linalg.norm(rel - along[:, None] * ray.direction, axis=1)
    assert np.all(dist <= np.linalg.norm(grid.spacing) + 1e-9)


def test_fd_agreement(smooth_phantom):
    rays = clipped_rays(smooth_phantom, np.random.default_rng(5), 120)
    report = grad_check(smooth_phantom, rays, h=1e-4, n=64, seed=3)
    assert report.probes >= 100
    assert report.max_rel_matter <= 1e-4
    assert report.max_rel_opacity <= 1e-3
    assert report.min_d_matter >= 0.0


def test_zero_matter_has_zero_opacity_gradient(rng):
    grid = centered_grid((6, 6, 6), 5.0)
    rv = RadianceVolume(grid, np.zeros(grid.dims), np.full(grid.dims, 0.005))
    ray = clipped_rays(rv, rng, 1)[0]
    g = grad_pixel(rv, ray, 32)
    assert not g.d_opacity.any()
    for flat in g.indices[:5]:
        assert finite_difference(rv, ray, int(flat), "opacity", 1e-4, 32) == 0.0


def test_monotone_in_matter(smooth_phantom, rng):
    ray = clipped_rays(smooth_phantom, rng, 1)[0]
    base = march_ray(smooth_phantom, ray, 64).value
    g = grad_pixel(smooth_phantom, ray, 64)
    for flat in rng.choice(g.indices, size=10, replace=False):
        mu = smooth_phantom.matter.copy()
        mu.flat[flat] += 0.05
        bumped = march_ray(RadianceVolume(smooth_phantom.grid, mu, smooth_phantom.opacity), ray, 64).value
        assert bumped >= base


def test_lookup_and_dense(smooth_phantom, rng):
    ray = clipped_rays(smooth_phantom, rng, 1)[0]
    g = grad_pixel(smooth_phantom, ray, 32)
    dm, dg = g.dense()
    v = tuple(g.voxel_indices[3])
    assert g.lookup(v) == (dm[v], dg[v])
    assert g.lookup((0, 0, 0)) in ((0.0, 0.0), (dm[0, 0, 0], dg[0, 0, 0]))


def test_chain_through_transfer(rng):
    # derivative w.r.t. normalized intensity, checked by finite differences off the knots
    grid = centered_grid((5, 5, 5), 6.0)
    x = rng.uniform(0.3, 0.7, size=grid.dims)
    tf_mu = TransferFunction([0.0, 0.2, 1.0], [0.0, 0.4, 1.0])
    tf_g = TransferFunction([0.0, 1.0], [0.0, 0.01])
    vol = NormalizedVolume(grid, x)
    rv = map_fields(vol, tf_mu, tf_g)
    ray = clipped_rays(rv, rng, 1)[0]
    g = grad_pixel(rv, ray, 64)
    dm, dg = g.dense()
    dx = chain_transfer(vol, tf_mu, dm) + chain_transfer(vol, tf_g, dg)
    flat = int(g.indices[np.argmax(np.abs(g.d_matter))])
    h = 1e-5

    def value(delta):
        xx = x.copy()
        xx.flat[flat] += delta
        return march_ray(map_fields(NormalizedVolume(grid, xx), tf_mu, tf_g), ray, 64).value

    fd = (value(h) - value(-h)) / (2 * h)
    assert relative_error(dx.flat[flat], fd) <= 1e-5


def test_accumulate_is_order_stable(smooth_phantom, rng):
    rays = clipped_rays(smooth_phantom, rng, 8)
    w = rng.uniform(size=len(rays))
    a = accumulate(smooth_phantom, rays, w, 32)
    b = accumulate(smooth_phantom, rays, w, 32)
    assert a[0].tobytes() == b[0].tobytes() and a[1].tobytes() == b[1].tobytes()


def test_grad_check_rejects_bad_step(smooth_phantom):
    with pytest.raises(ValueError):
        grad_check(smooth_phantom, [], h=0.0)


def test_random_phantoms_fd(rng):
    # several independent phantoms, a handful of probes each
    for seed in range(3):
        rv = random_smooth(np.random.default_rng(100 + seed), dims=10, spacing=6.0)
        rays = clipped_rays(rv, rng, 12)
        rep = grad_check(rv, rays, h=1e-4, n=48, probes_per_ray=2, seed=seed)
        assert rep.passes()
