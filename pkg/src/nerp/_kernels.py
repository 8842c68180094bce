"""Compiled inner loops shared by the projector, the Siddon tracer and the gradients.

Every kernel takes plain arrays so the public modules stay free of numba
types. Pixel loops use ``prange``; each pixel writes only its own output slot,
so results do not depend on the thread count.
"""

import math
import os

import numpy as np
from numba import config, njit, prange

# the bundled TBB is too old for numba and only produces a warning
if "NUMBA_THREADING_LAYER_PRIORITY" not in os.environ:
    config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

_JIT = dict(cache=True, nogil=True, fastmath=False)


@njit(**_JIT)
def _axis(q, n):
    # lower node, upper node, fraction toward the upper node (clamp-to-edge)
    if n == 1:
        return 0, 0, 0.0
    if q <= 0.0:
        return 0, 1, 0.0
    if q >= n - 1:
        return n - 2, n - 1, 1.0
    i0 = int(math.floor(q))
    if i0 > n - 2:
        i0 = n - 2
    return i0, i0 + 1, q - i0


@njit(**_JIT)
def _inside(qz, qy, qx, nz, ny, nx):
    return (
        qz >= -0.5 and qz <= nz - 0.5
        and qy >= -0.5 and qy <= ny - 0.5
        and qx >= -0.5 and qx <= nx - 0.5
    )


@njit(**_JIT)
def _lerp3(f, z0, z1, y0, y1, x0, x1, fz, fy, fx):
    c00 = f[z0, y0, x0] * (1.0 - fx) + f[z0, y0, x1] * fx
    c01 = f[z0, y1, x0] * (1.0 - fx) + f[z0, y1, x1] * fx
    c10 = f[z1, y0, x0] * (1.0 - fx) + f[z1, y0, x1] * fx
    c11 = f[z1, y1, x0] * (1.0 - fx) + f[z1, y1, x1] * fx
    c0 = c00 * (1.0 - fy) + c01 * fy
    c1 = c10 * (1.0 - fy) + c11 * fy
    return c0 * (1.0 - fz) + c1 * fz


@njit(**_JIT)
def trilinear(field, origin, spacing, p):
    nz, ny, nx = field.shape
    qz = (p[0] - origin[0]) / spacing[0]
    qy = (p[1] - origin[1]) / spacing[1]
    qx = (p[2] - origin[2]) / spacing[2]
    if not _inside(qz, qy, qx, nz, ny, nx):
        return 0.0
    z0, z1, fz = _axis(qz, nz)
    y0, y1, fy = _axis(qy, ny)
    x0, x1, fx = _axis(qx, nx)
    return _lerp3(field, z0, z1, y0, y1, x0, x1, fz, fy, fx)


@njit(**_JIT)
def _sample2(mu, gamma, origin, spacing, pz, py, px):
    nz, ny, nx = mu.shape
    qz = (pz - origin[0]) / spacing[0]
    qy = (py - origin[1]) / spacing[1]
    qx = (px - origin[2]) / spacing[2]
    if not _inside(qz, qy, qx, nz, ny, nx):
        return 0.0, 0.0
    z0, z1, fz = _axis(qz, nz)
    y0, y1, fy = _axis(qy, ny)
    x0, x1, fx = _axis(qx, nx)
    m = _lerp3(mu, z0, z1, y0, y1, x0, x1, fz, fy, fx)
    g = _lerp3(gamma, z0, z1, y0, y1, x0, x1, fz, fy, fx)
    return m, g


@njit(**_JIT)
def march(mu, gamma, origin, spacing, o, d, t0, t1, n, w_out, mu_out, gamma_out, trans_out):
    """Emission-absorption march of one ray; fills per-sample buffers."""
    delta = (t1 - t0) / n
    trans = 1.0
    value = 0.0
    for i in range(n):
        t = t0 + (i + 0.5) * delta
        m, g = _sample2(mu, gamma, origin, spacing, o[0] + t * d[0], o[1] + t * d[1], o[2] + t * d[2])
        alpha = -math.expm1(-g * delta)
        w = trans * alpha
        w_out[i] = w
        mu_out[i] = m
        gamma_out[i] = g
        trans_out[i] = trans
        value += w * m
        trans *= math.exp(-g * delta)
    return value, trans


@njit(**_JIT)
def _march_value(mu, gamma, origin, spacing, o, d, t0, t1, n):
    delta = (t1 - t0) / n
    trans = 1.0
    value = 0.0
    for i in range(n):
        t = t0 + (i + 0.5) * delta
        m, g = _sample2(mu, gamma, origin, spacing, o[0] + t * d[0], o[1] + t * d[1], o[2] + t * d[2])
        value += trans * (-math.expm1(-g * delta)) * m
        trans *= math.exp(-g * delta)
    return value, trans


@njit(parallel=True, **_JIT)
def render_ea(mu, gamma, origin, spacing, src, dirs, tn, tf, hit, n, out, trans_out):
    npix = dirs.shape[0]
    for k in prange(npix):
        if hit[k]:
            v, tr = _march_value(mu, gamma, origin, spacing, src, dirs[k], tn[k], tf[k], n)
            out[k] = v
            trans_out[k] = tr
        else:
            out[k] = 0.0
            trans_out[k] = 1.0


@njit(parallel=True, **_JIT)
def render_reduce(mu, origin, spacing, src, dirs, tn, tf, hit, n, use_max, out):
    """Average (use_max=False) or maximum intensity of mu samples per ray."""
    npix = dirs.shape[0]
    for k in prange(npix):
        if not hit[k]:
            out[k] = 0.0
            continue
        d = dirs[k]
        delta = (tf[k] - tn[k]) / n
        acc = 0.0
        best = 0.0
        for i in range(n):
            t = tn[k] + (i + 0.5) * delta
            m, _ = _sample2(mu, mu, origin, spacing, src[0] + t * d[0], src[1] + t * d[1], src[2] + t * d[2])
            acc += m
            if i == 0 or m > best:
                best = m
        out[k] = best if use_max else acc / n


@njit(**_JIT)
def _nearest_label(labels, origin, spacing, pz, py, px):
    nz, ny, nx = labels.shape
    qz = (pz - origin[0]) / spacing[0]
    qy = (py - origin[1]) / spacing[1]
    qx = (px - origin[2]) / spacing[2]
    if not _inside(qz, qy, qx, nz, ny, nx):
        return 0
    iz = min(max(int(math.floor(qz + 0.5)), 0), nz - 1)
    iy = min(max(int(math.floor(qy + 0.5)), 0), ny - 1)
    ix = min(max(int(math.floor(qx + 0.5)), 0), nx - 1)
    return labels[iz, iy, ix]


@njit(parallel=True, **_JIT)
def project_labels(mu, gamma, labels, slot_of, label_ids, origin, spacing, src, dirs, tn, tf, hit, n,
                   occupancy_only, tau, out, occ_out):
    npix = dirs.shape[0]
    nlab = label_ids.shape[0]
    for k in prange(npix):
        occ = np.zeros(nlab)
        if hit[k]:
            d = dirs[k]
            delta = (tf[k] - tn[k]) / n
            trans = 1.0
            for i in range(n):
                t = tn[k] + (i + 0.5) * delta
                pz = src[0] + t * d[0]
                py = src[1] + t * d[1]
                px = src[2] + t * d[2]
                m, g = _sample2(mu, gamma, origin, spacing, pz, py, px)
                if occupancy_only:
                    w = delta
                else:
                    w = trans * (-math.expm1(-g * delta))
                    trans *= math.exp(-g * delta)
                lab = _nearest_label(labels, origin, spacing, pz, py, px)
                if lab > 0:
                    occ[slot_of[lab]] += w
        best = 0
        best_occ = 0.0
        for s in range(nlab):
            # strict comparison keeps the smaller label id on ties
            if occ[s] > best_occ:
                best_occ = occ[s]
                best = label_ids[s]
        out[k] = best if (best_occ > 0.0 and best_occ >= tau) else 0
        occ_out[k] = best_occ


@njit(**_JIT)
def march_scatter(mu, gamma, origin, spacing, o, d, t0, t1, n, flat_out, dmu_out, dgamma_out):
    """Per-sample analytic derivatives scattered onto trilinear stencils.

    Writes 8 entries per sample (flat voxel index and the two derivative
    contributions); samples outside the grid write index -1.
    """
    nz, ny, nx = mu.shape
    delta = (t1 - t0) / n
    w = np.empty(n)
    ms = np.empty(n)
    decay = np.empty(n)
    trans = 1.0
    value = 0.0
    for i in range(n):
        t = t0 + (i + 0.5) * delta
        m, g = _sample2(mu, gamma, origin, spacing, o[0] + t * d[0], o[1] + t * d[1], o[2] + t * d[2])
        e = math.exp(-g * delta)
        w[i] = trans * (-math.expm1(-g * delta))
        ms[i] = m
        decay[i] = trans * e
        value += w[i] * m
        trans *= e
    suffix = 0.0
    for i in range(n - 1, -1, -1):
        dmu = w[i]
        dg = delta * (decay[i] * ms[i] - suffix)
        suffix += w[i] * ms[i]
        t = t0 + (i + 0.5) * delta
        qz = (o[0] + t * d[0] - origin[0]) / spacing[0]
        qy = (o[1] + t * d[1] - origin[1]) / spacing[1]
        qx = (o[2] + t * d[2] - origin[2]) / spacing[2]
        base = 8 * i
        if not _inside(qz, qy, qx, nz, ny, nx):
            for c in range(8):
                flat_out[base + c] = -1
                dmu_out[base + c] = 0.0
                dgamma_out[base + c] = 0.0
            continue
        z0, z1, fz = _axis(qz, nz)
        y0, y1, fy = _axis(qy, ny)
        x0, x1, fx = _axis(qx, nx)
        c = 0
        for a in range(2):
            zi = z1 if a else z0
            wz = fz if a else 1.0 - fz
            for b in range(2):
                yi = y1 if b else y0
                wy = fy if b else 1.0 - fy
                for e2 in range(2):
                    xi = x1 if e2 else x0
                    wx = fx if e2 else 1.0 - fx
                    s = wz * wy * wx
                    # zero-weight corners (clamped edges, exact nodes) are not in the support
                    flat_out[base + c] = (zi * ny + yi) * nx + xi if s != 0.0 else -1
                    dmu_out[base + c] = dmu * s
                    dgamma_out[base + c] = dg * s
                    c += 1
    return value, trans


# --- Siddon traversal -------------------------------------------------------

@njit(**_JIT)
def _first_plane(o, d, lo, s, t0, nplanes):
    # index of the first plane crossed strictly after t0, and its step
    x0 = o + t0 * d
    if d > 0.0:
        k = int(math.floor((x0 - lo) / s)) + 1
        if k < 0:
            k = 0
        return k, 1
    k = int(math.ceil((x0 - lo) / s)) - 1
    if k > nplanes - 1:
        k = nplanes - 1
    return k, -1


@njit(**_JIT)
def siddon_walk(dims, lo, spacing, o, d, t0, t1, idx_out, len_out):
    """Exact voxel chords of the segment [t0, t1]; returns the entry count."""
    big = np.inf
    knext = np.zeros(3, dtype=np.int64)
    kstep = np.zeros(3, dtype=np.int64)
    tnext = np.empty(3)
    for a in range(3):
        if d[a] == 0.0:
            tnext[a] = big
            continue
        k, st = _first_plane(o[a], d[a], lo[a], spacing[a], t0, dims[a] + 1)
        knext[a] = k
        kstep[a] = st
        tnext[a] = (lo[a] + k * spacing[a] - o[a]) / d[a]
        if k < 0 or k > dims[a]:
            tnext[a] = big
    count = 0
    t = t0
    while t < t1:
        tn = t1
        for a in range(3):
            if tnext[a] < tn:
                tn = tnext[a]
        seg = tn - t
        if seg > 0.0:
            tm = 0.5 * (t + tn)
            for a in range(3):
                q = (o[a] + tm * d[a] - lo[a]) / spacing[a]
                i = int(math.floor(q))
                if i < 0:
                    i = 0
                elif i > dims[a] - 1:
                    i = dims[a] - 1
                idx_out[count, a] = i
            # sliver segments from rounding at a plane land in the same voxel
            if (count > 0 and idx_out[count, 0] == idx_out[count - 1, 0]
                    and idx_out[count, 1] == idx_out[count - 1, 1]
                    and idx_out[count, 2] == idx_out[count - 1, 2]):
                len_out[count - 1] += seg
            else:
                len_out[count] = seg
                count += 1
        for a in range(3):
            if tnext[a] <= tn:
                knext[a] += kstep[a]
                if knext[a] < 0 or knext[a] > dims[a]:
                    tnext[a] = big
                else:
                    tnext[a] = (lo[a] + knext[a] * spacing[a] - o[a]) / d[a]
        t = tn
    return count


@njit(parallel=True, **_JIT)
def siddon_render(mu, gamma, lo, spacing, src, dirs, tn, tf, hit, emission_out, path_out):
    nz, ny, nx = mu.shape
    dims = np.array([nz, ny, nx], dtype=np.int64)
    cap = nz + ny + nx + 8
    npix = dirs.shape[0]
    for k in prange(npix):
        if not hit[k]:
            emission_out[k] = 0.0
            path_out[k] = 0.0
            continue
        idx = np.empty((cap, 3), dtype=np.int64)
        lens = np.empty(cap)
        cnt = siddon_walk(dims, lo, spacing, src, dirs[k], tn[k], tf[k], idx, lens)
        depth = 0.0
        emission = 0.0
        for j in range(cnt):
            g = gamma[idx[j, 0], idx[j, 1], idx[j, 2]]
            m = mu[idx[j, 0], idx[j, 1], idx[j, 2]]
            emission += math.exp(-depth) * (-math.expm1(-g * lens[j])) * m
            depth += g * lens[j]
        emission_out[k] = emission
        path_out[k] = depth
