"""Pinhole cameras on an orbit around the volume, pose sampling and ray bundles.

Directions follow the world axis order ``(z, y, x)``. The reference pose
(all angles zero) looks along +y (anterior to posterior) with +z up.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np

from .volume import Aabb

DEFAULT_DISTANCE = 1000.0
DEFAULT_FOV = 20.0
DEFAULT_IMAGE_SIZE = (256, 256)
MAX_RESAMPLES = 16


class DegeneratePoseError(ValueError):
    pass


def _unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    return v / np.linalg.norm(v)


def _orbit_frame(yaw: float, pitch: float):
    y, p = math.radians(yaw), math.radians(pitch)
    forward = np.array([math.sin(p), math.cos(p) * math.cos(y), math.cos(p) * math.sin(y)])
    up0 = np.array([math.cos(p), -math.sin(p) * math.cos(y), -math.sin(p) * math.sin(y)])
    right0 = np.cross(forward, up0)
    return forward, up0, right0


@dataclass(frozen=True)
class Pose:
    """Camera pose as an orbit about ``target``.

    ``yaw`` turns about the z axis, ``pitch`` tilts toward +z and ``roll``
    spins the image about the view direction; all in degrees. The source sits
    ``distance`` millimeters behind the target along the view direction.
    """

    target: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    yaw: float = 0.0
    pitch: float = 0.0
    roll: float = 0.0
    distance: float = DEFAULT_DISTANCE

    def __post_init__(self):
        object.__setattr__(self, "target", tuple(float(c) for c in self.target))
        if not self.distance > 0:
            raise DegeneratePoseError(f"source must differ from target (distance={self.distance})")

    @classmethod
    def look_at(cls, source, target, up=(1.0, 0.0, 0.0)) -> "Pose":
        source = np.asarray(source, dtype=np.float64)
        target = np.asarray(target, dtype=np.float64)
        offset = target - source
        distance = float(np.linalg.norm(offset))
        if distance == 0.0:
            raise DegeneratePoseError("source coincides with target")
        forward = offset / distance
        up = np.asarray(up, dtype=np.float64)
        up = up - np.dot(up, forward) * forward
        if np.linalg.norm(up) < 1e-12:
            raise DegeneratePoseError("up hint is parallel to the view direction")
        up = up / np.linalg.norm(up)
        pitch = math.degrees(math.asin(max(-1.0, min(1.0, forward[0]))))
        yaw = math.degrees(math.atan2(forward[2], forward[1]))
        _, up0, right0 = _orbit_frame(yaw, pitch)
        roll = math.degrees(math.atan2(np.dot(up, right0), np.dot(up, up0)))
        return cls(tuple(target), yaw, pitch, roll, distance)

    def frame(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return orthonormal ``(forward, up, right)``."""
        forward, up0, right0 = _orbit_frame(self.yaw, self.pitch)
        r = math.radians(self.roll)
        up = math.cos(r) * up0 + math.sin(r) * right0
        right = np.cross(forward, up)
        return forward, up, right

    @property
    def source(self) -> np.ndarray:
        forward, _, _ = self.frame()
        return np.asarray(self.target) - self.distance * forward

    @property
    def forward(self) -> np.ndarray:
        return self.frame()[0]

    def as_dict(self) -> dict:
        return {
            "yaw": self.yaw,
            "pitch": self.pitch,
            "roll": self.roll,
            "distance": self.distance,
            "target": list(self.target),
        }


@dataclass(frozen=True)
class Camera:
    pose: Pose = Pose()
    fov: float = DEFAULT_FOV
    image_size: Tuple[int, int] = DEFAULT_IMAGE_SIZE

    def __post_init__(self):
        if not 0.0 < self.fov < 180.0:
            raise ValueError(f"vertical FoV must be in (0, 180) degrees, got {self.fov}")
        rows, cols = (int(v) for v in self.image_size)
        if rows < 1 or cols < 1:
            raise ValueError(f"image size must be at least 1x1, got {self.image_size}")
        object.__setattr__(self, "image_size", (rows, cols))

    @property
    def rows(self) -> int:
        return self.image_size[0]

    @property
    def cols(self) -> int:
        return self.image_size[1]


@dataclass(frozen=True)
class ProximityParams:
    """Half-widths of the uniform intervals around a base camera.

    ``distance`` is a fraction of the base distance; the rest are degrees.
    """

    yaw: float = 10.0
    pitch: float = 10.0
    roll: float = 5.0
    distance: float = 0.1
    fov: float = 5.0

    def __post_init__(self):
        for name in ("yaw", "pitch", "roll", "distance", "fov"):
            if getattr(self, name) < 0:
                raise ValueError(f"proximity half-width {name} must be nonnegative")

    @classmethod
    def zero(cls) -> "ProximityParams":
        return cls(0.0, 0.0, 0.0, 0.0, 0.0)

    @classmethod
    def parse(cls, text: str) -> "ProximityParams":
        parts = [float(p) for p in text.split(",")]
        if len(parts) != 5:
            raise ValueError("proximity takes five comma-separated values: yaw,pitch,roll,dist,fov")
        return cls(*parts)


def _offset(rng: np.random.Generator, half: float) -> float:
    # a zero-width interval must not consume randomness or perturb the value
    return float(rng.uniform(-half, half)) if half > 0 else 0.0


def sample_pose(base: Pose, prox: ProximityParams, rng: np.random.Generator) -> Pose:
    """Draw a pose uniformly from the proximity box around ``base``."""
    for _ in range(MAX_RESAMPLES):
        yaw = base.yaw + _offset(rng, prox.yaw)
        pitch = base.pitch + _offset(rng, prox.pitch)
        roll = base.roll + _offset(rng, prox.roll)
        distance = base.distance * (1.0 + _offset(rng, prox.distance))
        if distance > 0:
            return replace(base, yaw=yaw, pitch=pitch, roll=roll, distance=distance)
    raise DegeneratePoseError(f"no valid pose after {MAX_RESAMPLES} draws")


def sample_camera(base: Camera, prox: ProximityParams, rng: np.random.Generator) -> Camera:
    """Like :func:`sample_pose`, additionally jittering the vertical FoV."""
    pose = sample_pose(base.pose, prox, rng)
    for _ in range(MAX_RESAMPLES):
        fov = base.fov + _offset(rng, prox.fov)
        if 0.0 < fov < 180.0:
            return replace(base, pose=pose, fov=fov)
    raise DegeneratePoseError(f"no valid FoV after {MAX_RESAMPLES} draws")


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray
    t_near: float = 0.0
    t_far: float = 0.0

    @property
    def hits(self) -> bool:
        return self.t_far > self.t_near

    def at(self, t) -> np.ndarray:
        return self.origin + np.multiply.outer(t, self.direction)


@dataclass(frozen=True)
class RayBundle:
    """Per-pixel rays sharing one source; arrays are indexed ``[row, col]``."""

    origin: np.ndarray
    directions: np.ndarray
    t_near: np.ndarray
    t_far: np.ndarray
    hit: np.ndarray

    @property
    def shape(self) -> Tuple[int, int]:
        return self.hit.shape

    def ray(self, row: int, col: int) -> Ray:
        return Ray(self.origin, self.directions[row, col], float(self.t_near[row, col]), float(self.t_far[row, col]))


def ray_aabb(origin, direction, bounds: Aabb) -> Optional[Tuple[float, float]]:
    """Slab test. Returns ``(t_near, t_far)`` with ``t_near`` clamped to 0, or None."""
    origin = np.asarray(origin, dtype=np.float64)
    direction = np.asarray(direction, dtype=np.float64)
    t_near, t_far = -math.inf, math.inf
    for a in range(3):
        if direction[a] == 0.0:
            if origin[a] < bounds.lo[a] or origin[a] > bounds.hi[a]:
                return None
            continue
        t1 = (bounds.lo[a] - origin[a]) / direction[a]
        t2 = (bounds.hi[a] - origin[a]) / direction[a]
        if t1 > t2:
            t1, t2 = t2, t1
        t_near = max(t_near, t1)
        t_far = min(t_far, t2)
    if t_near > t_far or t_far < 0:
        return None
    return max(t_near, 0.0), t_far


def _slab_batch(origin, dirs, bounds: Aabb):
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
        t1 = (bounds.lo - origin) * inv
        t2 = (bounds.hi - origin) * inv
    lo_t = np.minimum(t1, t2)
    hi_t = np.maximum(t1, t2)
    parallel = dirs == 0.0
    outside = (origin < bounds.lo) | (origin > bounds.hi)
    lo_t = np.where(parallel, -np.inf, lo_t)
    hi_t = np.where(parallel, np.inf, hi_t)
    t_near = lo_t.max(axis=-1)
    t_far = hi_t.min(axis=-1)
    miss = (t_near > t_far) | (t_far < 0) | np.any(parallel & outside, axis=-1)
    t_near = np.maximum(t_near, 0.0)
    hit = ~miss & (t_far > t_near)
    t_near = np.where(hit, t_near, 0.0)
    t_far = np.where(hit, t_far, 0.0)
    return t_near, t_far, hit


def pixel_directions(cam: Camera) -> np.ndarray:
    """Unit directions through pixel centers, shape ``(rows, cols, 3)``.

    Row 0 is the top of the image (toward ``up``); column 0 is on the left.
    """
    forward, up, right = cam.pose.frame()
    rows, cols = cam.image_size
    pitch = 2.0 * math.tan(math.radians(cam.fov) / 2.0) / rows
    v = ((rows - 1) / 2.0 - np.arange(rows)) * pitch
    u = (np.arange(cols) - (cols - 1) / 2.0) * pitch
    dirs = forward + v[:, None, None] * up + u[None, :, None] * right
    return dirs / np.linalg.norm(dirs, axis=-1, keepdims=True)


def generate_rays(cam: Camera, bounds: Aabb) -> RayBundle:
    origin = cam.pose.source
    dirs = pixel_directions(cam)
    t_near, t_far, hit = _slab_batch(origin, dirs, bounds)
    return RayBundle(origin, dirs, t_near, t_far, hit)
