"""Transfer functions and the two-channel radiance volume.

The matter channel is a unitless emission amplitude; the opacity channel is
an attenuation coefficient per millimeter. The opacity channel's peak is held
to at most one hundredth of the matter channel's peak.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Sequence, Tuple

import numpy as np

from .volume import Grid, NormalizedVolume

logger = logging.getLogger(__name__)

BANDWIDTH_RATIO = 100.0


class BandwidthWarning(UserWarning):
    """The opacity transfer function was rescaled to respect the bandwidth cap."""


@dataclass(frozen=True)
class TransferFunction:
    """Piecewise-linear lookup table on normalized intensity.

    ``xs`` must start at 0, end at 1 and increase strictly; ``ys`` must be
    finite and nonnegative.
    """

    xs: np.ndarray
    ys: np.ndarray

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=np.float64).ravel()
        ys = np.asarray(self.ys, dtype=np.float64).ravel()
        if xs.shape != ys.shape or xs.size < 2:
            raise ValueError("a transfer function needs at least two (input, output) pairs")
        if not np.all(np.diff(xs) > 0):
            raise ValueError("control-point inputs must be strictly increasing")
        if xs[0] != 0.0 or xs[-1] != 1.0:
            raise ValueError("control-point inputs must span exactly [0, 1]")
        if not np.all(np.isfinite(ys)) or np.any(ys < 0):
            raise ValueError("control-point outputs must be finite and nonnegative")
        xs.setflags(write=False)
        ys.setflags(write=False)
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)

    @classmethod
    def from_points(cls, points: Sequence[Tuple[float, float]]) -> "TransferFunction":
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError("points must be a sequence of (input, output) pairs")
        return cls(pts[:, 0], pts[:, 1])

    @classmethod
    def constant(cls, value: float) -> "TransferFunction":
        return cls([0.0, 1.0], [value, value])

    @property
    def bandwidth(self) -> float:
        # piecewise linear: the maximum is attained at a control point
        return float(self.ys.max())

    def scaled(self, factor: float) -> "TransferFunction":
        return TransferFunction(self.xs, self.ys * factor)

    def slope(self, x) -> np.ndarray:
        """Derivative of the lookup with respect to its input (right-continuous)."""
        x = np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0)
        seg = np.clip(np.searchsorted(self.xs, x, side="right") - 1, 0, self.xs.size - 2)
        return (self.ys[seg + 1] - self.ys[seg]) / (self.xs[seg + 1] - self.xs[seg])

    def to_points(self):
        return [[float(a), float(b)] for a, b in zip(self.xs, self.ys)]


def eval_tf(tf: TransferFunction, x):
    """Evaluate ``tf`` at ``x`` (scalar or array); inputs are clamped to [0, 1]."""
    out = np.interp(np.clip(x, 0.0, 1.0), tf.xs, tf.ys)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class RadianceVolume:
    grid: Grid
    matter: np.ndarray
    opacity: np.ndarray

    def __post_init__(self):
        mu = np.ascontiguousarray(self.matter, dtype=np.float64)
        gamma = np.ascontiguousarray(self.opacity, dtype=np.float64)
        for name, f in (("matter", mu), ("opacity", gamma)):
            if f.shape != self.grid.dims:
                raise ValueError(f"{name} field shape {f.shape} does not match dims {self.grid.dims}")
            if np.any(f < 0) or not np.all(np.isfinite(f)):
                raise ValueError(f"{name} field must be finite and nonnegative")
            f.setflags(write=False)
        object.__setattr__(self, "matter", mu)
        object.__setattr__(self, "opacity", gamma)

    @property
    def bounds(self):
        return self.grid.bounds

    def satisfies_bandwidth(self, atol: float = 1e-9) -> bool:
        return bool(self.opacity.max() <= self.matter.max() / BANDWIDTH_RATIO + atol)


def map_fields(vol: NormalizedVolume, tf_mu: TransferFunction, tf_gamma: TransferFunction) -> RadianceVolume:
    """Map a normalized volume to matter and opacity fields voxel by voxel.

    If ``tf_gamma`` peaks above ``tf_mu.bandwidth / 100`` it is scaled down to
    exactly that cap and a :class:`BandwidthWarning` is issued.
    """
    cap = tf_mu.bandwidth / BANDWIDTH_RATIO
    if tf_gamma.bandwidth > cap:
        factor = cap / tf_gamma.bandwidth
        msg = (
            f"opacity bandwidth {tf_gamma.bandwidth:g} exceeds matter bandwidth / {BANDWIDTH_RATIO:g} "
            f"= {cap:g}; rescaling opacity by {factor:g}"
        )
        warnings.warn(msg, BandwidthWarning, stacklevel=2)
        logger.warning(msg)
        tf_gamma = tf_gamma.scaled(factor)
    mu = np.interp(vol.voxels, tf_mu.xs, tf_mu.ys)
    gamma = np.interp(vol.voxels, tf_gamma.xs, tf_gamma.ys)
    # guards the realized fields, whose peaks may sit below the lookup peaks
    peak = mu.max() / BANDWIDTH_RATIO if mu.size else 0.0
    if gamma.size and gamma.max() > peak:
        msg = f"realized opacity peak {gamma.max():g} exceeds realized matter peak / {BANDWIDTH_RATIO:g}; clipping"
        warnings.warn(msg, BandwidthWarning, stacklevel=2)
        logger.warning(msg)
        gamma = np.minimum(gamma, peak)
    return RadianceVolume(vol.grid, mu, gamma)


# normalized intensity under the default window (-1024, 3071):
# -1000 HU -> 0.006, 0 HU -> 0.250, 300 HU -> 0.323, 1000 HU -> 0.494
PRESETS: Dict[str, Tuple[TransferFunction, TransferFunction]] = {
    "bone": (
        TransferFunction([0.0, 0.24, 0.3, 0.45, 1.0], [0.0, 0.02, 0.1, 1.0, 1.0]),
        TransferFunction([0.0, 0.24, 0.3, 0.45, 1.0], [0.0, 0.0002, 0.001, 0.01, 0.01]),
    ),
    "soft-tissue": (
        TransferFunction([0.0, 0.2, 0.26, 0.35, 1.0], [0.0, 0.0, 0.6, 1.0, 1.0]),
        TransferFunction([0.0, 0.2, 0.26, 0.35, 1.0], [0.0, 0.0, 0.004, 0.006, 0.01]),
    ),
    "flat": (
        TransferFunction([0.0, 1.0], [0.0, 1.0]),
        TransferFunction([0.0, 1.0], [0.0, 0.01]),
    ),
}


def preset(name: str) -> Tuple[TransferFunction, TransferFunction]:
    try:
        return PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown transfer preset {name!r}; choose from {sorted(PRESETS)}") from None


def load_transfer(path) -> Tuple[TransferFunction, TransferFunction]:
    """Read ``{"mu": [[x, y], ...], "gamma": [[x, y], ...]}`` from a JSON file."""
    data = json.loads(Path(path).read_text())
    try:
        return TransferFunction.from_points(data["mu"]), TransferFunction.from_points(data["gamma"])
    except KeyError as exc:
        raise ValueError(f"transfer file {path} lacks channel {exc}") from None


def save_transfer(path, tf_mu: TransferFunction, tf_gamma: TransferFunction) -> None:
    Path(path).write_text(json.dumps({"mu": tf_mu.to_points(), "gamma": tf_gamma.to_points()}, indent=2))
