"""Spherical primitives: view directions, angular distance and rectangular view regions.

Yaw and pitch are in radians. Yaw is wrapped into [-pi, pi); pitch lives in
[-pi/2, pi/2]. Regions are equirectangular rectangles (per-axis offsets from
a center), optionally with a center that moves along a timed path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

TWO_PI = 2.0 * math.pi
HALF_PI = 0.5 * math.pi


def wrap_yaw(yaw: float) -> float:
    """Wrap an angle into [-pi, pi)."""
    w = math.fmod(yaw + math.pi, TWO_PI)
    if w < 0.0:
        w += TWO_PI
    w -= math.pi
    # fmod + shift can land exactly on +pi through rounding
    if w >= math.pi:
        w -= TWO_PI
    return w


def wrap_yaw_array(yaw: np.ndarray) -> np.ndarray:
    w = np.mod(np.asarray(yaw, dtype=float) + math.pi, TWO_PI) - math.pi
    return np.where(w >= math.pi, w - TWO_PI, w)


@dataclass(frozen=True)
class Direction:
    """A viewing direction. Out-of-range pitch is rejected, yaw is wrapped."""

    yaw: float
    pitch: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.yaw) and math.isfinite(self.pitch)):
            raise ValueError(f"non-finite direction ({self.yaw}, {self.pitch})")
        if not -HALF_PI <= self.pitch <= HALF_PI:
            raise ValueError(f"pitch {self.pitch} outside [-pi/2, pi/2]")
        object.__setattr__(self, "yaw", wrap_yaw(self.yaw))

    def unit(self) -> np.ndarray:
        return to_unit(self.yaw, self.pitch)

    @classmethod
    def from_unit(cls, v: Sequence[float]) -> "Direction":
        yaw, pitch = from_unit(np.asarray(v, dtype=float))
        return cls(float(yaw), float(pitch))

    @classmethod
    def from_degrees(cls, yaw: float, pitch: float) -> "Direction":
        return cls(math.radians(yaw), math.radians(pitch))


def to_unit(yaw, pitch) -> np.ndarray:
    """Unit vector(s) for yaw/pitch; works for scalars and arrays (last axis = xyz)."""
    yaw = np.asarray(yaw, dtype=float)
    pitch = np.asarray(pitch, dtype=float)
    cp = np.cos(pitch)
    return np.stack([cp * np.cos(yaw), cp * np.sin(yaw), np.sin(pitch)], axis=-1)


def from_unit(v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    v = np.asarray(v, dtype=float)
    x, y, z = v[..., 0], v[..., 1], v[..., 2]
    pitch = np.arctan2(z, np.hypot(x, y))
    yaw = wrap_yaw_array(np.arctan2(y, x))
    return yaw, pitch


def angle_between(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Great-circle angle between unit vectors, broadcasting over leading axes.

    Uses atan2(|u x v|, u . v), which stays accurate near 0 and pi. Clustering
    and its brute-force reference both go through this function, so neighbour
    decisions agree bit for bit.
    """
    cross = np.cross(u, v)
    return np.arctan2(np.sqrt(np.sum(cross * cross, axis=-1)), np.sum(u * v, axis=-1))


def angular_distance(a: Direction, b: Direction) -> float:
    """Great-circle distance in [0, pi]."""
    if a == b:
        return 0.0
    return float(angle_between(a.unit(), b.unit()))


def slerp(a: Direction, b: Direction, frac: float) -> Direction:
    """Point a fraction of the way along the shortest great-circle arc from a to b."""
    u, v = a.unit(), b.unit()
    omega = float(angle_between(u, v))
    if omega < 1e-12:
        return a
    s = math.sin(omega)
    w = math.sin((1.0 - frac) * omega) / s * u + math.sin(frac * omega) / s * v
    return Direction.from_unit(w)


def spherical_mean(yaw: np.ndarray, pitch: np.ndarray) -> tuple[Direction, float]:
    """Normalized mean of unit vectors; returns the direction and the raw mean norm."""
    m = to_unit(yaw, pitch).mean(axis=0)
    norm = float(np.linalg.norm(m))
    if norm < 1e-12:
        return Direction(0.0, 0.0), norm
    return Direction.from_unit(m / norm), norm


@dataclass(frozen=True)
class ViewRegion:
    """High-resolution rectangle, static (one path entry) or moving (two or more)."""

    center_path: tuple[tuple[float, Direction], ...]
    yaw_extent: float
    pitch_extent: float

    def __post_init__(self) -> None:
        path = tuple((float(t), d) for t, d in self.center_path)
        if not path:
            raise ValueError("region path must be non-empty")
        for (t0, _), (t1, _) in zip(path, path[1:]):
            if not t1 > t0:
                raise ValueError("region path times must be strictly increasing")
        if not 0.0 < self.yaw_extent <= TWO_PI + 1e-12:
            raise ValueError(f"yaw_extent {self.yaw_extent} outside (0, 2pi]")
        if not 0.0 < self.pitch_extent <= math.pi + 1e-12:
            raise ValueError(f"pitch_extent {self.pitch_extent} outside (0, pi]")
        object.__setattr__(self, "center_path", path)

    @classmethod
    def static(cls, center: Direction, yaw_extent: float, pitch_extent: float) -> "ViewRegion":
        return cls(((0.0, center),), yaw_extent, pitch_extent)

    @classmethod
    def whole_sphere(cls) -> "ViewRegion":
        return cls.static(Direction(0.0, 0.0), TWO_PI, math.pi)

    @property
    def is_moving(self) -> bool:
        return len(self.center_path) > 1

    @property
    def is_whole_sphere(self) -> bool:
        return (
            self.yaw_extent >= TWO_PI
            and self.pitch_extent >= math.pi
            and all(d.pitch == 0.0 for _, d in self.center_path)
        )


def region_center_at(r: ViewRegion, t: float) -> Direction:
    """Piecewise-linear center, yaw along the shortest wrap, clamped outside the path."""
    path = r.center_path
    if len(path) == 1 or t <= path[0][0]:
        return path[0][1]
    if t >= path[-1][0]:
        return path[-1][1]
    times = [p[0] for p in path]
    i = int(np.searchsorted(times, t, side="right")) - 1
    (t0, a), (t1, b) = path[i], path[i + 1]
    frac = (t - t0) / (t1 - t0)
    yaw = a.yaw + frac * wrap_yaw(b.yaw - a.yaw)
    pitch = a.pitch + frac * (b.pitch - a.pitch)
    return Direction(yaw, pitch)


def region_contains(r: ViewRegion, p: Direction, t: float) -> bool:
    c = region_center_at(r, t)
    return (
        abs(wrap_yaw(p.yaw - c.yaw)) <= 0.5 * r.yaw_extent
        and abs(p.pitch - c.pitch) <= 0.5 * r.pitch_extent
    )


def mean_center_pitch(r: ViewRegion) -> float:
    """Time-averaged center pitch (trapezoid over the path)."""
    path = r.center_path
    if len(path) == 1:
        return path[0][1].pitch
    num = 0.0
    for (t0, a), (t1, b) in zip(path, path[1:]):
        num += 0.5 * (a.pitch + b.pitch) * (t1 - t0)
    return num / (path[-1][0] - path[0][0])


def region_area_fraction(r: ViewRegion) -> float:
    """Solid angle of the region over 4 pi, with the pitch band clamped to the poles."""
    cp = mean_center_pitch(r)
    lo = max(cp - 0.5 * r.pitch_extent, -HALF_PI)
    hi = min(cp + 0.5 * r.pitch_extent, HALF_PI)
    yaw_extent = min(r.yaw_extent, TWO_PI)
    omega = yaw_extent * (math.sin(hi) - math.sin(lo))
    return omega / (4.0 * math.pi)
