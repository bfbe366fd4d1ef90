"""Synthetic watching traces with known ground-truth focuses.

Each simulated user alternates between dwelling near a focus (picked by weight)
and short bouts of wandering, where the gaze hops between uniformly random
directions. Head motion is capped at ``max_speed``; dwelling adds an
Ornstein-Uhlenbeck jitter whose stationary spread is ``noise_sigma`` per
tangent axis.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import Direction, ViewRegion, from_unit, region_center_at
from .trace import Trace, TraceSet


@dataclass(frozen=True)
class FocusSpec:
    """A true focus: a fixed direction, or a timed path for a moving focus."""

    path: tuple[tuple[float, Direction], ...]
    dwell_mean: float = 20.0
    weight: float = 1.0

    def __post_init__(self) -> None:
        if self.weight <= 0:
            raise ValueError("focus weight must be positive")
        if self.dwell_mean <= 0:
            raise ValueError("dwell_mean must be positive")
        object.__setattr__(self, "_region", ViewRegion(self.path, math.pi, math.pi / 2))

    @classmethod
    def static(cls, center: Direction, dwell_mean: float = 20.0, weight: float = 1.0) -> "FocusSpec":
        return cls(((0.0, center),), dwell_mean, weight)

    @property
    def is_moving(self) -> bool:
        return len(self.path) > 1

    def at(self, t: float) -> Direction:
        return region_center_at(self._region, t)  # type: ignore[attr-defined]

    def to_dict(self) -> dict:
        return {
            "path": [[t, d.yaw, d.pitch] for t, d in self.path],
            "dwell_mean": self.dwell_mean,
            "weight": self.weight,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FocusSpec":
        if "path" in d:
            path = tuple((float(t), Direction(float(y), float(p))) for t, y, p in d["path"])
        else:
            path = ((0.0, Direction(float(d["yaw"]), float(d["pitch"]))),)
        return cls(path, float(d.get("dwell_mean", 20.0)), float(d.get("weight", 1.0)))


@dataclass(frozen=True)
class SyntheticSpec:
    focuses: tuple[FocusSpec, ...]
    noise_sigma: float = 0.05
    wander_fraction: float = 0.15
    n_users: int = 50
    duration: float = 120.0
    sample_rate: float = 10.0
    seed: int = 42
    max_speed: float = math.radians(120.0)
    wander_mean: float = 2.0
    glance_mean: float = 0.3
    noise_tau: float = 0.3
    video_id: str = "synthetic"

    def __post_init__(self) -> None:
        object.__setattr__(self, "focuses", tuple(self.focuses))
        if not 0.0 <= self.wander_fraction <= 1.0:
            raise ValueError("wander_fraction must be in [0, 1]")
        if not self.focuses and self.wander_fraction < 1.0:
            raise ValueError("without focuses wander_fraction must be 1")
        if self.n_users < 0 or self.duration <= 0 or self.sample_rate <= 0:
            raise ValueError("n_users, duration and sample_rate must be positive")
        if self.noise_sigma < 0 or self.max_speed <= 0:
            raise ValueError("noise_sigma must be >= 0 and max_speed > 0")

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "focuses"}
        d["focuses"] = [f.to_dict() for f in self.focuses]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        d = dict(d)
        focuses = tuple(FocusSpec.from_dict(f) for f in d.pop("focuses", ()))
        return cls(focuses=focuses, **d)


def _exp_map(center: np.ndarray, yaw: float, pitch: float, a: float, b: float) -> np.ndarray:
    r = math.hypot(a, b)
    if r < 1e-15:
        return center
    east = np.array([-math.sin(yaw), math.cos(yaw), 0.0])
    north = np.array([-math.sin(pitch) * math.cos(yaw), -math.sin(pitch) * math.sin(yaw), math.cos(pitch)])
    tangent = (a * east + b * north) / r
    return math.cos(r) * center + math.sin(r) * tangent


def _step_toward(pos: np.ndarray, goal: np.ndarray, max_angle: float) -> tuple[np.ndarray, bool]:
    cosang = min(1.0, max(-1.0, float(pos @ goal)))
    omega = math.acos(cosang)
    if omega <= max_angle:
        return goal, True
    s = math.sin(omega)
    if s < 1e-12:
        # antipodal goal: any great circle works, pick one through the pole
        axis = np.array([0.0, 0.0, 1.0]) if abs(pos[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
        ortho = axis - (axis @ pos) * pos
        ortho /= np.linalg.norm(ortho)
        return math.cos(max_angle) * pos + math.sin(max_angle) * ortho, False
    f = max_angle / omega
    out = (math.sin((1 - f) * omega) * pos + math.sin(f * omega) * goal) / s
    return out / np.linalg.norm(out), False


def _uniform_direction(rng: np.random.Generator) -> Direction:
    z = rng.uniform(-1.0, 1.0)
    yaw = rng.uniform(-math.pi, math.pi)
    return Direction(yaw, math.asin(z))


def _simulate_user(spec: SyntheticSpec, user_id: str, rng: np.random.Generator) -> Trace:
    dt = 1.0 / spec.sample_rate
    n = int(math.floor(spec.duration * spec.sample_rate + 1e-9)) + 1
    times = np.arange(n) * dt
    max_step = spec.max_speed * dt
    weights = np.array([f.weight for f in spec.focuses], dtype=float)
    weights = weights / weights.sum() if len(weights) else weights
    rho = math.exp(-dt / spec.noise_tau) if spec.noise_tau > 0 else 0.0
    innov = spec.noise_sigma * math.sqrt(1.0 - rho * rho)
    noise = rng.normal(0.0, spec.noise_sigma, size=2) if spec.noise_sigma > 0 else np.zeros(2)

    def next_episode(t: float):
        if rng.random() < spec.wander_fraction:
            return {"wander_until": t + rng.exponential(spec.wander_mean), "target": None}
        k = int(rng.choice(len(weights), p=weights))
        f = spec.focuses[k]
        return {"wander_until": None, "target": f.at, "hold": rng.exponential(f.dwell_mean)}

    def next_glance(ep: dict) -> None:
        d = _uniform_direction(rng)
        ep["target"] = lambda _t, d=d: d
        ep["hold"] = rng.exponential(spec.glance_mean)

    ep = next_episode(0.0)
    if ep["target"] is None:
        next_glance(ep)
    holding, hold_end = True, ep["hold"]
    pos = None
    out = np.empty((n, 3))
    for i, t in enumerate(times):
        base = ep["target"](t)
        goal = _exp_map(base.unit(), base.yaw, base.pitch, noise[0], noise[1])
        if pos is None:
            pos = goal
        else:
            pos, arrived = _step_toward(pos, goal, max_step)
            if not holding and arrived:
                holding, hold_end = True, t + ep["hold"]
        out[i] = pos
        if spec.noise_sigma > 0:
            noise = rho * noise + innov * rng.standard_normal(2)
        if holding and t + dt > hold_end:
            if ep["wander_until"] is not None and t + dt < ep["wander_until"]:
                next_glance(ep)
            else:
                ep = next_episode(t + dt)
                if ep["target"] is None:
                    next_glance(ep)
            holding = False
    yaw, pitch = from_unit(out)
    return Trace(user_id, times, yaw, np.clip(pitch, -math.pi / 2, math.pi / 2), np.zeros(n))


def synth_traces(spec: SyntheticSpec) -> TraceSet:
    """Generate ``spec.n_users`` traces; identical specs give identical output."""
    children = np.random.SeedSequence(spec.seed).spawn(spec.n_users)
    traces = tuple(
        _simulate_user(spec, str(101 + i), np.random.default_rng(child)) for i, child in enumerate(children)
    )
    return TraceSet(spec.video_id, traces)


def reference_spec(seed: int = 42, **overrides) -> SyntheticSpec:
    """Three static focuses, 50 users, 120 s at 10 Hz, 15 % wandering."""
    focuses = (
        FocusSpec.static(Direction(-2.1, 0.15), dwell_mean=40.0),
        FocusSpec.static(Direction(0.5, -0.1), dwell_mean=40.0),
        FocusSpec.static(Direction(2.3, 0.35), dwell_mean=40.0),
    )
    kw = dict(focuses=focuses, noise_sigma=0.05, wander_fraction=0.15, n_users=50, duration=120.0,
              sample_rate=10.0, max_speed=3.0, seed=seed, video_id="reference")
    kw.update(overrides)
    return SyntheticSpec(**kw)


def moving_spec(seed: int = 42, **overrides) -> SyntheticSpec:
    """One focus sweeping yaw 0 -> 2 rad over the first minute and back over the second."""
    path = (
        (0.0, Direction(0.0, 0.0)),
        (60.0, Direction(2.0, 0.0)),
        (120.0, Direction(0.0, 0.0)),
    )
    kw = dict(focuses=(FocusSpec(path, dwell_mean=40.0),), noise_sigma=0.05, wander_fraction=0.15,
              n_users=50, duration=120.0, sample_rate=10.0, max_speed=3.0, seed=seed,
              video_id="moving")
    kw.update(overrides)
    return SyntheticSpec(**kw)


def write_ground_truth(spec: SyntheticSpec, path: str | Path) -> None:
    Path(path).write_text(json.dumps(spec.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
