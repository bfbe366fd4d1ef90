"""Focus detection from training traces: static and moving focuses, near-focus
pairing, the eps sweep and the validation-driven eps tuner."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .clustering import DbscanParams, DegenerateClusterError, Metric, dbscan, summarize_members
from .geometry import Direction, ViewRegion, angle_between, angular_distance, region_center_at, slerp, spherical_mean, to_unit
from .catalog import CopyConfig, build_fist_catalog
from .selector import Policy
from .simulator import NetworkConfig, simulate_session
from .trace import TraceSet

log = logging.getLogger(__name__)

STATIC_DEFAULTS = DbscanParams(eps=0.3, min_samples=100)
DYNAMIC_DEFAULTS = DbscanParams(eps=0.2, min_samples=30, time_scale=1.0)
MAX_PATH_SPEED = math.pi  # rad/s


@dataclass(frozen=True)
class StaticFocus:
    id: str
    center: Direction
    radius: float
    mass: float

    def __post_init__(self) -> None:
        if self.radius < 0 or not 0 < self.mass <= 1:
            raise ValueError("focus radius must be >= 0 and mass in (0, 1]")


@dataclass(frozen=True)
class DynamicFocus:
    id: str
    path: tuple[tuple[float, Direction], ...]
    radius: float
    mass: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "path", tuple((float(t), d) for t, d in self.path))
        if len(self.path) < 2:
            raise ValueError("a dynamic focus path needs at least two entries")
        if any(not b[0] > a[0] for a, b in zip(self.path, self.path[1:])):
            raise ValueError("dynamic focus path times must be strictly increasing")
        if self.radius < 0 or not 0 < self.mass <= 1:
            raise ValueError("focus radius must be >= 0 and mass in (0, 1]")

    def center_at(self, t: float) -> Direction:
        return region_center_at(ViewRegion(self.path, math.pi, math.pi), t)

    @property
    def span(self) -> tuple[float, float]:
        return self.path[0][0], self.path[-1][0]


def detect_static_focuses(train: TraceSet, params: DbscanParams = STATIC_DEFAULTS) -> list[StaticFocus]:
    """Cluster all training samples on direction alone; largest focus first."""
    pts = train.stacked()
    if len(pts) == 0:
        raise ValueError("training set is empty")
    result = dbscan(pts, Metric.STATIC, params)
    found = []
    for c in range(result.n_clusters):
        try:
            s = summarize_members(pts, result.members(c))
        except DegenerateClusterError:
            log.warning("skipping cluster %d: members have no mean direction", c)
            continue
        found.append(s)
    found.sort(key=lambda s: -s.mass)
    return [StaticFocus(f"s{i}", s.center, s.radius, s.mass) for i, s in enumerate(found)]


def _limit_speed(path: list[tuple[float, Direction]]) -> list[tuple[float, Direction]]:
    out = [path[0]]
    for t, d in path[1:]:
        tp, dp = out[-1]
        reach = MAX_PATH_SPEED * (t - tp)
        dist = angular_distance(dp, d)
        if dist > reach:
            d = slerp(dp, d, reach / dist)
        out.append((t, d))
    return out


def _cluster_path(yaw, pitch, t, bin_width: float) -> list[tuple[float, Direction]]:
    bins = np.floor(t / bin_width).astype(np.int64)
    known: list[tuple[float, Direction]] = []
    for b in np.unique(bins):
        sel = bins == b
        center, norm = spherical_mean(yaw[sel], pitch[sel])
        if norm >= 1e-9:
            known.append(((b + 0.5) * bin_width, center))
    if not known:
        raise DegenerateClusterError("no time bin has a mean direction")
    if len(known) == 1 or known[-1][0] - known[0][0] < bin_width * 0.5:
        tc, c = known[0]
        return [(tc - 0.5 * bin_width, c), (tc + 0.5 * bin_width, c)]
    region = ViewRegion(tuple(known), math.pi, math.pi)
    first, last = known[0][0], known[-1][0]
    n_bins = int(round((last - first) / bin_width)) + 1
    full = [(first + k * bin_width, region_center_at(region, first + k * bin_width)) for k in range(n_bins)]
    # keep the measured centers exactly where bins were occupied
    measured = {round(tk / bin_width): d for tk, d in known}
    full = [(tk, measured.get(round(tk / bin_width), d)) for tk, d in full]
    return _limit_speed(full)


def detect_dynamic_focuses(
    train: TraceSet, params: DbscanParams = DYNAMIC_DEFAULTS, bin_width: float = 1.0
) -> list[DynamicFocus]:
    """Cluster samples in (direction, time); each cluster becomes a timed path of bin means."""
    pts = train.stacked()
    if len(pts) == 0:
        raise ValueError("training set is empty")
    result = dbscan(pts, Metric.SPATIOTEMPORAL, params)
    n = len(pts)
    found = []
    for c in range(result.n_clusters):
        idx = result.members(c)
        try:
            path = _cluster_path(pts[idx, 0], pts[idx, 1], pts[idx, 2], bin_width)
        except DegenerateClusterError:
            log.warning("skipping spatiotemporal cluster %d: no mean direction", c)
            continue
        region = ViewRegion(tuple(path), math.pi, math.pi)
        centers = np.array([region_center_at(region, tt).unit() for tt in pts[idx, 2]])
        d = angle_between(to_unit(pts[idx, 0], pts[idx, 1]), centers)
        found.append((len(idx) / n, path, float(np.percentile(d, 90))))
    found.sort(key=lambda f: -f[0])
    return [DynamicFocus(f"d{i}", tuple(path), radius, mass) for i, (mass, path, radius) in enumerate(found)]


def merge_focuses(focuses: Sequence[StaticFocus], merge_threshold: float) -> list[tuple[str, str]]:
    """Every pair of focuses whose centers are within ``merge_threshold``, as id pairs."""
    if merge_threshold <= 0:
        raise ValueError("merge_threshold must be positive")
    pairs = []
    for i, a in enumerate(focuses):
        for b in focuses[i + 1 :]:
            if angular_distance(a.center, b.center) <= merge_threshold:
                pairs.append((a.id, b.id))
    return pairs


def focus_count_sweep(train: TraceSet, eps_grid: Sequence[float], min_samples: int = 100) -> list[tuple[float, int]]:
    grid = [float(e) for e in eps_grid]
    if not grid:
        raise ValueError("eps grid is empty")
    if any(b < a for a, b in zip(grid, grid[1:])):
        raise ValueError("eps grid must be ascending")
    return [(eps, len(detect_static_focuses(train, DbscanParams(eps, min_samples)))) for eps in grid]


def focuses_to_dict(static: Sequence[StaticFocus], dynamic: Sequence[DynamicFocus] = ()) -> dict:
    return {
        "static": [
            {"id": f.id, "yaw": f.center.yaw, "pitch": f.center.pitch, "radius": f.radius, "mass": f.mass}
            for f in static
        ],
        "dynamic": [
            {"id": f.id, "path": [[t, d.yaw, d.pitch] for t, d in f.path], "radius": f.radius, "mass": f.mass}
            for f in dynamic
        ],
    }


def focuses_from_dict(d: dict) -> tuple[list[StaticFocus], list[DynamicFocus]]:
    static = [StaticFocus(f["id"], Direction(f["yaw"], f["pitch"]), f["radius"], f["mass"]) for f in d.get("static", [])]
    dynamic = [
        DynamicFocus(f["id"], tuple((t, Direction(y, p)) for t, y, p in f["path"]), f["radius"], f["mass"])
        for f in d.get("dynamic", [])
    ]
    return static, dynamic


def write_focus_file(path: str | Path, static: Sequence[StaticFocus], dynamic: Sequence[DynamicFocus] = ()) -> None:
    Path(path).write_text(json.dumps(focuses_to_dict(static, dynamic), indent=2) + "\n", encoding="utf-8")


def read_focus_file(path: str | Path) -> tuple[list[StaticFocus], list[DynamicFocus]]:
    return focuses_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class TunerConfig:
    """Step-size search over eps; J is minimized.

    ``switch_norm`` divides switches per minute so the switching term is on the
    same order as the others.
    """

    initial_eps: float = 0.3
    eps_step: float = 0.1
    shrink: float = 0.5
    max_iters: int = 12
    converge_step: float = 0.01
    w_switch: float = 1.0
    w_standstill: float = 1.0
    w_quality: float = 2.0
    w_alpha: float = 0.5
    switch_norm: float = 10.0
    random_direction: bool = False
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0 < self.shrink < 1:
            raise ValueError("shrink must be in (0, 1)")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")
        if self.initial_eps <= 0 or self.eps_step <= 0 or self.converge_step <= 0:
            raise ValueError("eps, step and converge_step must be positive")


@dataclass(frozen=True)
class SimulationConfig:
    """What the tuner simulates on the validation traces."""

    net: NetworkConfig = field(default_factory=lambda: NetworkConfig(bandwidth=0.5))
    copy: CopyConfig = field(default_factory=CopyConfig)
    seed: int = 0


@dataclass(frozen=True)
class TuneStep:
    iteration: int
    eps: float
    score: float
    n_focuses: int
    switches_per_min: float
    standstill_frac: float
    high_quality_rate: float
    alpha: float
    step: float
    direction: int
    improved: bool


def score_eps(
    train: TraceSet, validation: TraceSet, params: DbscanParams, cfg: TunerConfig, sim: SimulationConfig
) -> dict:
    """Detect with ``params`` on train, stream validation with static FIST and compute J."""
    focuses = detect_static_focuses(train, params)
    pairs = merge_focuses(focuses, sim.copy.merge_threshold)
    catalog = build_fist_catalog(focuses, (), pairs, sim.copy)
    reports = [
        simulate_session(tr, catalog, Policy.FIST_STATIC, sim.net, seed=sim.seed + i) for i, tr in enumerate(validation)
    ]
    t_total = math.fsum(r.t_total for r in reports)
    switches_pm = sum(r.switch_count for r in reports) / (t_total / 60.0)
    standstill = math.fsum(r.standstill_s for r in reports) / t_total
    quality = math.fsum(r.t_high for r in reports) / t_total
    alpha = math.fsum(r.bytes for r in reports) / math.fsum(r.full_bytes for r in reports)
    score = (
        cfg.w_switch * switches_pm / cfg.switch_norm
        + cfg.w_standstill * standstill
        - cfg.w_quality * quality
        + cfg.w_alpha * alpha
    )
    return {
        "score": score,
        "n_focuses": len(focuses),
        "switches_per_min": switches_pm,
        "standstill_frac": standstill,
        "high_quality_rate": quality,
        "alpha": alpha,
    }


def step_search(objective: Callable[[float], float], cfg: TunerConfig) -> list[tuple[float, float, float, int, bool]]:
    """Walk eps with a fixed step while the objective improves; on a worse value reverse and shrink the step.

    Probes in a run sit at ``first + k * step`` from the run's first probe, so
    two improvements in a row put the third probe at exactly ``first + 2 * step``.
    Stops when the step falls below ``converge_step`` or after ``max_iters``
    evaluations. Returns ``(eps, score, step, direction, improved)`` per evaluation.
    """
    if cfg.max_iters == 0:
        return []
    direction = 1
    if cfg.random_direction:
        direction = 1 if np.random.default_rng(cfg.seed).random() < 0.5 else -1
    step = cfg.eps_step
    anchor = cfg.initial_eps
    ref = objective(anchor)
    out = [(anchor, ref, step, direction, True)]
    first, k = anchor + direction * step, 0
    while len(out) < cfg.max_iters and step >= cfg.converge_step:
        eps = first + direction * k * step
        clamped = eps <= 0
        if clamped:
            eps = cfg.converge_step
        score = objective(eps)
        improved = not clamped and score < ref
        out.append((eps, score, step, direction, improved))
        if improved:
            ref, anchor = score, eps
            k += 1
        else:
            direction = -direction
            step *= cfg.shrink
            first, k = anchor + direction * step, 0
    return out


def tune_eps(
    train: TraceSet,
    validation: TraceSet,
    base: DbscanParams = STATIC_DEFAULTS,
    cfg: TunerConfig | None = None,
    sim: SimulationConfig | None = None,
) -> tuple[DbscanParams, list[TuneStep]]:
    """Tune eps against J on the validation set; min_samples stays fixed.

    Returns the best eps evaluated and the per-evaluation history.
    """
    cfg = cfg or TunerConfig(initial_eps=base.eps)
    sim = sim or SimulationConfig()
    if len(train) == 0 or len(validation) == 0:
        raise ValueError("train and validation sets must be non-empty")
    cache: dict[float, dict] = {}

    def objective(eps: float) -> float:
        if eps not in cache:
            cache[eps] = score_eps(train, validation, base.with_eps(eps), cfg, sim)
        return cache[eps]["score"]

    probes = step_search(objective, cfg)
    if not probes:
        return base, []
    history = [
        TuneStep(i, eps, score, cache[eps]["n_focuses"], cache[eps]["switches_per_min"], cache[eps]["standstill_frac"],
                 cache[eps]["high_quality_rate"], cache[eps]["alpha"], step, direction, improved)
        for i, (eps, score, step, direction, improved) in enumerate(probes)
    ]
    best = min(history, key=lambda h: (h.score, h.iteration))
    return base.with_eps(best.eps), history
