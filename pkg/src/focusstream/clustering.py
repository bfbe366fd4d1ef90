"""DBSCAN over view directions, with a purely spherical metric or a spatiotemporal one.

Neighbour search is exact. The spherical metric uses a chord-space cell grid so
dense areas need no per-point neighbour lists; the spatiotemporal metric uses a
KD-tree candidate search followed by exact filtering. Either way the result
equals the textbook algorithm run over the points in input order.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .geometry import Direction, angle_between, spherical_mean, to_unit

NOISE = -1
_REL = 1e-9
_BRUTE_PAIRS = 40_000  # above this, cell pairs are linked via a KD-tree query instead of all pairs


class Metric(enum.Enum):
    STATIC = "static"
    SPATIOTEMPORAL = "spatiotemporal"


class PointKind(enum.IntEnum):
    CORE = 0
    BORDER = 1
    NOISE = 2


class DegenerateClusterError(ValueError):
    """Cluster members cancel out (mean unit vector ~ 0), so no center exists."""


@dataclass(frozen=True)
class DbscanParams:
    eps: float
    min_samples: int
    time_scale: float = 1.0  # seconds per radian, spatiotemporal metric only

    def __post_init__(self) -> None:
        if not (math.isfinite(self.eps) and self.eps > 0):
            raise ValueError(f"eps must be finite and positive, got {self.eps}")
        if int(self.min_samples) != self.min_samples or self.min_samples < 1:
            raise ValueError(f"min_samples must be an integer >= 1, got {self.min_samples}")
        if not self.time_scale > 0:
            raise ValueError("time_scale must be positive")

    def with_eps(self, eps: float) -> "DbscanParams":
        return DbscanParams(eps, self.min_samples, self.time_scale)


@dataclass(frozen=True, eq=False)
class ClusterResult:
    labels: np.ndarray  # cluster id >= 0, or NOISE
    point_kind: np.ndarray  # PointKind values
    n_clusters: int

    def members(self, cluster: int) -> np.ndarray:
        return np.flatnonzero(self.labels == cluster)


@dataclass(frozen=True)
class ClusterSummary:
    center: Direction
    radius: float
    mass: float
    t_min: float
    t_max: float
    size: int


def as_points(points) -> np.ndarray:
    """Normalise input to an (n, 3) float array of yaw, pitch, t.

    Accepts such an array directly or a sequence of ``(Direction, t)`` pairs.
    """
    if isinstance(points, np.ndarray):
        arr = np.asarray(points, dtype=float)
    else:
        seq = list(points)
        arr = np.array([[d.yaw, d.pitch, float(t)] for d, t in seq], dtype=float).reshape(len(seq), 3)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError("points must have shape (n, 3): yaw, pitch, t")
    return arr


def metric_distance(u_a, t_a, u_b, t_b, metric: Metric, time_scale: float = 1.0) -> np.ndarray:
    """Distance under ``metric`` between unit vectors/times, broadcasting.

    This is the single definition of the metric; the fast paths below only use
    approximations to find candidates and always confirm with this function.
    """
    ang = angle_between(u_a, u_b)
    if metric is Metric.STATIC:
        return ang
    dt = (np.asarray(t_a) - np.asarray(t_b)) / time_scale
    return np.sqrt(ang * ang + dt * dt)


def distance_matrix(points, metric: Metric, time_scale: float = 1.0) -> np.ndarray:
    p = as_points(points)
    u = to_unit(p[:, 0], p[:, 1])
    return metric_distance(u[:, None, :], p[:, 2][:, None], u[None, :, :], p[:, 2][None, :], metric, time_scale)


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, a: int) -> int:
        parent = self.parent
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def _chord(eps: float) -> float:
    return 2.0 * math.sin(0.5 * min(eps, math.pi))


def _pairwise_structure(u: np.ndarray, t: np.ndarray, metric: Metric, params: DbscanParams):
    """Core mask, core component ids and core-neighbour lists via explicit pair enumeration."""
    n = u.shape[0]
    eps = params.eps
    if metric is Metric.STATIC:
        emb = u
        radius = _chord(eps) * (1 + _REL) + 1e-12
    else:
        # chord <= angle, so 4-d euclidean distance never exceeds the metric
        emb = np.column_stack([u, t / params.time_scale])
        radius = eps * (1 + _REL) + 1e-12
    pairs = cKDTree(emb).query_pairs(radius, output_type="ndarray")
    if len(pairs):
        i, j = pairs[:, 0], pairs[:, 1]
        d = metric_distance(u[i], t[i], u[j], t[j], metric, params.time_scale)
        keep = d <= eps
        i, j = i[keep], j[keep]
    else:
        i = j = np.zeros(0, dtype=np.intp)
    counts = 1 + np.bincount(i, minlength=n) + np.bincount(j, minlength=n)
    core = counts >= params.min_samples
    cc = core[i] & core[j]
    graph = coo_matrix((np.ones(int(cc.sum())), (i[cc], j[cc])), shape=(n, n))
    _, comp = connected_components(graph, directed=False)
    # (non-core point, core neighbour) incidences for border assignment
    border_pt = np.concatenate([i[~core[i] & core[j]], j[core[i] & ~core[j]]])
    border_core = np.concatenate([j[~core[i] & core[j]], i[core[i] & ~core[j]]])
    return core, comp, border_pt, border_core


def _static_structure(u: np.ndarray, params: DbscanParams):
    """Core mask and core components for the spherical metric using a cell grid.

    Cells have a diagonal shorter than the eps chord, so every pair inside one
    cell are neighbours: a cell holding ``min_samples`` points is all core and
    its cores form one connected piece. Only points in sparse cells are counted
    individually, and only cell pairs within reach are tested for a linking pair.
    """
    n = u.shape[0]
    eps, m = params.eps, params.min_samples
    if eps >= math.pi:
        core = np.full(n, n >= m)
        return core, np.zeros(n, dtype=np.intp), None
    r = _chord(eps)
    r_lo, r_hi = r * (1 - _REL), r * (1 + _REL) + 1e-15
    side = r / math.sqrt(3.0) * (1 - 1e-6)
    keys = np.floor(u / side).astype(np.int64)
    ukeys, cell = np.unique(keys, axis=0, return_inverse=True)
    cell = cell.reshape(-1)
    cell_size = np.bincount(cell)

    core = cell_size[cell] >= m
    tree = cKDTree(u)
    todo = np.flatnonzero(~core)
    if len(todo):
        lo = tree.query_ball_point(u[todo], r_lo, return_length=True)
        hi = tree.query_ball_point(u[todo], r_hi, return_length=True)
        counts = lo.copy()
        for k in np.flatnonzero(lo != hi):
            p = todo[k]
            cand = np.asarray(tree.query_ball_point(u[p], r_hi), dtype=np.intp)
            counts[k] = int(np.count_nonzero(angle_between(u[p], u[cand]) <= eps))
        core[todo] = counts >= m

    core_idx = np.flatnonzero(core)
    comp = np.full(n, -1, dtype=np.intp)
    if len(core_idx) == 0:
        return core, comp, tree
    core_cells = np.unique(cell[core_idx])
    members = {c: core_idx[cell[core_idx] == c] for c in core_cells.tolist()}
    key_of = {tuple(ukeys[c]): c for c in core_cells.tolist()}
    offsets = []
    for dx in range(-2, 3):
        for dy in range(-2, 3):
            for dz in range(-2, 3):
                o = (dx, dy, dz)
                if o <= (0, 0, 0):
                    continue
                gap = side * math.sqrt(sum(max(abs(v) - 1, 0) ** 2 for v in o))
                if gap <= r_hi:
                    offsets.append(o)
    trees: dict[int, cKDTree] = {}
    uf = _UnionFind(len(ukeys))

    def linked(a: int, b: int) -> bool:
        pa, pb = members[a], members[b]
        if len(pa) * len(pb) <= _BRUTE_PAIRS:
            return bool(np.any(angle_between(u[pa][:, None, :], u[pb][None, :, :]) <= eps))
        if len(pa) > len(pb):
            pa, pb, b = pb, pa, a
        if b not in trees:
            trees[b] = cKDTree(u[members[b]])
        d, j = trees[b].query(u[pa], k=1, distance_upper_bound=r_hi)
        hit = np.isfinite(d)
        if not hit.any():
            return False
        return bool(np.any(angle_between(u[pa[hit]], u[pb[j[hit]]]) <= eps))

    for c in core_cells.tolist():
        kc = ukeys[c]
        for o in offsets:
            other = key_of.get((kc[0] + o[0], kc[1] + o[1], kc[2] + o[2]))
            if other is None or uf.find(c) == uf.find(other):
                continue
            if linked(c, other):
                uf.union(c, other)
    comp[core_idx] = [uf.find(c) for c in cell[core_idx].tolist()]
    return core, comp, tree


def dbscan(points, metric: Metric, params: DbscanParams) -> ClusterResult:
    """Cluster points given as (n, 3) yaw/pitch/t or ``(Direction, t)`` pairs.

    A point is core when at least ``min_samples`` points (itself included) lie
    within ``eps``. Cluster ids follow the order of each cluster's first core
    point, and a border point reachable from several clusters joins the lowest
    id, i.e. the cluster a sequential scan would have expanded first.
    """
    p = as_points(points)
    n = p.shape[0]
    if n == 0:
        raise ValueError("dbscan needs at least one point")
    u = to_unit(p[:, 0], p[:, 1])
    t = p[:, 2]
    if metric is Metric.STATIC:
        core, comp, tree = _static_structure(u, params)
        border_pt = border_core = None
    else:
        core, comp, border_pt, border_core = _pairwise_structure(u, t, metric, params)

    labels = np.full(n, NOISE, dtype=np.int64)
    core_idx = np.flatnonzero(core)
    if len(core_idx):
        _, first = np.unique(comp[core_idx], return_index=True)
        order = np.argsort(first)  # components by their lowest core index
        remap = {int(comp[core_idx[first[k]]]): rank for rank, k in enumerate(order)}
        labels[core_idx] = [remap[int(c)] for c in comp[core_idx]]
    n_clusters = len(np.unique(labels[core_idx])) if len(core_idx) else 0

    if len(core_idx) and not core.all():
        if metric is Metric.STATIC:
            if params.eps >= math.pi:
                labels[~core] = 0
            else:
                r_hi = _chord(params.eps) * (1 + _REL) + 1e-15
                core_tree = cKDTree(u[core_idx])
                rest = np.flatnonzero(~core)
                for p_i, cand in zip(rest, core_tree.query_ball_point(u[rest], r_hi)):
                    if not cand:
                        continue
                    cand = core_idx[np.asarray(cand, dtype=np.intp)]
                    ok = cand[angle_between(u[p_i], u[cand]) <= params.eps]
                    if len(ok):
                        labels[p_i] = labels[ok].min()
        elif len(border_pt):
            best = np.full(n, np.iinfo(np.int64).max)
            np.minimum.at(best, border_pt, labels[border_core])
            hit = best < np.iinfo(np.int64).max
            labels[hit] = best[hit]

    kind = np.full(n, PointKind.NOISE, dtype=np.int8)
    kind[labels >= 0] = PointKind.BORDER
    kind[core] = PointKind.CORE
    return ClusterResult(labels, kind, n_clusters)


def summarize_members(points, idx: np.ndarray) -> ClusterSummary:
    """Summary of one group of points (indices into ``points``)."""
    p = as_points(points)
    idx = np.asarray(idx)
    center, norm = spherical_mean(p[idx, 0], p[idx, 1])
    if norm < 1e-9:
        raise DegenerateClusterError("cluster members have no mean direction")
    d = angle_between(to_unit(p[idx, 0], p[idx, 1]), center.unit())
    return ClusterSummary(
        center=center,
        radius=float(np.percentile(d, 90)),
        mass=len(idx) / p.shape[0],
        t_min=float(p[idx, 2].min()),
        t_max=float(p[idx, 2].max()),
        size=len(idx),
    )


def cluster_summary(points, result: ClusterResult) -> list[ClusterSummary]:
    """Center, 90th-percentile radius, mass and time span for each cluster, by id."""
    p = as_points(points)
    return [summarize_members(p, result.members(c)) for c in range(result.n_clusters)]
