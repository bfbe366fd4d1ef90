"""Slow, obviously-correct reference implementations used only by tests."""

from __future__ import annotations

import math
from collections import deque

import numpy as np

from focusstream.geometry import angle_between, to_unit

NOISE = -1
CORE, BORDER, NOISE_KIND = 0, 1, 2


def naive_distance_matrix(points: np.ndarray, spatiotemporal: bool, time_scale: float) -> np.ndarray:
    """All pairwise distances, one row at a time, over (yaw, pitch, t) rows."""
    u = to_unit(points[:, 0], points[:, 1])
    n = len(points)
    d = np.zeros((n, n))
    for i in range(n):
        row = angle_between(u[i], u)
        if spatiotemporal:
            dt = (points[i, 2] - points[:, 2]) / time_scale
            row = np.sqrt(row * row + dt * dt)
        d[i] = row
    return d


def naive_dbscan(points: np.ndarray, eps: float, min_samples: int, spatiotemporal: bool = False,
                 time_scale: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Textbook sequential DBSCAN: visit points in order, expand each new cluster with a queue."""
    d = naive_distance_matrix(points, spatiotemporal, time_scale)
    n = len(points)
    neigh = [np.flatnonzero(d[i] <= eps) for i in range(n)]
    core = np.array([len(nb) >= min_samples for nb in neigh])
    labels = np.full(n, NOISE)
    cluster = 0
    for i in range(n):
        if labels[i] != NOISE or not core[i]:
            continue
        labels[i] = cluster
        queue = deque([i])
        while queue:
            j = queue.popleft()
            if not core[j]:
                continue
            for k in neigh[j]:
                if labels[k] == NOISE:
                    labels[k] = cluster
                    queue.append(k)
        cluster += 1
    kind = np.where(core, CORE, np.where(labels >= 0, BORDER, NOISE_KIND))
    return labels, kind


def grid_area_fraction(yaw_c: float, pitch_c: float, yaw_ext: float, pitch_ext: float, step_deg: float = 1.0) -> float:
    """Solid-angle fraction of a yaw/pitch rectangle by midpoint integration on a degree grid."""
    step = math.radians(step_deg)
    yaws = -math.pi + step * (np.arange(int(round(360 / step_deg))) + 0.5)
    pitches = -math.pi / 2 + step * (np.arange(int(round(180 / step_deg))) + 0.5)
    dy = np.abs((yaws - yaw_c + math.pi) % (2 * math.pi) - math.pi)
    inside_y = dy <= yaw_ext / 2
    inside_p = np.abs(pitches - pitch_c) <= pitch_ext / 2
    # exact integral of cos over each pitch cell, so only the containment test is gridded
    band = np.sin(pitches + step / 2) - np.sin(pitches - step / 2)
    return float(inside_y.sum() * step * (band * inside_p).sum() / (4 * math.pi))


def shortest_arc_yaw(y0: float, y1: float, frac: float) -> float:
    """Interpolate yaw along the shorter way round, by explicit case analysis."""
    diff = y1 - y0
    if diff > math.pi:
        diff -= 2 * math.pi
    elif diff < -math.pi:
        diff += 2 * math.pi
    y = y0 + frac * diff
    while y >= math.pi:
        y -= 2 * math.pi
    while y < -math.pi:
        y += 2 * math.pi
    return y
