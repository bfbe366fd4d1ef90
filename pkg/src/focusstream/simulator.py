"""Trace-driven streaming simulation: segment downloader, playback buffer,
copy switching, prefetch and metric aggregation.

Time inside a session is relative to the first trace sample. Playback time
("content time") advances only while a segment is playing; stalls freeze both
the picture and the viewpoint trace. Bytes are relative, so that streaming the
whole sphere in high resolution costs 1.0 per second of video.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .catalog import CopyCatalog
from .geometry import Direction, region_contains
from .selector import Policy, initial_copy, select_copy
from .trace import Trace, TraceSet

EVENT_TYPES = ("SWITCH", "STALL_START", "STALL_END", "SEGMENT_DONE", "PREFETCH_DONE", "ABORT")
_TIE = 1e-9
_ZERO_BASELINE = 1e-9


@dataclass(frozen=True)
class NetworkConfig:
    bandwidth: float
    segment_len: float = 1.0
    buffer_capacity: int = 2
    switch_flush: bool = True

    def __post_init__(self) -> None:
        if not (self.bandwidth > 0 and math.isfinite(self.bandwidth)):
            raise ValueError("bandwidth must be positive")
        if not self.segment_len > 0:
            raise ValueError("segment_len must be positive")
        if self.buffer_capacity < 1:
            raise ValueError("buffer_capacity must be >= 1")


@dataclass(frozen=True)
class Event:
    t: float
    kind: str
    copy_id: int
    segment: int = -1
    bytes: float = 0.0

    def detail(self) -> str:
        parts = []
        if self.segment >= 0:
            parts.append(f"seg={self.segment}")
        if self.bytes:
            parts.append(f"bytes={self.bytes!r}")
        return ";".join(parts)


@dataclass
class SessionReport:
    user_id: str
    policy: Policy
    switch_count: int
    standstill_s: float
    startup_s: float
    t_high: float
    t_total: float
    bytes: float
    full_bytes: float  # bytes of the whole sphere at high resolution for the same span
    wall_s: float
    events: list[Event] = field(default_factory=list)

    @property
    def stall_intervals(self) -> list[tuple[float, float]]:
        starts = [e.t for e in self.events if e.kind == "STALL_START"]
        ends = [e.t for e in self.events if e.kind == "STALL_END"]
        return list(zip(starts, ends))

    @property
    def switch_times(self) -> list[float]:
        return [e.t for e in self.events if e.kind == "SWITCH"]


@dataclass(frozen=True)
class Metrics:
    switching_number: float
    standstill_rel: float
    standstill_s: float
    naive_standstill_s: float
    zero_baseline: bool  # naive never stalled, so standstill_rel is relative to a tiny epsilon
    high_quality_rate: float
    alpha: float


@dataclass(frozen=True)
class TransitionMatrix:
    """Row ``i`` is the distribution of the next copy after leaving copy ``i``."""

    probs: np.ndarray
    observed: np.ndarray  # rows with at least one counted transition

    def __post_init__(self) -> None:
        p = np.array(self.probs, dtype=float)
        obs = np.array(self.observed, dtype=bool)
        if p.ndim != 2 or p.shape[0] != p.shape[1] or obs.shape != (p.shape[0],):
            raise ValueError("transition matrix must be square with one flag per row")
        if np.any(p < 0) or not np.allclose(p.sum(axis=1), 1.0, atol=1e-9, rtol=0):
            raise ValueError("rows must be probability distributions")
        p.setflags(write=False)
        obs.setflags(write=False)
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "observed", obs)

    @classmethod
    def from_counts(cls, counts: np.ndarray) -> "TransitionMatrix":
        counts = np.asarray(counts, dtype=float)
        n = counts.shape[0]
        totals = counts.sum(axis=1)
        probs = np.full((n, n), 1.0 / n)
        seen = totals > 0
        probs[seen] = counts[seen] / totals[seen, None]
        return cls(probs, seen)

    def predict(self, current: int) -> int | None:
        """Most likely next copy, or None when the row carries no information."""
        if not self.observed[current]:
            return None
        row = self.probs[current].copy()
        row[current] = -1.0
        best = int(np.argmax(row))  # first maximum, so ties go to the lowest id
        return best if row[best] > 0 else None


def _sample_directions(trace: Trace) -> list[Direction]:
    return [Direction(float(y), float(p)) for y, p in zip(trace.yaw, trace.pitch)]


def selection_schedule(
    trace: Trace,
    catalog: CopyCatalog,
    policy: Policy,
    seed: int = 0,
    prefer_merged: bool = True,
) -> tuple[np.ndarray, np.ndarray]:
    """Copy chosen at every sample and whether that sample switched.

    Selection depends only on the viewpoint sequence, never on network timing.
    """
    dirs = _sample_directions(trace)
    t = trace.t
    state = initial_copy(catalog, dirs[0], policy, seed, float(t[0]), prefer_merged)
    copies = np.empty(len(dirs), dtype=int)
    switched = np.zeros(len(dirs), dtype=bool)
    copies[0] = state.current_copy
    for k in range(1, len(dirs)):
        state, switched[k] = select_copy(state, dirs[k], float(t[k]), catalog, prefer_merged)
        copies[k] = state.current_copy
    return copies, switched


def _segment_lengths(duration: float, seg: float) -> list[float]:
    k = max(1, math.ceil(duration / seg - 1e-12))
    return [min(seg, duration - i * seg) for i in range(k)]


class _Session:
    """Mutable event-loop state for one simulated session."""

    def __init__(self, trace, catalog, net, copies, switched, prefetch):
        self.catalog = catalog
        self.net = net
        self.prefetch = prefetch
        self.t0 = float(trace.t[0])
        self.tau = trace.t - self.t0
        self.duration = float(self.tau[-1])
        self.lengths = _segment_lengths(self.duration, net.segment_len)
        self.n_seg = len(self.lengths)
        self.copies = copies
        self.switched = switched

        self.wall = 0.0
        self.pos = 0.0  # content time
        self.seg = -1  # index of the playing segment, -1 before startup
        self.stalled = False
        self.current = int(copies[0])
        self.next_sample = 1
        self.buffer: dict[int, int] = {}  # segment index -> copy id, index > self.seg
        self.shown: list[int] = []  # copy displayed for each segment, in order
        self.main: list | None = None  # [segment, copy, size, done]
        self.pre: list | None = None
        self.prefetched: dict[tuple[int, int], bool] = {}
        self.events: list[Event] = []
        self.stall_s = 0.0
        self.startup_s = 0.0
        self.bytes = 0.0
        self.switch_count = 0

    def log(self, kind: str, copy_id: int, segment: int = -1, nbytes: float = 0.0) -> None:
        self.events.append(Event(self.wall, kind, copy_id, segment, nbytes))
        self.bytes += nbytes

    def size(self, seg: int, copy_id: int) -> float:
        return self.catalog[copy_id].rate * self.lengths[seg]

    def _missing(self) -> int | None:
        lo = self.seg + 1
        for j in range(lo, min(self.n_seg, lo + self.net.buffer_capacity)):
            if j not in self.buffer:
                return j
        return None

    def _prefetch_target(self) -> tuple[int, int] | None:
        if self.prefetch is None or self.seg < 0:
            return None
        nxt = self.prefetch.predict(self.current)
        if nxt is None:
            return None
        lo = self.seg + 1
        for j in range(lo, min(self.n_seg, lo + self.net.buffer_capacity)):
            if (nxt, j) not in self.prefetched:
                return nxt, j
        return None

    def _drop_prefetch(self) -> None:
        if self.pre is not None:
            seg, cid, _, done = self.pre
            self.pre = None
            if done > 0:
                self.log("ABORT", cid, seg, done)

    def schedule(self) -> None:
        """Start or resume downloads after any state change."""
        if self.pre is not None:
            seg, cid = self.pre[0], self.pre[1]
            if seg <= self.seg or self._prefetch_target() is None or cid != self.prefetch.predict(self.current):
                self._drop_prefetch()
        if self.main is None:
            j = self._missing()
            if j is not None:
                self.main = [j, self.current, self.size(j, self.current), 0.0]
        if self.main is None and self.pre is None:
            target = self._prefetch_target()
            if target is not None:
                cid, j = target
                self.pre = [j, cid, self.size(j, cid), 0.0]

    def active(self) -> list | None:
        return self.main if self.main is not None else self.pre

    def switch(self, new: int) -> None:
        self.current = new
        self.switch_count += 1
        self.log("SWITCH", new)
        if self.net.switch_flush:
            if self.main is not None:
                seg, cid, _, done = self.main
                self.main = None
                if done > 0:
                    self.log("ABORT", cid, seg, done)
            self.buffer = {j: c for j, c in self.buffer.items() if c == new}
        for (cid, j) in list(self.prefetched):
            if cid == new and j > self.seg and j not in self.buffer:
                self.buffer[j] = cid
        self.prefetched.clear()
        if self.pre is not None and self.pre[1] == new and self.main is None and self.pre[0] not in self.buffer:
            self.main, self.pre = self.pre, None  # the prefetch in flight becomes the main download

    def complete(self, job: list, is_main: bool) -> None:
        seg, cid, size, _ = job
        if is_main:
            self.main = None
            self.buffer[seg] = cid
            self.log("SEGMENT_DONE", cid, seg, size)
        else:
            self.pre = None
            self.prefetched[(cid, seg)] = True
            self.log("PREFETCH_DONE", cid, seg, size)

    def run(self) -> None:
        bw = self.net.bandwidth
        seg_len = self.net.segment_len
        self.schedule()
        while True:
            job = self.active()
            dt_dl = (job[2] - job[3]) / bw if job is not None else math.inf
            playing = self.seg >= 0 and not self.stalled
            if playing:
                boundary = min(self.duration, (self.seg + 1) * seg_len)
                dt_play = boundary - self.pos
                if self.next_sample < len(self.tau):
                    dt_play = min(dt_play, self.tau[self.next_sample] - self.pos)
            else:
                dt_play = math.inf
            dt = min(dt_dl, dt_play)
            if not math.isfinite(dt):
                raise RuntimeError("simulation deadlock")  # cannot happen with a valid state
            dt = max(dt, 0.0)

            self.wall += dt
            if job is not None:
                job[3] += bw * dt
            if playing:
                self.pos += dt
            elif self.seg < 0:
                self.startup_s += dt
            else:
                self.stall_s += dt

            if job is not None and job[2] - job[3] <= _TIE * max(1.0, job[2]):
                job[3] = job[2]
                self.complete(job, job is self.main)

            # a boundary is crossed before samples that land on it, so the buffered segment starts
            self._advance(seg_len)
            if playing:
                while self.next_sample < len(self.tau) and self.tau[self.next_sample] <= self.pos + _TIE:
                    k = self.next_sample
                    self.next_sample += 1
                    if self.switched[k]:
                        self.switch(int(self.copies[k]))
            if self.seg >= self.n_seg:
                break
            self.schedule()
        self._drop_prefetch()

    def _advance(self, seg_len: float) -> None:
        """Handle segment boundaries, stall starts and stall ends."""
        if self.seg < 0:
            if 0 in self.buffer:
                self._start_segment(0)
            return
        end = min(self.duration, (self.seg + 1) * seg_len)
        if self.stalled or self.pos >= end - _TIE:
            if not self.stalled:
                self.pos = end
            nxt = self.seg + 1
            if nxt >= self.n_seg:
                self.pos = self.duration
                self.seg = self.n_seg
                return
            if nxt in self.buffer:
                if self.stalled:
                    self.stalled = False
                    self.log("STALL_END", self.current, nxt)
                self._start_segment(nxt)
            elif not self.stalled:
                self.stalled = True
                self.log("STALL_START", self.current, nxt)

    def _start_segment(self, j: int) -> None:
        self.seg = j
        self.pos = j * self.net.segment_len
        self.shown.append(self.buffer.pop(j))
        for key in [k for k in self.prefetched if k[1] <= j]:
            del self.prefetched[key]


def _high_quality_time(trace: Trace, catalog: CopyCatalog, shown: list[int], seg_len: float) -> float:
    """Playback time during which the displayed copy covers the held viewpoint."""
    tau = trace.t - trace.t[0]
    cuts = np.union1d(tau, np.arange(1, len(shown)) * seg_len)
    cuts = cuts[cuts <= tau[-1]]
    a, b = cuts[:-1], cuts[1:]
    mid = 0.5 * (a + b)
    sample = np.searchsorted(tau, mid, side="right") - 1
    segment = np.minimum((mid // seg_len).astype(int), len(shown) - 1)
    covered: dict[tuple[int, int], bool] = {}
    total = 0.0
    for k, j, w in zip(sample.tolist(), segment.tolist(), (b - a).tolist()):
        key = (k, shown[j])
        if key not in covered:
            d = Direction(float(trace.yaw[k]), float(trace.pitch[k]))
            covered[key] = region_contains(catalog[shown[j]].region, d, float(trace.t[k]))
        if covered[key]:
            total += w
    return total


def simulate_session(
    trace: Trace,
    catalog: CopyCatalog,
    policy: Policy,
    net: NetworkConfig,
    prefetch: TransitionMatrix | None = None,
    seed: int = 0,
    prefer_merged: bool = True,
    schedule: tuple[np.ndarray, np.ndarray] | None = None,
) -> SessionReport:
    """Replay one trace; ``schedule`` may carry a precomputed :func:`selection_schedule`."""
    duration = float(trace.t[-1] - trace.t[0])
    if duration < net.segment_len:
        raise ValueError(f"trace {trace.user_id} spans {duration:.3f} s, shorter than one segment")
    if prefetch is not None and prefetch.probs.shape[0] != len(catalog):
        raise ValueError("transition matrix does not match the catalog")
    copies, switched = schedule if schedule is not None else selection_schedule(
        trace, catalog, policy, seed, prefer_merged
    )
    s = _Session(trace, catalog, net, copies, switched, prefetch)
    s.run()
    t_high = _high_quality_time(trace, catalog, s.shown, net.segment_len)
    full = 0.0
    for length in s.lengths:
        full += 1.0 * length
    return SessionReport(
        user_id=trace.user_id,
        policy=policy,
        switch_count=s.switch_count,
        standstill_s=s.stall_s,
        startup_s=s.startup_s,
        t_high=min(t_high, duration),
        t_total=duration,
        bytes=s.bytes,
        full_bytes=full,
        wall_s=s.wall,
        events=s.events,
    )


def train_transition_model(
    train: TraceSet,
    catalog: CopyCatalog,
    policy: Policy,
    seed: int = 0,
    prefer_merged: bool = True,
) -> TransitionMatrix:
    if len(train) == 0:
        raise ValueError("training set is empty")
    n = len(catalog)
    counts = np.zeros((n, n))
    for i, tr in enumerate(train):
        copies, switched = selection_schedule(tr, catalog, policy, seed + i, prefer_merged)
        for k in np.flatnonzero(switched):
            counts[copies[k - 1], copies[k]] += 1
    return TransitionMatrix.from_counts(counts)


def aggregate(reports: Sequence[SessionReport], naive_reports: Sequence[SessionReport]) -> Metrics:
    if not reports or not naive_reports:
        raise ValueError("aggregate needs non-empty report lists")
    if len(reports) != len(naive_reports) or any(
        a.user_id != b.user_id for a, b in zip(reports, naive_reports)
    ):
        raise ValueError("reports and naive reports must cover the same traces in the same order")
    stand = math.fsum(r.standstill_s for r in reports)
    naive_stand = math.fsum(r.standstill_s for r in naive_reports)
    zero = naive_stand < _ZERO_BASELINE
    return Metrics(
        switching_number=float(np.mean([r.switch_count for r in reports])),
        standstill_rel=stand / max(naive_stand, _ZERO_BASELINE),
        standstill_s=stand,
        naive_standstill_s=naive_stand,
        zero_baseline=zero,
        high_quality_rate=math.fsum(r.t_high for r in reports) / math.fsum(r.t_total for r in reports),
        alpha=math.fsum(r.bytes for r in reports) / math.fsum(r.full_bytes for r in reports),
    )


def events_csv(report: SessionReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "event", "copy_id", "detail"])
    for e in report.events:
        w.writerow([repr(e.t), e.kind, e.copy_id, e.detail()])
    return buf.getvalue()


def write_events_csv(report: SessionReport, path: str | Path) -> None:
    Path(path).write_text(events_csv(report), encoding="utf-8")
