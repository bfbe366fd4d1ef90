"""Watching traces: CSV ingestion, dirty-data filtering, train/validation split and
attention density maps.

CSV layout is ``user_id,t,x,y,z`` with x = yaw, y = pitch and z = roll.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .geometry import HALF_PI, Direction, angle_between, to_unit, wrap_yaw, wrap_yaw_array

HEADER = ("user_id", "t", "x", "y", "z")
UNITS = {"rad": 1.0, "deg": math.pi / 180.0}


class TraceParseError(ValueError):
    def __init__(self, line: int, message: str, source: str | None = None):
        where = f"{source}:{line}" if source else f"line {line}"
        super().__init__(f"{where}: {message}")
        self.line = line
        self.source = source


@dataclass(frozen=True)
class ViewSample:
    user_id: str
    t: float
    dir: Direction
    roll: float = 0.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.t) and self.t >= 0.0):
            raise ValueError(f"sample time {self.t} must be finite and >= 0")


@dataclass(frozen=True, eq=False)
class Trace:
    """One user's samples, stored column-wise with strictly increasing ``t``."""

    user_id: str
    t: np.ndarray
    yaw: np.ndarray
    pitch: np.ndarray
    roll: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self) -> None:
        t = np.ascontiguousarray(self.t, dtype=float)
        n = t.shape[0]
        if t.ndim != 1 or n == 0:
            raise ValueError("a trace needs at least one sample")
        yaw = wrap_yaw_array(np.asarray(self.yaw, dtype=float))
        pitch = np.asarray(self.pitch, dtype=float)
        roll = np.zeros(n) if self.roll is None else np.asarray(self.roll, dtype=float)
        if not (yaw.shape == pitch.shape == roll.shape == (n,)):
            raise ValueError("trace columns must have equal length")
        if not np.all(np.isfinite(t)) or t[0] < 0.0:
            raise ValueError("sample times must be finite and non-negative")
        if n > 1 and not np.all(np.diff(t) > 0.0):
            raise ValueError(f"trace {self.user_id}: timestamps must be strictly increasing")
        if np.any(np.abs(pitch) > HALF_PI):
            raise ValueError(f"trace {self.user_id}: pitch outside [-pi/2, pi/2]")
        for name, arr in (("t", t), ("yaw", yaw), ("pitch", pitch), ("roll", roll)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_samples(cls, samples: Sequence[ViewSample]) -> "Trace":
        if not samples:
            raise ValueError("a trace needs at least one sample")
        uid = samples[0].user_id
        if any(s.user_id != uid for s in samples):
            raise ValueError("all samples of a trace must share user_id")
        return cls(
            uid,
            np.array([s.t for s in samples]),
            np.array([s.dir.yaw for s in samples]),
            np.array([s.dir.pitch for s in samples]),
            np.array([s.roll for s in samples]),
        )

    def __len__(self) -> int:
        return self.t.shape[0]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Trace):
            return NotImplemented
        return self.user_id == other.user_id and all(
            np.array_equal(getattr(self, k), getattr(other, k)) for k in ("t", "yaw", "pitch", "roll")
        )

    @property
    def samples(self) -> list[ViewSample]:
        return [
            ViewSample(self.user_id, float(t), Direction(float(y), float(p)), float(r))
            for t, y, p, r in zip(self.t, self.yaw, self.pitch, self.roll)
        ]

    def direction(self, i: int) -> Direction:
        return Direction(float(self.yaw[i]), float(self.pitch[i]))

    @property
    def duration(self) -> float:
        return float(self.t[-1] - self.t[0])

    def units(self) -> np.ndarray:
        return to_unit(self.yaw, self.pitch)

    def take(self, idx: np.ndarray) -> "Trace":
        return Trace(self.user_id, self.t[idx], self.yaw[idx], self.pitch[idx], self.roll[idx])


@dataclass(frozen=True)
class TraceSet:
    video_id: str
    traces: tuple[Trace, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        traces = tuple(self.traces)
        ids = [tr.user_id for tr in traces]
        if len(set(ids)) != len(ids):
            raise ValueError("user_ids must be unique within a TraceSet")
        object.__setattr__(self, "traces", traces)

    def __len__(self) -> int:
        return len(self.traces)

    def __iter__(self) -> Iterator[Trace]:
        return iter(self.traces)

    @property
    def duration(self) -> float:
        return max((float(tr.t[-1]) for tr in self.traces), default=0.0)

    @property
    def n_samples(self) -> int:
        return sum(len(tr) for tr in self.traces)

    def stacked(self) -> np.ndarray:
        """All samples as an (n, 3) array of yaw, pitch, t in trace order."""
        if not self.traces:
            return np.zeros((0, 3))
        return np.concatenate([np.column_stack([tr.yaw, tr.pitch, tr.t]) for tr in self.traces])

    def by_user(self, user_id: str) -> Trace:
        for tr in self.traces:
            if tr.user_id == user_id:
                return tr
        raise KeyError(user_id)


def _text_lines(stream) -> Iterable[str]:
    if isinstance(stream, (bytes, bytearray)):
        return io.StringIO(bytes(stream).decode("utf-8-sig"), newline="")
    if isinstance(stream, str):
        return io.StringIO(stream, newline="")
    data = stream.read()
    if isinstance(data, bytes):
        data = data.decode("utf-8-sig")
    return io.StringIO(data, newline="")


def parse_traces(
    stream,
    unit: str = "rad",
    has_header: bool = True,
    video_id: str = "video",
    source: str | None = None,
) -> TraceSet:
    """Parse a trace CSV (bytes, text, or file object) into a TraceSet.

    Rows may be interleaved across users; they are regrouped and sorted by time.
    ``unit`` selects radians or degrees for x, y and z.
    """
    if unit not in UNITS:
        raise ValueError(f"unknown angle unit {unit!r}; expected one of {sorted(UNITS)}")
    scale = UNITS[unit]
    rows: dict[str, list[tuple[float, float, float, float, int]]] = {}
    reader = csv.reader(_text_lines(stream))
    for lineno, row in enumerate(reader, start=1):
        if not row or all(not c.strip() for c in row):
            continue
        if has_header and lineno == 1:
            if tuple(c.strip() for c in row) != HEADER:
                raise TraceParseError(lineno, f"expected header {','.join(HEADER)}", source)
            continue
        if len(row) != 5:
            raise TraceParseError(lineno, f"expected 5 fields, got {len(row)}", source)
        uid = row[0].strip()
        if not uid:
            raise TraceParseError(lineno, "empty user_id", source)
        try:
            t, x, y, z = (float(c) for c in row[1:])
        except ValueError:
            raise TraceParseError(lineno, "non-numeric field", source) from None
        if not all(math.isfinite(v) for v in (t, x, y, z)):
            raise TraceParseError(lineno, "non-finite field", source)
        if t < 0.0:
            raise TraceParseError(lineno, f"negative time {t}", source)
        pitch = y * scale
        if abs(pitch) > HALF_PI:
            raise TraceParseError(lineno, f"pitch {y} out of range", source)
        rows.setdefault(uid, []).append((t, wrap_yaw(x * scale), pitch, z * scale, lineno))

    traces = []
    for uid in sorted(rows):
        recs = sorted(rows[uid], key=lambda r: r[0])
        for a, b in zip(recs, recs[1:]):
            if a[0] == b[0]:
                raise TraceParseError(b[4], f"duplicate sample for user {uid} at t={b[0]}", source)
        arr = np.array([r[:4] for r in recs])
        traces.append(Trace(uid, arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3]))
    return TraceSet(video_id, tuple(traces))


def read_traces(path: str | Path, unit: str = "rad", has_header: bool = True) -> TraceSet:
    path = Path(path)
    with open(path, "rb") as fh:
        return parse_traces(fh, unit=unit, has_header=has_header, video_id=path.stem, source=str(path))


def serialize_traces(ts: TraceSet) -> str:
    """CSV text with full float precision (``repr``), so parsing gives the same TraceSet."""
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(HEADER)
    for tr in ts.traces:
        for t, y, p, r in zip(tr.t, tr.yaw, tr.pitch, tr.roll):
            w.writerow([tr.user_id, repr(float(t)), repr(float(y)), repr(float(p)), repr(float(r))])
    return out.getvalue()


def write_traces(ts: TraceSet, path: str | Path) -> None:
    Path(path).write_text(serialize_traces(ts), encoding="utf-8", newline="")


STILL_EPS = 1e-4


def _collapse_still_runs(tr: Trace, threshold: float) -> np.ndarray:
    if len(tr) < 2:
        return np.arange(len(tr))
    u = tr.units()
    step = angle_between(u[:-1], u[1:])
    still = step < STILL_EPS
    keep = np.ones(len(tr), dtype=bool)
    i, n = 0, len(still)
    while i < n:
        if not still[i]:
            i += 1
            continue
        j = i
        while j < n and still[j]:
            j += 1
        # samples i .. j form one stationary run
        if tr.t[j] - tr.t[i] > threshold:
            keep[i + 1 : j + 1] = False
        i = j
    return np.flatnonzero(keep)


def filter_dirty(ts: TraceSet, stillness_threshold: float = 30.0, min_trace_len: float = 10.0) -> TraceSet:
    """Drop long motionless stretches, then drop traces that end up too short.

    A stationary run (consecutive steps under 1e-4 rad) lasting longer than
    ``stillness_threshold`` keeps only its first sample. Collapsing can bring two
    nearly identical samples next to each other, so it repeats until nothing changes.
    """
    if stillness_threshold <= 0:
        raise ValueError("stillness_threshold must be positive")
    kept = []
    for tr in ts.traces:
        while True:
            idx = _collapse_still_runs(tr, stillness_threshold)
            if len(idx) == len(tr):
                break
            tr = tr.take(idx)
        if tr.duration >= min_trace_len:
            kept.append(tr)
    return TraceSet(ts.video_id, tuple(kept))


def split(ts: TraceSet, train_fraction: float = 0.8, seed: int = 0) -> tuple[TraceSet, TraceSet]:
    """Seeded per-user partition into training and validation sets."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must be in (0, 1)")
    n = len(ts.traces)
    if n < 2:
        raise ValueError("need at least two traces to split")
    n_train = min(max(int(round(n * train_fraction)), 1), n - 1)
    order = np.random.default_rng(seed).permutation(n)
    train_idx = sorted(order[:n_train])
    val_idx = sorted(order[n_train:])
    return (
        TraceSet(ts.video_id, tuple(ts.traces[i] for i in train_idx)),
        TraceSet(ts.video_id, tuple(ts.traces[i] for i in val_idx)),
    )


def dwell_weights(tr: Trace) -> np.ndarray:
    """Time until the next sample; the last sample gets the trace's mean gap."""
    if len(tr) == 1:
        return np.ones(1)
    gaps = np.diff(tr.t)
    return np.append(gaps, gaps.mean())


def attention_map(ts: TraceSet, grid_w: int = 72, grid_h: int = 36) -> np.ndarray:
    """Dwell-weighted equirectangular histogram, shape (grid_h, grid_w), summing to 1.

    Row 0 is the top (pitch +pi/2); column 0 starts at yaw -pi.
    """
    if grid_w < 1 or grid_h < 1:
        raise ValueError("grid dimensions must be >= 1")
    if not ts.traces:
        raise ValueError("attention map of an empty TraceSet")
    grid = np.zeros((grid_h, grid_w))
    for tr in ts.traces:
        col = np.floor((tr.yaw + math.pi) / (2 * math.pi) * grid_w).astype(int)
        row = np.floor((HALF_PI - tr.pitch) / math.pi * grid_h).astype(int)
        np.add.at(grid, (np.clip(row, 0, grid_h - 1), np.clip(col, 0, grid_w - 1)), dwell_weights(tr))
    return grid / grid.sum()


def write_attention_csv(grid: np.ndarray, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in grid:
            w.writerow([repr(float(v)) for v in row])


def attention_pgm(grid: np.ndarray) -> bytes:
    """8-bit binary PGM scaled so the largest cell is 255."""
    peak = grid.max()
    scaled = np.zeros(grid.shape, dtype=np.uint8) if peak <= 0 else np.rint(grid / peak * 255).astype(np.uint8)
    h, w = grid.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + scaled.tobytes()


def write_attention_pgm(grid: np.ndarray, path: str | Path) -> None:
    Path(path).write_bytes(attention_pgm(grid))
