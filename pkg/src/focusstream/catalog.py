"""Copy catalogs: focus copies, fallback band copies, fixed tiles and the full-quality copy.

Copies carry no pixels. Each one is a high-resolution region plus a relative
byte rate, where 1.0 is the whole sphere at high resolution.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Sequence

from .geometry import TWO_PI, Direction, ViewRegion, region_area_fraction, slerp, wrap_yaw

if TYPE_CHECKING:
    from .vfd import DynamicFocus, StaticFocus


class CopyKind(enum.Enum):
    FCOPY = "FCOPY"
    MERGED_FCOPY = "MERGED_FCOPY"
    BCOPY = "BCOPY"
    TILE = "TILE"
    FULL = "FULL"


@dataclass(frozen=True)
class RateModel:
    high_density: float = 1.0
    low_density: float = 0.125
    segment_len: float = 1.0

    def __post_init__(self) -> None:
        if self.high_density != 1.0:
            raise ValueError("rates are relative to a whole-sphere high-res copy, so high_density is 1.0")
        if not 0.0 <= self.low_density < self.high_density:
            raise ValueError("low_density must be in [0, high_density)")
        if self.segment_len <= 0:
            raise ValueError("segment_len must be positive")

    def rate(self, region: ViewRegion) -> float:
        frac = region_area_fraction(region)
        return frac * self.high_density + (1.0 - frac) * self.low_density


@dataclass(frozen=True)
class CopyConfig:
    min_yaw_extent: float = math.radians(120.0)
    min_pitch_extent: float = math.radians(90.0)
    margin: float = math.radians(10.0)
    merge_threshold: float = math.radians(30.0)
    rate_model: RateModel = field(default_factory=RateModel)

    def extents_for(self, radius: float) -> tuple[float, float]:
        span = 2.0 * radius + self.margin
        return min(TWO_PI, max(self.min_yaw_extent, span)), min(math.pi, max(self.min_pitch_extent, span))


@dataclass(frozen=True)
class Copy:
    id: int
    kind: CopyKind
    region: ViewRegion
    covered_focus_ids: tuple[str, ...]
    rate: float
    dynamic: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "covered_focus_ids", tuple(self.covered_focus_ids))
        if self.kind is CopyKind.FCOPY and not self.covered_focus_ids:
            raise ValueError("an FCOPY must cover at least one focus")
        if self.kind is CopyKind.MERGED_FCOPY and len(self.covered_focus_ids) != 2:
            raise ValueError("a MERGED_FCOPY covers exactly two focuses")


@dataclass(frozen=True)
class CopyCatalog:
    copies: tuple[Copy, ...]
    rate_model: RateModel = field(default_factory=RateModel)

    def __post_init__(self) -> None:
        copies = tuple(self.copies)
        if [c.id for c in copies] != list(range(len(copies))):
            raise ValueError("copy ids must be 0..n-1 in catalog order")
        object.__setattr__(self, "copies", copies)

    def __len__(self) -> int:
        return len(self.copies)

    def __getitem__(self, copy_id: int) -> Copy:
        return self.copies[copy_id]

    def of_kind(self, *kinds: CopyKind) -> list[Copy]:
        return [c for c in self.copies if c.kind in kinds]


BCOPY_YAW_CENTERS = (-135.0, -45.0, 45.0, 135.0)
TILE_YAW_CENTERS = tuple(-180.0 + 45.0 * k for k in range(8))
TILE_PITCH_CENTERS = (-67.5, -22.5, 22.5, 67.5)


def _bcopy_regions() -> list[ViewRegion]:
    return [ViewRegion.static(Direction.from_degrees(y, 0.0), math.pi / 2, math.pi) for y in BCOPY_YAW_CENTERS]


def _merged_region(a: ViewRegion, b: ViewRegion) -> ViewRegion:
    ca, cb = a.center_path[0][1], b.center_path[0][1]
    mid = slerp(ca, cb, 0.5)
    half_yaw = max(abs(wrap_yaw(c.yaw - mid.yaw)) + 0.5 * r.yaw_extent for c, r in ((ca, a), (cb, b)))
    half_pitch = max(abs(c.pitch - mid.pitch) + 0.5 * r.pitch_extent for c, r in ((ca, a), (cb, b)))
    if 2.0 * half_yaw > TWO_PI:
        return ViewRegion.whole_sphere()
    return ViewRegion.static(mid, 2.0 * half_yaw, min(math.pi, 2.0 * half_pitch))


def build_fist_catalog(
    static_focuses: Sequence["StaticFocus"] = (),
    dynamic_focuses: Sequence["DynamicFocus"] = (),
    merged_pairs: Sequence[tuple[str, str]] = (),
    cfg: CopyConfig | None = None,
) -> CopyCatalog:
    """Static fcopies, moving fcopies, merged fcopies, then the four band copies."""
    cfg = cfg or CopyConfig()
    ids = [f.id for f in static_focuses] + [f.id for f in dynamic_focuses]
    if len(set(ids)) != len(ids):
        raise ValueError("focus ids must be unique")
    rm = cfg.rate_model
    specs: list[tuple[CopyKind, ViewRegion, tuple[str, ...], bool]] = []
    static_regions = {}
    for f in static_focuses:
        region = ViewRegion.static(f.center, *cfg.extents_for(f.radius))
        static_regions[f.id] = region
        specs.append((CopyKind.FCOPY, region, (f.id,), False))
    for f in dynamic_focuses:
        specs.append((CopyKind.FCOPY, ViewRegion(f.path, *cfg.extents_for(f.radius)), (f.id,), True))
    for a, b in merged_pairs:
        specs.append((CopyKind.MERGED_FCOPY, _merged_region(static_regions[a], static_regions[b]), (a, b), False))
    for region in _bcopy_regions():
        specs.append((CopyKind.BCOPY, region, (), False))
    copies = tuple(Copy(i, kind, reg, cov, rm.rate(reg), dyn) for i, (kind, reg, cov, dyn) in enumerate(specs))
    return CopyCatalog(copies, rm)


def build_tile_catalog(cfg: CopyConfig | None = None) -> CopyCatalog:
    """32 fixed 120 x 90 degree tiles: 4 pitch rows (bottom first) x 8 yaw columns."""
    rm = (cfg or CopyConfig()).rate_model
    copies = []
    for p in TILE_PITCH_CENTERS:
        for y in TILE_YAW_CENTERS:
            region = ViewRegion.static(Direction.from_degrees(y, p), math.radians(120.0), math.radians(90.0))
            copies.append(Copy(len(copies), CopyKind.TILE, region, (), rm.rate(region)))
    return CopyCatalog(tuple(copies), rm)


def build_naive_catalog(cfg: CopyConfig | None = None) -> CopyCatalog:
    rm = (cfg or CopyConfig()).rate_model
    region = ViewRegion.whole_sphere()
    return CopyCatalog((Copy(0, CopyKind.FULL, region, (), 1.0),), rm)


def catalog_to_dict(cat: CopyCatalog) -> dict:
    rm = cat.rate_model
    return {
        "rate_model": {"high_density": rm.high_density, "low_density": rm.low_density, "segment_len": rm.segment_len},
        "copies": [
            {
                "id": c.id,
                "kind": c.kind.value,
                "path": [[t, d.yaw, d.pitch] for t, d in c.region.center_path],
                "yaw_extent": c.region.yaw_extent,
                "pitch_extent": c.region.pitch_extent,
                "covers": list(c.covered_focus_ids),
                "rate": c.rate,
                "dynamic": c.dynamic,
            }
            for c in cat.copies
        ],
    }


def catalog_from_dict(d: dict) -> CopyCatalog:
    copies = tuple(
        Copy(
            c["id"],
            CopyKind(c["kind"]),
            ViewRegion(tuple((t, Direction(y, p)) for t, y, p in c["path"]), c["yaw_extent"], c["pitch_extent"]),
            tuple(c["covers"]),
            c["rate"],
            c.get("dynamic", False),
        )
        for c in d["copies"]
    )
    return CopyCatalog(copies, RateModel(**d["rate_model"]))


def write_catalog(cat: CopyCatalog, path: str | Path) -> None:
    Path(path).write_text(json.dumps(catalog_to_dict(cat), indent=2) + "\n", encoding="utf-8")


def read_catalog(path: str | Path) -> CopyCatalog:
    return catalog_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
