"""Copy selection as pure state transitions.

FIST policies keep the current copy while it covers the viewpoint, otherwise
pick at random among focus copies covering it, falling back to a band copy.
The tile baseline keeps its tile until the viewpoint leaves it, then moves to
the nearest-centered tile that covers it. The naive policy never switches.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .catalog import Copy, CopyCatalog, CopyKind
from .geometry import Direction, angular_distance, region_center_at, region_contains


class Policy(enum.Enum):
    FIST_STATIC = "FIST_STATIC"
    FIST_DYNAMIC = "FIST_DYNAMIC"
    TILE = "TILE"
    NAIVE = "NAIVE"


class ConfigurationError(ValueError):
    """Policy and catalog do not fit together."""


class CatalogInvariantError(RuntimeError):
    """No copy covers a viewpoint; band copies should make this impossible."""


@dataclass(frozen=True)
class SelectorState:
    current_copy: int
    policy: Policy
    seed: int = 0
    draws: int = 0  # random choices made so far; with seed this is the generator state

    def choose(self, candidates: Sequence[Copy]) -> tuple[Copy, "SelectorState"]:
        rng = np.random.default_rng([self.seed, self.draws])
        pick = candidates[int(rng.integers(len(candidates)))]
        return pick, replace(self, draws=self.draws + 1)


def check_catalog(catalog: CopyCatalog, policy: Policy) -> None:
    kinds = {c.kind for c in catalog.copies}
    if policy is Policy.NAIVE:
        ok = CopyKind.FULL in kinds
    elif policy is Policy.TILE:
        ok = kinds == {CopyKind.TILE}
    else:
        ok = len(catalog.of_kind(CopyKind.BCOPY)) == 4 and not kinds & {CopyKind.TILE, CopyKind.FULL}
    if not ok:
        raise ConfigurationError(f"catalog with {sorted(k.value for k in kinds)} does not fit policy {policy.value}")


def merged_preference(candidates: Sequence[Copy], enabled: bool = True) -> list[Copy]:
    """Restrict to merged copies when any are present (and preference is enabled)."""
    if enabled:
        merged = [c for c in candidates if c.kind is CopyKind.MERGED_FCOPY]
        if merged:
            return merged
    return list(candidates)


def _fcopy_candidates(catalog: CopyCatalog, policy: Policy, viewpoint: Direction, t: float) -> list[Copy]:
    if policy is Policy.FIST_DYNAMIC:
        pool = [c for c in catalog.copies if c.kind is CopyKind.FCOPY and c.dynamic]
    else:
        pool = [
            c
            for c in catalog.copies
            if (c.kind is CopyKind.FCOPY and not c.dynamic) or c.kind is CopyKind.MERGED_FCOPY
        ]
    return [c for c in pool if region_contains(c.region, viewpoint, t)]


def _nearest_tile(catalog: CopyCatalog, viewpoint: Direction, t: float, containing: bool) -> Copy:
    best, best_d = None, np.inf
    for c in catalog.copies:
        if containing and not region_contains(c.region, viewpoint, t):
            continue
        d = angular_distance(region_center_at(c.region, t), viewpoint)
        if d < best_d:  # strict: ties keep the lower id
            best, best_d = c, d
    if best is None:
        raise CatalogInvariantError(f"no tile covers {viewpoint}")
    return best


def _fist_pick(
    state: SelectorState, viewpoint: Direction, t: float, catalog: CopyCatalog, prefer_merged: bool
) -> tuple[Copy, SelectorState]:
    candidates = merged_preference(_fcopy_candidates(catalog, state.policy, viewpoint, t), prefer_merged)
    if candidates:
        return state.choose(candidates)
    for c in catalog.of_kind(CopyKind.BCOPY):
        if region_contains(c.region, viewpoint, t):
            return c, state
    raise CatalogInvariantError(f"no copy covers {viewpoint} at t={t}")


def initial_copy(
    catalog: CopyCatalog,
    first_viewpoint: Direction,
    policy: Policy,
    seed: int = 0,
    t: float = 0.0,
    prefer_merged: bool = True,
) -> SelectorState:
    check_catalog(catalog, policy)
    if policy is Policy.NAIVE:
        return SelectorState(catalog.of_kind(CopyKind.FULL)[0].id, policy, seed)
    if policy is Policy.TILE:
        return SelectorState(_nearest_tile(catalog, first_viewpoint, t, containing=False).id, policy, seed)
    state = SelectorState(-1, policy, seed)
    chosen, state = _fist_pick(state, first_viewpoint, t, catalog, prefer_merged)
    return replace(state, current_copy=chosen.id)


def select_copy(
    state: SelectorState,
    viewpoint: Direction,
    t: float,
    catalog: CopyCatalog,
    prefer_merged: bool = True,
) -> tuple[SelectorState, bool]:
    """One selection step; returns the next state and whether the copy changed."""
    if state.policy is Policy.NAIVE:
        return state, False
    current = catalog[state.current_copy]
    if region_contains(current.region, viewpoint, t):
        return state, False
    if state.policy is Policy.TILE:
        chosen = _nearest_tile(catalog, viewpoint, t, containing=True)
    else:
        chosen, state = _fist_pick(state, viewpoint, t, catalog, prefer_merged)
    return replace(state, current_copy=chosen.id), chosen.id != current.id
