import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from focusstream.clustering import DbscanParams
from focusstream.geometry import Direction, angle_between, angular_distance
from focusstream.synth import FocusSpec, SyntheticSpec, synth_traces
from focusstream.trace import Trace, TraceSet
from focusstream.vfd import (
    DynamicFocus,
    StaticFocus,
    TunerConfig,
    detect_dynamic_focuses,
    detect_static_focuses,
    focus_count_sweep,
    focuses_from_dict,
    focuses_to_dict,
    merge_focuses,
    read_focus_file,
    step_search,
    tune_eps,
    write_focus_file,
)


def greedy_match(found, truth):
    """Pair each true center with the nearest unused found center."""
    used, dists = set(), []
    for t in truth:
        best = min((i for i in range(len(found)) if i not in used), key=lambda i: angular_distance(found[i], t))
        used.add(best)
        dists.append(angular_distance(found[best], t))
    return dists


def test_three_focus_corpus_recovered():
    truth = [Direction(-2.0, 0.1), Direction(0.4, -0.2), Direction(2.2, 0.4)]
    spec = SyntheticSpec(tuple(FocusSpec.static(d, dwell_mean=40.0) for d in truth), noise_sigma=0.05,
                         wander_fraction=0.10, n_users=30, duration=120.0, max_speed=3.0, seed=9)
    found = detect_static_focuses(synth_traces(spec), DbscanParams(0.3, 100))
    assert len(found) == 3
    assert max(greedy_match([f.center for f in found], truth)) < 0.1
    masses = [f.mass for f in found]
    assert masses == sorted(masses, reverse=True) and sum(masses) <= 1.0
    assert [f.id for f in found] == ["s0", "s1", "s2"]


def test_uniform_wandering_has_no_focus():
    spec = SyntheticSpec((), wander_fraction=1.0, n_users=10, duration=60.0, seed=2)
    assert detect_static_focuses(synth_traces(spec), DbscanParams(0.3, 1000)) == []


def test_parked_single_user_at_most_one_focus():
    t = np.arange(0, 20.0, 0.1)
    tr = Trace("a", t, np.full(len(t), 0.7), np.full(len(t), 0.1))
    assert len(detect_static_focuses(TraceSet("v", (tr,)), DbscanParams(0.3, 100))) <= 1


def test_dynamic_focus_tracks_moving_target(moving_split):
    train, _ = moving_split
    found = detect_dynamic_focuses(train, DbscanParams(0.2, 30, 1.0))
    assert len(found) == 1
    f = found[0]
    assert angular_distance(f.center_at(30.0), Direction(1.0, 0.0)) < 0.15
    path = f.path
    for (t0, a), (t1, b) in zip(path, path[1:]):
        assert angular_distance(a, b) <= math.pi * (t1 - t0) + 1e-9


def test_dynamic_detection_of_static_focus_is_stationary():
    spec = SyntheticSpec((FocusSpec.static(Direction(0.3, 0.1), dwell_mean=40.0),), wander_fraction=0.1,
                         n_users=20, duration=60.0, max_speed=3.0, seed=4)
    found = detect_dynamic_focuses(synth_traces(spec), DbscanParams(0.2, 30, 1.0))
    assert len(found) >= 1
    centers = np.array([d.unit() for _, d in found[0].path])
    assert angle_between(centers[:, None], centers[None]).max() < 0.1


def test_dynamic_empty_and_demoted():
    t = np.arange(0, 0.5, 0.1)
    tr = Trace("a", t, np.zeros(len(t)), np.zeros(len(t)))
    ts = TraceSet("v", (tr,))
    assert detect_dynamic_focuses(ts, DbscanParams(0.2, 100)) == []
    short = detect_dynamic_focuses(ts, DbscanParams(0.2, 2))
    assert len(short) == 1 and len(short[0].path) == 2
    assert short[0].path[0][1] == short[0].path[1][1]


def focus(i, yaw_deg):
    return StaticFocus(f"f{i}", Direction(math.radians(yaw_deg), 0.0), 0.05, 0.1)


def test_merge_examples():
    assert merge_focuses([focus(0, 0), focus(1, 10)], math.radians(30)) == [("f0", "f1")]
    assert merge_focuses([focus(0, 0)], math.radians(30)) == []
    three = [focus(0, 0), focus(1, 25), focus(2, 50)]
    oracle = {(a.id, b.id) for a in three for b in three
              if a.id < b.id and abs(math.degrees(a.center.yaw - b.center.yaw)) <= 30}
    assert set(merge_focuses(three, math.radians(30))) == oracle == {("f0", "f1"), ("f1", "f2")}
    with pytest.raises(ValueError):
        merge_focuses(three, 0.0)


@given(st.permutations(list(range(5))))
def test_merge_symmetric_under_reordering(perm):
    fs = [focus(i, y) for i, y in enumerate([0, 20, 35, 100, 115])]
    base = {frozenset(p) for p in merge_focuses(fs, math.radians(30))}
    assert {frozenset(p) for p in merge_focuses([fs[i] for i in perm], math.radians(30))} == base


def test_sweep_validation_and_single_row(reference_split):
    train, _ = reference_split
    with pytest.raises(ValueError):
        focus_count_sweep(train, [])
    with pytest.raises(ValueError):
        focus_count_sweep(train, [0.3, 0.2])
    table = focus_count_sweep(train, [0.3])
    assert table == [(0.3, len(detect_static_focuses(train, DbscanParams(0.3, 100))))]


def test_focus_file_roundtrip(tmp_path):
    s = [StaticFocus("s0", Direction(0.1, 0.2), 0.1, 0.5)]
    d = [DynamicFocus("d0", ((0.0, Direction(0, 0)), (1.0, Direction(0.1, 0))), 0.1, 0.4)]
    write_focus_file(tmp_path / "f.json", s, d)
    assert read_focus_file(tmp_path / "f.json") == (s, d)
    assert focuses_from_dict(focuses_to_dict(s, d)) == (s, d)


def test_focus_invariants():
    with pytest.raises(ValueError):
        StaticFocus("x", Direction(0, 0), -0.1, 0.5)
    with pytest.raises(ValueError):
        StaticFocus("x", Direction(0, 0), 0.1, 0.0)
    with pytest.raises(ValueError):
        DynamicFocus("x", ((0.0, Direction(0, 0)),), 0.1, 0.5)


def test_step_search_keeps_direction_on_improvement():
    cfg = TunerConfig(initial_eps=0.3, eps_step=0.1)
    probes = step_search(lambda e: (e - 0.75) ** 2, cfg)
    first, third = probes[1][0], probes[3][0]
    assert probes[1][4] and probes[2][4]
    assert third == first + 2 * cfg.eps_step


def test_step_search_reverses_and_shrinks():
    cfg = TunerConfig(initial_eps=0.5, eps_step=0.1, shrink=0.5)
    probes = step_search(lambda e: (e - 0.42) ** 2, cfg)
    assert probes[1][0] == pytest.approx(0.6) and not probes[1][4]
    assert probes[2][0] == pytest.approx(0.45) and probes[2][2] == pytest.approx(0.05) and probes[2][3] == -1


def test_step_search_clamps_non_positive_eps():
    cfg = TunerConfig(initial_eps=0.05, eps_step=0.1, converge_step=0.01, max_iters=10)
    probes = step_search(lambda e: e, cfg)  # smaller is always better, so the walk heads below 0
    clamped = [p for p in probes if p[0] == cfg.converge_step]
    assert clamped and not any(p[4] for p in clamped)
    assert all(p[0] > 0 for p in probes)


@given(st.floats(0.05, 1.0), st.floats(0.01, 0.3), st.floats(0.1, 0.9), st.integers(0, 15), st.floats(0.0, 1.5))
def test_step_search_bounds(initial, step, shrink, max_iters, target):
    cfg = TunerConfig(initial_eps=initial, eps_step=step, shrink=shrink, max_iters=max_iters, converge_step=0.01)
    probes = step_search(lambda e: abs(e - target), cfg)
    assert len(probes) <= max_iters
    assert all(math.isfinite(p[1]) for p in probes)


def test_tune_zero_iterations(reference_split):
    train, val = reference_split
    base = DbscanParams(0.3, 100)
    assert tune_eps(train, val, base, TunerConfig(max_iters=0)) == (base, [])


def test_tune_history_properties(reference_split):
    train, val = reference_split
    params, history = tune_eps(train, val, DbscanParams(0.3, 100), TunerConfig(max_iters=6))
    assert 1 <= len(history) <= 6
    assert params.eps == min(history, key=lambda h: h.score).eps
    assert params.min_samples == 100
    assert all(math.isfinite(h.score) for h in history)
