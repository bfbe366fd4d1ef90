"""Focus-based panoramic video streaming: focus detection from watching traces,
copy catalogs, copy selection and a trace-driven streaming simulator."""

from .catalog import Copy, CopyCatalog, CopyConfig, CopyKind, RateModel, build_fist_catalog, build_naive_catalog, build_tile_catalog
from .clustering import ClusterResult, DbscanParams, Metric, PointKind, cluster_summary, dbscan
from .geometry import Direction, ViewRegion, angular_distance, region_area_fraction, region_center_at, region_contains
from .selector import CatalogInvariantError, ConfigurationError, Policy, SelectorState, initial_copy, merged_preference, select_copy
from .simulator import Metrics, NetworkConfig, SessionReport, TransitionMatrix, aggregate, simulate_session, train_transition_model
from .synth import FocusSpec, SyntheticSpec, moving_spec, reference_spec, synth_traces
from .trace import Trace, TraceSet, ViewSample, attention_map, filter_dirty, parse_traces, split
from .vfd import (
    DynamicFocus,
    StaticFocus,
    TunerConfig,
    detect_dynamic_focuses,
    detect_static_focuses,
    focus_count_sweep,
    merge_focuses,
    tune_eps,
)

__all__ = [
    "Copy",
    "CopyCatalog",
    "CopyConfig",
    "CopyKind",
    "RateModel",
    "build_fist_catalog",
    "build_naive_catalog",
    "build_tile_catalog",
    "ClusterResult",
    "DbscanParams",
    "Metric",
    "PointKind",
    "cluster_summary",
    "dbscan",
    "Direction",
    "ViewRegion",
    "angular_distance",
    "region_area_fraction",
    "region_center_at",
    "region_contains",
    "CatalogInvariantError",
    "ConfigurationError",
    "Policy",
    "SelectorState",
    "initial_copy",
    "merged_preference",
    "select_copy",
    "Metrics",
    "NetworkConfig",
    "SessionReport",
    "TransitionMatrix",
    "aggregate",
    "simulate_session",
    "train_transition_model",
    "FocusSpec",
    "SyntheticSpec",
    "moving_spec",
    "reference_spec",
    "synth_traces",
    "Trace",
    "TraceSet",
    "ViewSample",
    "attention_map",
    "filter_dirty",
    "parse_traces",
    "split",
    "DynamicFocus",
    "StaticFocus",
    "TunerConfig",
    "detect_dynamic_focuses",
    "detect_static_focuses",
    "focus_count_sweep",
    "merge_focuses",
    "tune_eps",
]
