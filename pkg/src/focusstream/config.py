"""Experiment configuration: a JSON file where every key is optional.

Angles are in degrees in the file and radians everywhere else.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .catalog import CopyConfig, RateModel
from .clustering import DbscanParams
from .selector import Policy
from .synth import SyntheticSpec, moving_spec, reference_spec
from .vfd import TunerConfig

VARIANTS = ("base", "prefetch", "nomerge")

DEFAULTS: dict[str, Any] = {
    "seed": 42,
    "out": "out",
    "traces": {"path": None, "unit": "rad", "has_header": True, "synthetic": "reference"},
    "filter": {"stillness_threshold": 30.0, "min_trace_len": 10.0},
    "split": {"train_fraction": 0.8},
    "static_dbscan": {"eps": 0.3, "min_samples": 100},
    "dynamic_dbscan": {"eps": 0.2, "min_samples": 30, "time_scale": 1.0},
    "tuner": {
        "eps_step": 0.1,
        "shrink": 0.5,
        "max_iters": 12,
        "converge_step": 0.01,
        "weights": {"switch": 1.0, "standstill": 1.0, "quality": 2.0, "alpha": 0.5},
        "switch_norm": 10.0,
        "random_direction": False,
        "bandwidth": 0.5,
    },
    "copy": {
        "min_yaw_extent_deg": 120.0,
        "min_pitch_extent_deg": 90.0,
        "margin_deg": 10.0,
        "merge_threshold_deg": 30.0,
        "low_density": 0.125,
    },
    "network": {
        "bandwidths": [0.2, 0.4, 0.5, 0.6, 0.8, 1.0],
        "segment_len": 1.0,
        "buffer_capacity": 2,
        "switch_flush": True,
    },
    "policies": ["NAIVE", "TILE", "FIST_STATIC", "FIST_DYNAMIC"],
    "variants": ["base", "prefetch", "nomerge"],
    "sweep": {"eps": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0], "min_samples": 100},
    "attention": {"grid_w": 72, "grid_h": 36},
}


class ConfigError(ValueError):
    """The configuration is malformed or refers to missing inputs."""


def _merge(base: dict, over: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in over.items():
        if key not in base:
            raise ConfigError(f"unknown config key {where}{key!r}")
        if isinstance(base[key], dict) and isinstance(value, dict) and key != "traces":
            out[key] = _merge(base[key], value, f"{where}{key}.")
        elif key == "traces" and isinstance(value, dict):
            out[key] = {**base[key], **value}
        else:
            out[key] = value
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    raw: dict

    # typed views over the raw dict

    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    @property
    def out(self) -> Path:
        return Path(self.raw["out"])

    @property
    def trace_path(self) -> Path | None:
        p = self.raw["traces"]["path"]
        return Path(p) if p else None

    @property
    def unit(self) -> str:
        return self.raw["traces"]["unit"]

    @property
    def has_header(self) -> bool:
        return bool(self.raw["traces"]["has_header"])

    def synthetic_spec(self) -> SyntheticSpec:
        src = self.raw["traces"]["synthetic"]
        if src == "reference":
            return reference_spec(seed=self.seed)
        if src == "moving":
            return moving_spec(seed=self.seed)
        if isinstance(src, dict):
            return SyntheticSpec.from_dict({"seed": self.seed, **src})
        raise ConfigError(f"traces.synthetic must be 'reference', 'moving' or an object, got {src!r}")

    @property
    def static_params(self) -> DbscanParams:
        return DbscanParams(**self.raw["static_dbscan"])

    @property
    def dynamic_params(self) -> DbscanParams:
        return DbscanParams(**self.raw["dynamic_dbscan"])

    @property
    def copy_config(self) -> CopyConfig:
        c = self.raw["copy"]
        return CopyConfig(
            min_yaw_extent=math.radians(c["min_yaw_extent_deg"]),
            min_pitch_extent=math.radians(c["min_pitch_extent_deg"]),
            margin=math.radians(c["margin_deg"]),
            merge_threshold=math.radians(c["merge_threshold_deg"]),
            rate_model=RateModel(low_density=c["low_density"], segment_len=self.raw["network"]["segment_len"]),
        )

    def tuner_config(self) -> TunerConfig:
        t = self.raw["tuner"]
        w = t["weights"]
        return TunerConfig(
            initial_eps=self.static_params.eps,
            eps_step=t["eps_step"],
            shrink=t["shrink"],
            max_iters=t["max_iters"],
            converge_step=t["converge_step"],
            w_switch=w["switch"],
            w_standstill=w["standstill"],
            w_quality=w["quality"],
            w_alpha=w["alpha"],
            switch_norm=t["switch_norm"],
            random_direction=t["random_direction"],
            seed=self.seed,
        )

    @property
    def bandwidths(self) -> list[float]:
        return [float(b) for b in self.raw["network"]["bandwidths"]]

    @property
    def policies(self) -> list[Policy]:
        return [Policy(p) for p in self.raw["policies"]]

    @property
    def variants(self) -> list[str]:
        return list(self.raw["variants"])


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    raw = cfg.raw
    try:
        if cfg.trace_path is not None and not cfg.trace_path.is_file():
            raise ConfigError(f"trace file not found: {cfg.trace_path}")
        if cfg.trace_path is None:
            cfg.synthetic_spec()
        if cfg.unit not in ("rad", "deg"):
            raise ConfigError(f"traces.unit must be 'rad' or 'deg', got {cfg.unit!r}")
        bws = cfg.bandwidths
        if not bws or any(not (b > 0 and math.isfinite(b)) for b in bws):
            raise ConfigError("network.bandwidths must be a non-empty list of positive numbers")
        cfg.policies
        bad = [v for v in cfg.variants if v not in VARIANTS]
        if bad:
            raise ConfigError(f"unknown variants {bad}; choose from {list(VARIANTS)}")
        cfg.static_params, cfg.dynamic_params, cfg.copy_config, cfg.tuner_config()
        if not 0 < raw["split"]["train_fraction"] < 1:
            raise ConfigError("split.train_fraction must be in (0, 1)")
        if not raw["sweep"]["eps"]:
            raise ConfigError("sweep.eps must not be empty")
        if not raw["tuner"]["bandwidth"] > 0:
            raise ConfigError("tuner.bandwidth must be positive")
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc
    return cfg


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> ExperimentConfig:
    """Defaults, then the file at ``path``, then ``overrides``; validated."""
    raw = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
        try:
            user = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}: {exc.msg}") from exc
        if not isinstance(user, dict):
            raise ConfigError(f"{path}: top level must be an object")
        raw = _merge(raw, user)
    if overrides:
        raw = _merge(raw, overrides)
    return validate(ExperimentConfig(raw))
