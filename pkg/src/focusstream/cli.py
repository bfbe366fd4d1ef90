"""Command-line experiment runner.

Subcommands: ``synth``, ``detect``, ``tune``, ``sweep`` and ``compare``. Exit
status is 0 on success, 1 for configuration errors and 2 for runtime or I/O
errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .catalog import CopyCatalog, build_fist_catalog, build_naive_catalog, build_tile_catalog, write_catalog
from .config import ConfigError, ExperimentConfig, load_config
from .selector import Policy
from .simulator import (
    Metrics,
    NetworkConfig,
    SessionReport,
    aggregate,
    selection_schedule,
    simulate_session,
    train_transition_model,
)
from .synth import synth_traces, write_ground_truth
from .trace import TraceSet, attention_map, filter_dirty, read_traces, split, write_attention_csv, write_attention_pgm, write_traces
from .vfd import (
    SimulationConfig,
    detect_dynamic_focuses,
    detect_static_focuses,
    focus_count_sweep,
    merge_focuses,
    tune_eps,
    write_focus_file,
)

log = logging.getLogger("focusstream")

METRIC_FIELDS = (
    "policy",
    "variant",
    "bandwidth",
    "switching_number",
    "standstill_rel",
    "standstill_s",
    "naive_standstill_s",
    "zero_baseline",
    "high_quality_rate",
    "alpha",
    "n_sessions",
)
FIGURES = {
    "fig_switching.csv": "switching_number",
    "fig_standstill.csv": "standstill_rel",
    "fig_quality.csv": "high_quality_rate",
    "fig_alpha.csv": "alpha",
}


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, float) else str(x)


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def load_corpus(cfg: ExperimentConfig) -> TraceSet:
    if cfg.trace_path is not None:
        return read_traces(cfg.trace_path, cfg.unit, cfg.has_header)
    return synth_traces(cfg.synthetic_spec())


def prepare(cfg: ExperimentConfig) -> tuple[TraceSet, TraceSet]:
    """Load, filter and split the corpus into (train, validation)."""
    f = cfg.raw["filter"]
    clean = filter_dirty(load_corpus(cfg), f["stillness_threshold"], f["min_trace_len"])
    if len(clean) < 2:
        raise RuntimeError(f"only {len(clean)} trace(s) left after filtering; need at least 2 to split")
    return split(clean, cfg.raw["split"]["train_fraction"], cfg.seed)


def cmd_synth(cfg: ExperimentConfig) -> Path:
    """Write a synthetic trace CSV and its ground-truth focuses."""
    spec = cfg.synthetic_spec()
    cfg.out.mkdir(parents=True, exist_ok=True)
    write_traces(synth_traces(spec), cfg.out / "traces.csv")
    write_ground_truth(spec, cfg.out / "ground_truth.json")
    return cfg.out / "traces.csv"


def cmd_detect(cfg: ExperimentConfig) -> tuple[list, list]:
    """Detect static and moving focuses; write the focus file and attention maps."""
    train, _ = prepare(cfg)
    static = detect_static_focuses(train, cfg.static_params)
    dynamic = detect_dynamic_focuses(train, cfg.dynamic_params)
    cfg.out.mkdir(parents=True, exist_ok=True)
    write_focus_file(cfg.out / "focuses.json", static, dynamic)
    grid = attention_map(train, cfg.raw["attention"]["grid_w"], cfg.raw["attention"]["grid_h"])
    write_attention_csv(grid, cfg.out / "attention.csv")
    write_attention_pgm(grid, cfg.out / "attention.pgm")
    return static, dynamic


def cmd_tune(cfg: ExperimentConfig):
    """Tune eps on the validation traces; write the best eps and the score history."""
    train, val = prepare(cfg)
    net = cfg.raw["network"]
    sim = SimulationConfig(
        NetworkConfig(cfg.raw["tuner"]["bandwidth"], net["segment_len"], net["buffer_capacity"], net["switch_flush"]),
        cfg.copy_config,
        cfg.seed,
    )
    params, history = tune_eps(train, val, cfg.static_params, cfg.tuner_config(), sim)
    cfg.out.mkdir(parents=True, exist_ok=True)
    best = min(history, key=lambda h: (h.score, h.iteration)) if history else None
    tuned = {
        "eps": params.eps,
        "min_samples": params.min_samples,
        "score": best.score if best else None,
        "n_focuses": best.n_focuses if best else None,
        "evaluations": len(history),
    }
    (cfg.out / "tuned.json").write_text(json.dumps(tuned, indent=2) + "\n", encoding="utf-8")
    _write_csv(
        cfg.out / "tune_history.csv",
        ("iteration", "eps", "score", "n_focuses", "switches_per_min", "standstill_frac", "high_quality_rate",
         "alpha", "step", "direction", "improved"),
        [(h.iteration, h.eps, h.score, h.n_focuses, h.switches_per_min, h.standstill_frac, h.high_quality_rate,
          h.alpha, h.step, h.direction, int(h.improved)) for h in history],
    )
    return params, history


def cmd_sweep(cfg: ExperimentConfig) -> list[tuple[float, int]]:
    """Count static focuses over an eps grid."""
    train, _ = prepare(cfg)
    s = cfg.raw["sweep"]
    table = focus_count_sweep(train, s["eps"], s["min_samples"])
    _write_csv(cfg.out / "sweep.csv", ("eps", "n_focuses"), table)
    return table


@dataclass
class CompareResult:
    rows: list[dict]
    reports: dict[tuple[str, str, float], list[SessionReport]] = field(default_factory=dict)

    def metrics(self, policy: str, variant: str, bandwidth: float) -> dict:
        for r in self.rows:
            if r["policy"] == policy and r["variant"] == variant and r["bandwidth"] == bandwidth:
                return r
        raise KeyError((policy, variant, bandwidth))


def _series(cfg: ExperimentConfig) -> list[tuple[Policy, str]]:
    out = [(Policy.NAIVE, "base")]
    for p in cfg.policies:
        if p is Policy.NAIVE:
            continue
        for v in cfg.variants:
            if v == "nomerge" and p is not Policy.FIST_STATIC:
                continue
            out.append((p, v))
    return out


def run_compare(cfg: ExperimentConfig) -> CompareResult:
    train, val = prepare(cfg)
    ccfg = cfg.copy_config
    static = detect_static_focuses(train, cfg.static_params)
    pairs = merge_focuses(static, ccfg.merge_threshold)
    catalogs: dict[tuple[Policy, bool], CopyCatalog] = {
        (Policy.NAIVE, True): build_naive_catalog(ccfg),
        (Policy.TILE, True): build_tile_catalog(ccfg),
        (Policy.FIST_STATIC, True): build_fist_catalog(static, (), pairs, ccfg),
        (Policy.FIST_STATIC, False): build_fist_catalog(static, (), (), ccfg),
    }
    series = _series(cfg)
    if any(p is Policy.FIST_DYNAMIC for p, _ in series):
        dynamic = detect_dynamic_focuses(train, cfg.dynamic_params)
        catalogs[(Policy.FIST_DYNAMIC, True)] = build_fist_catalog((), dynamic, (), ccfg)

    cfg.out.mkdir(parents=True, exist_ok=True)
    write_focus_file(cfg.out / "focuses.json", static, [])
    for (policy, merging), cat in catalogs.items():
        suffix = "" if merging else "_nomerge"
        write_catalog(cat, cfg.out / f"catalog_{policy.value.lower()}{suffix}.json")

    net = cfg.raw["network"]
    result = CompareResult(rows=[])
    for policy, variant in series:
        merging = variant != "nomerge"
        cat = catalogs[(policy, merging)]
        model = train_transition_model(train, cat, policy, cfg.seed, merging) if variant == "prefetch" else None
        schedules = [selection_schedule(tr, cat, policy, cfg.seed + i, merging) for i, tr in enumerate(val)]
        for bw in cfg.bandwidths:
            nc = NetworkConfig(bw, net["segment_len"], net["buffer_capacity"], net["switch_flush"])
            result.reports[(policy.value, variant, bw)] = [
                simulate_session(tr, cat, policy, nc, model, cfg.seed + i, merging, schedules[i])
                for i, tr in enumerate(val)
            ]
    for policy, variant in series:
        for bw in cfg.bandwidths:
            m: Metrics = aggregate(result.reports[(policy.value, variant, bw)], result.reports[("NAIVE", "base", bw)])
            result.rows.append(
                {
                    "policy": policy.value,
                    "variant": variant,
                    "bandwidth": bw,
                    "switching_number": m.switching_number,
                    "standstill_rel": m.standstill_rel,
                    "standstill_s": m.standstill_s,
                    "naive_standstill_s": m.naive_standstill_s,
                    "zero_baseline": int(m.zero_baseline),
                    "high_quality_rate": m.high_quality_rate,
                    "alpha": m.alpha,
                    "n_sessions": len(val),
                }
            )
    _write_csv(cfg.out / "metrics.csv", METRIC_FIELDS, [[r[k] for k in METRIC_FIELDS] for r in result.rows])
    labels = [p.value if v == "base" else f"{p.value}+{v}" for p, v in series]
    for name, key in FIGURES.items():
        table = []
        for bw in cfg.bandwidths:
            table.append([bw] + [result.metrics(p.value, v, bw)[key] for p, v in series])
        _write_csv(cfg.out / name, ["bandwidth", *labels], table)
    return result


def cmd_compare(cfg: ExperimentConfig) -> CompareResult:
    """Simulate every policy over the bandwidth grid; write metrics and per-figure tables."""
    return run_compare(cfg)


COMMANDS = {
    "synth": cmd_synth,
    "detect": cmd_detect,
    "tune": cmd_tune,
    "sweep": cmd_sweep,
    "compare": cmd_compare,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="focusstream", description="Focus-based panoramic streaming experiments.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__.splitlines()[0])
        p.add_argument("--config", type=Path, help="JSON config file; every key is optional")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", type=Path, help="output directory")
        p.add_argument("--traces", type=Path, help="trace CSV (user_id,t,x,y,z) instead of the synthetic corpus")
        p.add_argument("--policy", action="append", choices=[x.value for x in Policy],
                       help="policy to compare (repeatable); NAIVE is always included")
        p.add_argument("--bandwidth", action="append", type=float, help="bandwidth to simulate (repeatable)")
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    over: dict = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.out is not None:
        over["out"] = str(args.out)
    if args.traces is not None:
        over["traces"] = {"path": str(args.traces)}
    if args.policy:
        over["policies"] = list(dict.fromkeys(["NAIVE", *args.policy]))
    if args.bandwidth:
        over["network"] = {"bandwidths": args.bandwidth}
        over["tuner"] = {"bandwidth": args.bandwidth[0]}
    return over


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, _overrides(args))
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        COMMANDS[args.command](cfg)
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
