"""Command-line driver.

Workflow: ``init`` turns a config file into an experiment file; ``run``
drives the measure-fit-select loop against the configured response source;
``step``/``append`` run the same loop interactively, one suggestion at a
time, for responses produced offline; ``report`` rebuilds the derived
artifacts (predictions, labels, region, contour, audit log) from whatever
is measured so far.

Exit codes: 0 success (including a clean stop), 2 configuration/validation
problems, 3 missing oracle value, 4 numerical failure.

Artifacts are written next to the experiment file unless KRIGPLAN_OUT_DIR
is set.
"""
from __future__ import annotations

import argparse
import json
import os
import re
import sys
from dataclasses import replace

from . import experiment_io as eio
from .adaptive import (
    ExperimentConfig,
    ExperimentState,
    record_appended_measurement,
    run_experiment,
    suggest_next,
)
from .errors import (
    ConfigurationError,
    DuplicateLocationError,
    InsufficientDataError,
    KrigplanError,
    NumericalFailureError,
    OracleMissError,
    SchemaError,
)
from .grid import GridSpec, Measurement, build_grid, evenly_spaced_design
from .kriging import predict_grid
from .oracle import REPLAY_KIND, SYNTHETIC_KIND, build_oracle
from .region import classify_grid, largest_reliable_region, threshold_contour
from .variogram import empirical_variogram, select_model

OUT_DIR_ENV = "KRIGPLAN_OUT_DIR"

_NAME_RE = re.compile(r"^[A-Za-z0-9._-]+$")


def _out_dir(experiment_path: str) -> str:
    override = os.environ.get(OUT_DIR_ENV)
    if override:
        os.makedirs(override, exist_ok=True)
        return override
    return os.path.dirname(os.path.abspath(experiment_path))


def _load_config(path: str) -> tuple[ExperimentConfig, dict, str]:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ConfigurationError(f"config file {path} does not exist") from None
    except json.JSONDecodeError as exc:
        raise ConfigurationError(
            f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: config must be a JSON object")

    name = data.get("name", "experiment")
    if not isinstance(name, str) or not _NAME_RE.match(name):
        raise ConfigurationError(f"experiment name {name!r} must match {_NAME_RE.pattern}")

    try:
        grid = GridSpec(**data["grid"])
    except KeyError:
        raise ConfigurationError(f"{path}: config needs a 'grid' object") from None
    except TypeError as exc:
        raise ConfigurationError(f"{path}: bad grid spec: {exc}") from None

    design_raw = data.get("initial_design")
    if isinstance(design_raw, dict) and set(design_raw) == {"lattice"}:
        n_m, n_k = design_raw["lattice"]
        initial = evenly_spaced_design(grid, int(n_m), int(n_k))
    elif isinstance(design_raw, list):
        initial = [grid.snap(float(m), float(k)) for m, k in design_raw]
    else:
        raise ConfigurationError(
            f"{path}: initial_design must be a list of [m, k] pairs or {{\"lattice\": [n_m, n_k]}}"
        )

    seed = int(data.get("seed", 0))
    config = ExperimentConfig(
        grid=grid,
        threshold=float(data["threshold"]) if "threshold" in data else _missing(path, "threshold"),
        alpha=float(data.get("alpha", 0.1)),
        max_iterations=int(data.get("max_iterations", 50)),
        initial_design=tuple(initial),
        seed=seed,
    )

    oracle_spec = data.get("oracle")
    if not isinstance(oracle_spec, dict) or "kind" not in oracle_spec:
        raise ConfigurationError(f"{path}: config needs an 'oracle' object with a 'kind'")
    if oracle_spec["kind"] == SYNTHETIC_KIND:
        build_oracle(oracle_spec, grid, default_seed=seed)  # validates parameters
    elif oracle_spec["kind"] == REPLAY_KIND:
        if "path" not in oracle_spec:
            raise ConfigurationError(f"{path}: table_replay oracle needs a 'path'")
    else:
        raise ConfigurationError(f"{path}: unknown oracle kind {oracle_spec['kind']!r}")
    return config, oracle_spec, name


def _missing(path, fieldname):
    raise ConfigurationError(f"{path}: config needs a '{fieldname}' value")


def _write_artifacts(state: ExperimentState, out_dir: str, alpha: float | None = None) -> dict:
    """Recompute and write every derived artifact; returns a small summary."""
    if not state.measurements:
        raise ConfigurationError("no measurements yet; nothing to report")
    config = state.config
    if alpha is None:
        alpha = config.alpha
    model = state.model
    if model is None:
        model = select_model(empirical_variogram(state.measurements, config.grid))
        state.model = model
    grid_points = build_grid(config.grid)
    predictions = predict_grid(state.measurements, model, config.grid, grid_points, alpha=alpha)
    labels = classify_grid(predictions, state.measurements, config.threshold, grid=grid_points)
    region = largest_reliable_region(labels, state.measurements, config.threshold)
    contour = threshold_contour(predictions, config.threshold)

    eio.atomic_write_text(os.path.join(out_dir, "predictions.csv"), eio.predictions_csv_text(predictions))
    eio.atomic_write_text(os.path.join(out_dir, "labels.csv"), eio.labels_csv_text(labels))
    eio.atomic_write_text(os.path.join(out_dir, "region.json"), eio.region_json_text(region))
    eio.atomic_write_text(os.path.join(out_dir, "contour.csv"), eio.contour_csv_text(contour))
    eio.atomic_write_text(os.path.join(out_dir, "audit.ndjson"), eio.audit_log_text(state.history))
    eio.atomic_write_text(os.path.join(out_dir, "measurements.csv"),
                          eio.measurements_csv_text(state.measurements))
    return {
        "measurements": len(state.measurements),
        "iterations": state.iteration,
        "region_cells": region.cell_count,
        "region": region,
        "model": model,
    }


def _print_summary(state: ExperimentState, summary: dict) -> None:
    model = summary["model"]
    print(f"measurements: {summary['measurements']} (adaptive iterations: {summary['iterations']})")
    if state.stop_reason:
        print(f"stop: {state.stop_reason}")
    print(f"model: {model.family} nugget={eio.format_float(model.nugget)} "
          f"range={eio.format_float(model.range)} sill={eio.format_float(model.sill)}")
    region = summary["region"]
    if region.cell_count:
        print(f"reliable region: {region.cell_count} cells, "
              f"m in [{eio.format_float(region.m_min)}, {eio.format_float(region.m_max)}], "
              f"k in [{eio.format_float(region.k_min)}, {eio.format_float(region.k_max)}]")
    else:
        print("reliable region: empty")


def cmd_init(args) -> int:
    config, oracle_spec, name = _load_config(args.config)
    out_dir = os.environ.get(OUT_DIR_ENV) or os.path.dirname(os.path.abspath(args.config))
    os.makedirs(out_dir, exist_ok=True)
    experiment_path = os.path.join(out_dir, f"{name}.json")
    if os.path.exists(experiment_path) and not args.force:
        raise ConfigurationError(
            f"experiment file {experiment_path} already exists; pass --force to overwrite"
        )
    state = ExperimentState(config=config)
    eio.save_state(state, oracle_spec, experiment_path)
    print(experiment_path)
    return 0


def cmd_run(args) -> int:
    state, oracle_spec = eio.load_state(args.experiment)
    config = state.config
    if args.max_iter is not None:
        config = replace(config, max_iterations=args.max_iter)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
        if oracle_spec.get("kind") == SYNTHETIC_KIND:
            oracle_spec = {**oracle_spec, "seed": args.seed}
    state.config = config
    oracle = build_oracle(oracle_spec, config.grid, default_seed=config.seed)

    def persist(st: ExperimentState) -> None:
        eio.save_state(st, oracle_spec, args.experiment)

    try:
        state = run_experiment(config, oracle, state=state, on_update=persist)
    except OracleMissError as exc:
        if exc.state is not None:
            eio.save_state(exc.state, oracle_spec, args.experiment)
        loc = exc.location
        print(f"error: {exc}", file=sys.stderr)
        if loc is not None:
            print(
                f"produce the response offline, then resume with:\n"
                f"  krigplan append {args.experiment} --m {loc.m} --k {loc.k} --response <value>\n"
                f"  krigplan run {args.experiment}",
                file=sys.stderr,
            )
        return 3

    eio.save_state(state, oracle_spec, args.experiment)
    summary = _write_artifacts(state, _out_dir(args.experiment))
    _print_summary(state, summary)
    return 0


def cmd_step(args) -> int:
    state, oracle_spec = eio.load_state(args.experiment)
    suggestion, stop = suggest_next(state)
    eio.save_state(state, oracle_spec, args.experiment)
    if stop is not None:
        print(f"stop: {stop}")
        return 0
    loc = suggestion.location
    print(f"suggest: m={loc.m} k={loc.k} ({suggestion.phase})")
    if suggestion.rc_score is not None:
        print(f"score: {eio.format_float(suggestion.rc_score)} "
              f"uncertain_points: {suggestion.n_uncertain}")
    return 0


def cmd_append(args) -> int:
    state, oracle_spec = eio.load_state(args.experiment)
    location = state.config.grid.snap(args.m, args.k)
    record_appended_measurement(state, Measurement(location, args.response))
    eio.save_state(state, oracle_spec, args.experiment)
    print(f"recorded: m={location.m} k={location.k} response={args.response} "
          f"(total {len(state.measurements)})")
    return 0


def cmd_report(args) -> int:
    state, oracle_spec = eio.load_state(args.experiment)
    summary = _write_artifacts(state, _out_dir(args.experiment), alpha=args.alpha)
    eio.save_state(state, oracle_spec, args.experiment)
    _print_summary(state, summary)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="krigplan",
        description="Kriging-guided measurement planning for threshold-region mapping.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_init = sub.add_parser("init", help="create an experiment file from a config")
    p_init.add_argument("--config", required=True, help="path to the JSON config")
    p_init.add_argument("--force", action="store_true", help="overwrite an existing experiment file")
    p_init.set_defaults(func=cmd_init)

    p_run = sub.add_parser("run", help="run the adaptive loop to a stop")
    p_run.add_argument("experiment", help="path to the experiment file")
    p_run.add_argument("--max-iter", type=int, default=None,
                       help="override the adaptive-measurement budget")
    p_run.add_argument("--seed", type=int, default=None,
                       help="override the experiment seed (and synthetic oracle noise seed)")
    p_run.set_defaults(func=cmd_run)

    p_step = sub.add_parser("step", help="compute one suggestion without measuring")
    p_step.add_argument("experiment")
    p_step.set_defaults(func=cmd_step)

    p_append = sub.add_parser("append", help="record an offline-measured response")
    p_append.add_argument("experiment")
    p_append.add_argument("--m", type=float, required=True)
    p_append.add_argument("--k", type=float, required=True)
    p_append.add_argument("--response", type=float, required=True)
    p_append.set_defaults(func=cmd_append)

    p_report = sub.add_parser("report", help="rebuild artifacts from the current state")
    p_report.add_argument("experiment")
    p_report.add_argument("--alpha", type=float, default=None,
                          help="confidence level for the exported intervals")
    p_report.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except OracleMissError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NumericalFailureError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except (ConfigurationError, SchemaError, InsufficientDataError, DuplicateLocationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except KrigplanError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
