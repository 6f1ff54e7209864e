"""Experiment persistence and result exports.

The experiment file is JSON with a version tag and full-precision floats,
so load(save(state)) reproduces the state exactly.  Result exports (CSV,
region JSON, audit log) are derived artifacts: they format every float at
6 significant digits with stable ordering, so identical states always
produce byte-identical files.  All writes are atomic (temp file in the
target directory, then rename).
"""
from __future__ import annotations

import json
import os
import tempfile
from dataclasses import asdict

from .adaptive import (
    ExperimentConfig,
    ExperimentState,
    IterationRecord,
    PendingSuggestion,
)
from .errors import SchemaError
from .grid import Combination, GridSpec, Measurement
from .region import RegionReport
from .variogram import VariogramModel

STATE_VERSION = 1


def format_float(value: float) -> str:
    """Fixed 6-significant-digit decimal form used in every export."""
    return f"{value:.6g}"


def _round6(value: float) -> float:
    return float(format_float(value))


def atomic_write_text(path, text: str) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# --- experiment state -------------------------------------------------------

def _model_to_dict(model: VariogramModel | None):
    if model is None:
        return None
    return {
        "family": model.family,
        "nugget": model.nugget,
        "range": model.range,
        "sill": model.sill,
        "fit_mse": model.fit_mse,
        "flag": model.flag,
    }


def _model_from_dict(data) -> VariogramModel | None:
    if data is None:
        return None
    return VariogramModel(
        family=data["family"],
        nugget=data["nugget"],
        range=data["range"],
        sill=data["sill"],
        fit_mse=data.get("fit_mse", 0.0),
        flag=data.get("flag"),
    )


def state_to_dict(state: ExperimentState, oracle_spec: dict) -> dict:
    config = state.config
    pending = state.pending
    return {
        "version": STATE_VERSION,
        "config": {
            "grid": asdict(config.grid),
            "threshold": config.threshold,
            "alpha": config.alpha,
            "max_iterations": config.max_iterations,
            "initial_design": [[c.m, c.k] for c in config.initial_design],
            "seed": config.seed,
        },
        "oracle": oracle_spec,
        "measurements": [
            {"m": m.location.m, "k": m.location.k, "response": m.response}
            for m in state.measurements
        ],
        "model": _model_to_dict(state.model),
        "iteration": state.iteration,
        "history": [
            {
                "iteration": rec.iteration,
                "chosen_m": rec.location.m,
                "chosen_k": rec.location.k,
                "rc_score": rec.rc_score,
                "model": _model_to_dict(rec.model),
                "n_uncertain": rec.n_uncertain,
            }
            for rec in state.history
        ],
        "stop_reason": state.stop_reason,
        "pending_suggestion": None if pending is None else {
            "m": pending.location.m,
            "k": pending.location.k,
            "phase": pending.phase,
            "rc_score": pending.rc_score,
            "model": _model_to_dict(pending.model),
            "n_uncertain": pending.n_uncertain,
        },
    }


def state_from_dict(data: dict) -> tuple[ExperimentState, dict]:
    if not isinstance(data, dict):
        raise SchemaError("experiment file must hold a JSON object")
    version = data.get("version")
    if version != STATE_VERSION:
        raise SchemaError(f"unsupported experiment file version {version!r} (expected {STATE_VERSION})")
    try:
        cfg = data["config"]
        grid = GridSpec(**cfg["grid"])
        config = ExperimentConfig(
            grid=grid,
            threshold=cfg["threshold"],
            alpha=cfg["alpha"],
            max_iterations=cfg["max_iterations"],
            initial_design=tuple(grid.snap(m, k) for m, k in cfg["initial_design"]),
            seed=cfg["seed"],
        )
        measurements = [
            Measurement(grid.snap(row["m"], row["k"]), row["response"])
            for row in data["measurements"]
        ]
        history = [
            IterationRecord(
                iteration=rec["iteration"],
                location=grid.snap(rec["chosen_m"], rec["chosen_k"]),
                rc_score=rec["rc_score"],
                model=_model_from_dict(rec["model"]),
                n_uncertain=rec["n_uncertain"],
            )
            for rec in data["history"]
        ]
        pend = data.get("pending_suggestion")
        pending = None if pend is None else PendingSuggestion(
            location=grid.snap(pend["m"], pend["k"]),
            phase=pend["phase"],
            rc_score=pend["rc_score"],
            model=_model_from_dict(pend["model"]),
            n_uncertain=pend["n_uncertain"],
        )
        state = ExperimentState(
            config=config,
            measurements=measurements,
            model=_model_from_dict(data["model"]),
            iteration=data["iteration"],
            history=history,
            stop_reason=data.get("stop_reason"),
            pending=pending,
        )
        oracle_spec = data["oracle"]
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"experiment file is missing or mistypes a field: {exc}") from exc
    return state, oracle_spec


def save_state(state: ExperimentState, oracle_spec: dict, path) -> None:
    payload = state_to_dict(state, oracle_spec)
    atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def load_state(path) -> tuple[ExperimentState, dict]:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise SchemaError(f"experiment file {path} does not exist") from None
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return state_from_dict(data)


# --- derived exports --------------------------------------------------------

def predictions_csv_text(predictions) -> str:
    lines = ["m,k,mean,variance,ci_lower,ci_upper"]
    for p in predictions:
        lines.append(",".join(format_float(v) for v in
                              (p.location.m, p.location.k, p.mean, p.variance, p.ci_lower, p.ci_upper)))
    return "\n".join(lines) + "\n"


def labels_csv_text(labels: dict[Combination, str]) -> str:
    lines = ["m,k,label"]
    for loc in sorted(labels, key=lambda c: (c.m, c.k)):
        lines.append(f"{format_float(loc.m)},{format_float(loc.k)},{labels[loc]}")
    return "\n".join(lines) + "\n"


def region_json_text(report: RegionReport) -> str:
    payload = {
        "cell_count": report.cell_count,
        "m_min": None if report.m_min is None else _round6(report.m_min),
        "m_max": None if report.m_max is None else _round6(report.m_max),
        "k_min": None if report.k_min is None else _round6(report.k_min),
        "k_max": None if report.k_max is None else _round6(report.k_max),
        "cells": [[_round6(c.m), _round6(c.k)] for c in report.cells],
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def contour_csv_text(polylines) -> str:
    lines = ["polyline_id,m,k"]
    for pid, line in enumerate(polylines):
        for m, k in line:
            lines.append(f"{pid},{format_float(m)},{format_float(k)}")
    return "\n".join(lines) + "\n"


def audit_log_text(history) -> str:
    lines = []
    for rec in history:
        lines.append(json.dumps({
            "iteration": rec.iteration,
            "chosen_m": _round6(rec.location.m),
            "chosen_k": _round6(rec.location.k),
            "rc_score": _round6(rec.rc_score),
            "model_family": rec.model.family,
            "nugget": _round6(rec.model.nugget),
            "range": _round6(rec.model.range),
            "sill": _round6(rec.model.sill),
            "n_uncertain": rec.n_uncertain,
        }, sort_keys=True))
    return "".join(line + "\n" for line in lines)


def measurements_csv_text(measurements) -> str:
    lines = ["m,k,response"]
    for m in measurements:
        lines.append(",".join(format_float(v) for v in (m.location.m, m.location.k, m.response)))
    return "\n".join(lines) + "\n"
