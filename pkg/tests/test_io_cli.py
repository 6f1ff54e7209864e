import json
import os

import pytest

from krigplan import (
    Combination,
    GridSpec,
    Measurement,
    SchemaError,
    run_experiment,
)
from krigplan.cli import main
from krigplan.experiment_io import (
    atomic_write_text,
    audit_log_text,
    format_float,
    labels_csv_text,
    load_state,
    measurements_csv_text,
    predictions_csv_text,
    region_json_text,
    save_state,
    state_from_dict,
    state_to_dict,
)

from test_adaptive import replay_oracle, small_config


# --- formatting and atomic writes ---------------------------------------------

def test_format_float_six_significant_digits():
    assert format_float(0.1) == "0.1"
    assert format_float(1.0 / 3.0) == "0.333333"
    assert format_float(1234567.0) == "1.23457e+06"
    assert format_float(0.0) == "0"


def test_atomic_write(tmp_path):
    path = tmp_path / "out.txt"
    atomic_write_text(path, "first\n")
    assert path.read_text() == "first\n"
    atomic_write_text(path, "second\n")
    assert path.read_text() == "second\n"
    assert os.listdir(tmp_path) == ["out.txt"]  # no stray temp files


# --- state persistence ---------------------------------------------------------

def finished_state():
    config = small_config(max_iterations=3)
    return run_experiment(config, replay_oracle(config))


def test_state_round_trip(tmp_path):
    state = finished_state()
    oracle_spec = {"kind": "synthetic_logistic", "noise_std": 0.0}
    path = tmp_path / "exp.json"
    save_state(state, oracle_spec, path)
    loaded, spec = load_state(path)
    assert spec == oracle_spec
    assert state_to_dict(loaded, spec) == state_to_dict(state, oracle_spec)
    assert loaded.measurements == state.measurements
    assert loaded.history == state.history
    assert loaded.model == state.model
    assert loaded.stop_reason == state.stop_reason


def test_round_trip_preserves_full_float_precision(tmp_path):
    state = finished_state()
    path = tmp_path / "exp.json"
    save_state(state, {"kind": "synthetic_logistic"}, path)
    loaded, _ = load_state(path)
    for a, b in zip(state.measurements, loaded.measurements):
        assert a.response == b.response  # bitwise, not approximate


def test_load_rejects_wrong_version(tmp_path):
    state = finished_state()
    payload = state_to_dict(state, {"kind": "synthetic_logistic"})
    payload["version"] = 99
    path = tmp_path / "exp.json"
    path.write_text(json.dumps(payload))
    with pytest.raises(SchemaError):
        load_state(path)


def test_load_rejects_missing_field(tmp_path):
    state = finished_state()
    payload = state_to_dict(state, {"kind": "synthetic_logistic"})
    del payload["config"]["threshold"]
    with pytest.raises(SchemaError):
        state_from_dict(payload)


def test_load_reports_json_position(tmp_path):
    path = tmp_path / "exp.json"
    path.write_text('{"version": 1,\n  broken\n}')
    with pytest.raises(SchemaError) as exc:
        load_state(path)
    assert "line 2" in str(exc.value)


def test_load_missing_file(tmp_path):
    with pytest.raises(SchemaError):
        load_state(tmp_path / "absent.json")


# --- derived exports -----------------------------------------------------------

def test_export_formats():
    state = finished_state()
    from krigplan import build_grid, classify_grid, predict_grid, threshold_contour

    grid_points = build_grid(state.config.grid)
    preds = predict_grid(state.measurements, state.model, state.config.grid, grid_points)
    labels = classify_grid(preds, state.measurements, state.config.threshold, grid=grid_points)

    csv = predictions_csv_text(preds)
    lines = csv.strip().split("\n")
    assert lines[0] == "m,k,mean,variance,ci_lower,ci_upper"
    assert len(lines) == 1 + len(grid_points)

    ltext = labels_csv_text(labels)
    body = ltext.strip().split("\n")[1:]
    keys = [tuple(float(v) for v in row.split(",")[:2]) for row in body]
    assert keys == sorted(keys)

    mtext = measurements_csv_text(state.measurements)
    assert mtext.startswith("m,k,response\n")
    assert len(mtext.strip().split("\n")) == 1 + len(state.measurements)

    audit = audit_log_text(state.history)
    rows = [json.loads(line) for line in audit.strip().split("\n")]
    assert len(rows) == len(state.history)
    for row, rec in zip(rows, state.history):
        assert row["iteration"] == rec.iteration
        assert set(row) == {"iteration", "chosen_m", "chosen_k", "rc_score",
                            "model_family", "nugget", "range", "sill", "n_uncertain"}
        assert list(row) == sorted(row)  # stable key order for byte comparisons

    from krigplan import largest_reliable_region
    region = largest_reliable_region(labels)
    rtext = region_json_text(region)
    assert rtext == region_json_text(region)  # deterministic
    parsed = json.loads(rtext)
    assert parsed["cell_count"] == region.cell_count


def test_exports_are_byte_stable_across_runs():
    s1 = finished_state()
    s2 = finished_state()
    assert audit_log_text(s1.history) == audit_log_text(s2.history)
    assert measurements_csv_text(s1.measurements) == measurements_csv_text(s2.measurements)


# --- CLI ------------------------------------------------------------------------

CONFIG = {
    "name": "demo",
    "grid": {"m_min": 0.5, "m_max": 3.0, "m_stride": 0.5,
             "k_min": 1.0, "k_max": 30.0, "k_stride": 1.0, "k_scale": 0.1},
    "threshold": 4.0,
    "alpha": 0.1,
    "max_iterations": 4,
    "seed": 0,
    "initial_design": {"lattice": [2, 3]},
    "oracle": {"kind": "synthetic_logistic", "noise_std": 0.05, "seed": 0},
}

ARTIFACTS = ["predictions.csv", "labels.csv", "region.json",
             "contour.csv", "audit.ndjson", "measurements.csv"]


def write_config(tmp_path, overrides=None, name="config.json"):
    data = json.loads(json.dumps(CONFIG))
    for key, value in (overrides or {}).items():
        if value is None:
            data.pop(key, None)
        else:
            data[key] = value
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return path


def test_cli_init_run_report(tmp_path, capsys):
    config_path = write_config(tmp_path)
    assert main(["init", "--config", str(config_path)]) == 0
    exp_path = capsys.readouterr().out.strip()
    assert exp_path == str(tmp_path / "demo.json")

    assert main(["run", exp_path]) == 0
    out = capsys.readouterr().out
    assert "measurements:" in out and "model:" in out
    for name in ARTIFACTS:
        assert (tmp_path / name).exists()

    state, _ = load_state(exp_path)
    assert state.stop_reason in ("natural", "budget")
    assert len(state.measurements) >= 6

    assert main(["report", exp_path]) == 0
    assert "reliable region" in capsys.readouterr().out


def test_cli_init_refuses_overwrite(tmp_path, capsys):
    config_path = write_config(tmp_path)
    assert main(["init", "--config", str(config_path)]) == 0
    capsys.readouterr()
    assert main(["init", "--config", str(config_path)]) == 2
    assert "--force" in capsys.readouterr().err
    assert main(["init", "--config", str(config_path), "--force"]) == 0


def test_cli_out_dir_override(tmp_path, capsys, monkeypatch):
    out_dir = tmp_path / "artifacts"
    monkeypatch.setenv("KRIGPLAN_OUT_DIR", str(out_dir))
    config_path = write_config(tmp_path)
    assert main(["init", "--config", str(config_path)]) == 0
    exp_path = capsys.readouterr().out.strip()
    assert exp_path == str(out_dir / "demo.json")
    assert main(["run", exp_path]) == 0
    for name in ARTIFACTS:
        assert (out_dir / name).exists()


def test_cli_step_and_append_flow(tmp_path, capsys):
    from krigplan import SyntheticLogisticOracle

    surface = SyntheticLogisticOracle(noise_std=0.0)
    config_path = write_config(tmp_path, {"max_iterations": 2})
    main(["init", "--config", str(config_path)])
    exp_path = capsys.readouterr().out.strip()

    # walk the whole initial design interactively
    for _ in range(6):
        assert main(["step", exp_path]) == 0
        out = capsys.readouterr().out
        assert "suggest:" in out and "(initial)" in out
        parts = dict(p.split("=") for p in out.split()[1:3])
        value = surface.mean(float(parts["m"]), float(parts["k"]))
        assert main(["append", exp_path, "--m", parts["m"], "--k", parts["k"],
                     "--response", repr(value)]) == 0
        capsys.readouterr()

    assert main(["step", exp_path]) == 0
    out = capsys.readouterr().out
    assert "(adaptive)" in out
    assert "score:" in out
    parts = dict(p.split("=") for p in out.split()[1:3])
    assert main(["append", exp_path, "--m", parts["m"], "--k", parts["k"],
                 "--response", "3.9"]) == 0
    capsys.readouterr()

    state, _ = load_state(exp_path)
    assert state.iteration == 1
    assert len(state.history) == 1


def test_cli_append_rejects_unsolicited_point(tmp_path, capsys):
    config_path = write_config(tmp_path)
    main(["init", "--config", str(config_path)])
    exp_path = capsys.readouterr().out.strip()
    assert main(["append", exp_path, "--m", "1.5", "--k", "7", "--response", "3.0"]) == 2


def test_cli_run_resumes_after_oracle_miss(tmp_path, capsys):
    # replay table that withholds one initial-design point
    grid = GridSpec(**CONFIG["grid"])
    from krigplan import SyntheticLogisticOracle, build_grid
    oracle = SyntheticLogisticOracle(noise_std=0.0)
    withheld = Combination(3.0, 15.0)
    rows = ["m,k,response"]
    for c in build_grid(grid):
        if c != withheld:
            rows.append(f"{c.m},{c.k},{oracle.evaluate(c)!r}")
    table_path = tmp_path / "table.csv"
    table_path.write_text("\n".join(rows) + "\n")

    config_path = write_config(
        tmp_path, {"oracle": {"kind": "table_replay", "path": str(table_path)},
                   "max_iterations": 2})
    main(["init", "--config", str(config_path)])
    exp_path = capsys.readouterr().out.strip()

    assert main(["run", exp_path]) == 3
    err = capsys.readouterr().err
    assert "append" in err  # resume instructions
    state, _ = load_state(exp_path)
    measured_before = len(state.measurements)
    assert measured_before > 0

    value = oracle.evaluate(withheld)
    assert main(["append", exp_path, "--m", "3.0", "--k", "15",
                 "--response", repr(value)]) == 0
    capsys.readouterr()
    assert main(["run", exp_path]) == 0
    state, _ = load_state(exp_path)
    assert state.stop_reason == "budget"
    assert len(state.measurements) == 6 + 2


def test_cli_exit_code_2_on_bad_config(tmp_path, capsys):
    missing = write_config(tmp_path, {"threshold": None})
    assert main(["init", "--config", str(missing)]) == 2

    bad_json = tmp_path / "broken.json"
    bad_json.write_text("{not json")
    assert main(["init", "--config", str(bad_json)]) == 2
    assert "line 1" in capsys.readouterr().err

    bad_oracle = write_config(tmp_path, {"oracle": {"kind": "crystal_ball"}},
                              name="bad_oracle.json")
    assert main(["init", "--config", str(bad_oracle)]) == 2

    bad_name = write_config(tmp_path, {"name": "no/slashes"}, name="bad_name.json")
    assert main(["init", "--config", str(bad_name)]) == 2


def test_cli_exit_code_4_on_numerical_failure(tmp_path, capsys):
    config_path = write_config(tmp_path)
    main(["init", "--config", str(config_path)])
    exp_path = capsys.readouterr().out.strip()

    # hand the report a hopeless model: adjacent points, near-flat variogram
    data = json.loads(open(exp_path).read())
    data["measurements"] = [
        {"m": 1.0, "k": 3.0, "response": 2.0},
        {"m": 1.0, "k": 4.0, "response": 2.1},
    ]
    data["model"] = {"family": "gaussian", "nugget": 0.0, "range": 1e6,
                     "sill": 1.0, "fit_mse": 0.0, "flag": None}
    open(exp_path, "w").write(json.dumps(data))

    assert main(["report", exp_path]) == 4
    assert "ill-conditioned" in capsys.readouterr().err


def test_cli_run_seed_override_changes_responses(tmp_path, capsys):
    config_path = write_config(tmp_path)
    main(["init", "--config", str(config_path)])
    exp_path = capsys.readouterr().out.strip()
    assert main(["run", exp_path, "--seed", "1", "--max-iter", "1"]) == 0
    capsys.readouterr()
    state1, _ = load_state(exp_path)

    main(["init", "--config", str(config_path), "--force"])
    capsys.readouterr()
    assert main(["run", exp_path, "--seed", "2", "--max-iter", "1"]) == 0
    capsys.readouterr()
    state2, _ = load_state(exp_path)

    r1 = [m.response for m in state1.measurements]
    r2 = [m.response for m in state2.measurements]
    assert r1 != r2


def test_cli_step_after_stop(tmp_path, capsys):
    config_path = write_config(tmp_path, {"max_iterations": 1})
    main(["init", "--config", str(config_path)])
    exp_path = capsys.readouterr().out.strip()
    assert main(["run", exp_path]) == 0
    capsys.readouterr()
    assert main(["step", exp_path]) == 0
    out = capsys.readouterr().out
    assert out.startswith("stop:")
