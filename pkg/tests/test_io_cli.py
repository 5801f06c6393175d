"""Tests for CSV/JSON serialization, config loading, and the CLI."""

import json
import math

import numpy as np
import pytest

import tpi.io_cli as io_cli
from tpi import (
    CellResult,
    ConfigError,
    DiagnosticsRow,
    ExperimentConfig,
    ExperimentKind,
    GridCell,
    SweepResult,
    TrajectoryStats,
    run,
    sample_components,
    sample_sphere_init,
)
from tpi.experiments import DiagnosticsResult, TrajectoryResult
from tpi.io_cli import (
    DIAGNOSTICS_COLUMNS,
    SWEEP_COLUMNS,
    TRAJECTORY_COLUMNS,
    config_from_dict,
    load_config,
    main,
    read_diagnostics_csv,
    read_sweep_csv,
    read_trajectory_csv,
    trajectory_to_dict,
    write_diagnostics_csv,
    write_sweep_csv,
    write_trajectory_csv,
    write_trajectory_json,
)


def _sweep_result():
    cells = (
        CellResult(k=16, d=16, T=500, trials=3, successes=1,
                   success_rate=1 / 3, mean_steps_to_recovery=2.5,
                   numerical_failures=0),
        CellResult(k=1024, d=16, T=500, trials=3, successes=0,
                   success_rate=0.0, mean_steps_to_recovery=None,
                   numerical_failures=1),
    )
    return SweepResult(kind=ExperimentKind.PHASE_KD, cells=cells)


def test_sweep_csv_bytes_contract(tmp_path):
    path = tmp_path / "sweep.csv"
    write_sweep_csv(_sweep_result(), path)
    raw = path.read_bytes()
    assert b"\r" not in raw
    assert raw.endswith(b"\n")
    lines = raw.decode().splitlines()
    assert lines[0] == ",".join(SWEEP_COLUMNS)
    # Shortest round-trip float text, and the absent mean as an empty field.
    assert lines[1] == "16,16,500,3,1,0.3333333333333333,2.5,0"
    assert lines[2] == "1024,16,500,3,0,0.0,,1"


def test_sweep_csv_round_trip(tmp_path):
    path = tmp_path / "sweep.csv"
    want = _sweep_result()
    write_sweep_csv(want, path)
    got = read_sweep_csv(path)
    assert got == want
    as_dt = read_sweep_csv(path, kind=ExperimentKind.PHASE_DT)
    assert as_dt.kind is ExperimentKind.PHASE_DT
    assert as_dt.cells == want.cells


def test_trajectory_csv_round_trip(tmp_path):
    stats = (
        TrajectoryStats(t=0, mean_S=19086.6, std_S=700.25, predicted_S=19290.0,
                        monotone_fraction=1.0),
        TrajectoryStats(t=1, mean_S=22179.5, std_S=800.5, predicted_S=22290.0,
                        monotone_fraction=None),
    )
    result = TrajectoryResult(
        kind=ExperimentKind.OBJECTIVE_TRAJ, k=6430, d=150, t_c=1, trials=200,
        stats=stats, strictly_increasing_fraction=1.0, numerical_failures=0,
    )
    path = tmp_path / "traj.csv"
    write_trajectory_csv(result, path)
    assert path.read_text().splitlines()[0] == ",".join(TRAJECTORY_COLUMNS)
    got = read_trajectory_csv(path)
    assert tuple(got) == stats


def test_diagnostics_csv_round_trip_with_nan(tmp_path):
    rows = (
        DiagnosticsRow(trial=0, t=1, residual=0.0, alpha_sq_err=1e-16,
                       alpha1=1.0, P_over_Q=0.0, vt_ratio=float("nan"),
                       f_norm_over_k=14.5),
        DiagnosticsRow(trial=0, t=2, residual=2e-15, alpha_sq_err=3e-16,
                       alpha1=0.98, P_over_Q=0.04, vt_ratio=1.02,
                       f_norm_over_k=20.1),
    )
    result = DiagnosticsResult(kind=ExperimentKind.DIAGNOSTICS, k=2000, d=100,
                               T=2, trials=1, rows=rows)
    path = tmp_path / "diag.csv"
    write_diagnostics_csv(result, path)
    assert "nan" in path.read_text().splitlines()[1]
    got = read_diagnostics_csv(path)
    assert len(got) == 2
    assert math.isnan(got[0].vt_ratio)
    assert got[1] == rows[1]
    first = rows[0]
    for field in ("trial", "t", "residual", "alpha_sq_err", "alpha1",
                  "P_over_Q", "f_norm_over_k"):
        assert getattr(got[0], field) == getattr(first, field)


def test_reader_rejects_wrong_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("k,d,T\n1,2,3\n")
    with pytest.raises(ValueError, match="bad header"):
        read_sweep_csv(path)
    with pytest.raises(ValueError, match="bad header"):
        read_trajectory_csv(path)
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(ValueError, match="bad header"):
        read_diagnostics_csv(empty)


def _minimal_raw(**extra):
    raw = {
        "kind": "phase_kd",
        "grid": [{"k": 12, "d": 12, "T": 3}],
        "trials": 5,
    }
    raw.update(extra)
    return raw


def test_config_from_dict_minimal_and_defaults():
    cfg = config_from_dict(_minimal_raw())
    assert cfg.kind is ExperimentKind.PHASE_KD
    assert cfg.grid == (GridCell(k=12, d=12, T=3),)
    assert (cfg.trials, cfg.tau, cfg.m, cfg.base_seed) == (5, 0.95, 2, 0)
    assert cfg.record_full is False
    assert cfg.t_c is None


def test_config_from_dict_full_round_trip():
    cfg = ExperimentConfig(
        kind=ExperimentKind.PHASE_DT,
        grid=(GridCell(k=8, d=4, T=6), GridCell(k=math.ceil(9**1.5), d=9, T=6)),
        trials=7,
        tau=0.9,
        m=2,
        base_seed=11,
        record_full=True,
        ratio=1.5,
        memory_cap_floats=1e6,
    )
    assert config_from_dict(io_cli._config_to_dict(cfg)) == cfg
    traj_cfg = ExperimentConfig(
        kind=ExperimentKind.OBJECTIVE_TRAJ,
        grid=(GridCell(k=50, d=10, T=4),),
        trials=3,
        t_c=3,
    )
    assert config_from_dict(io_cli._config_to_dict(traj_cfg)) == traj_cfg


@pytest.mark.parametrize(
    "raw,message",
    [
        (_minimal_raw(taus=0.9), "taus"),
        ({"grid": [], "trials": 1}, "kind"),
        (_minimal_raw(kind="phase"), "phase_kd"),
        (_minimal_raw(grid="nope"), "grid"),
        (_minimal_raw(grid=[[12, 12, 3]]), "grid"),
        (_minimal_raw(grid=[{"k": 1, "d": 1, "T": 1, "tt": 2}]), "tt"),
        (_minimal_raw(grid=[{"k": 1, "d": 1}]), "T"),
        (_minimal_raw(trials="10"), "trials"),
        (_minimal_raw(trials=True), "trials"),
        (_minimal_raw(record_full="yes"), "record_full"),
        (_minimal_raw(t_c=3), "t_c"),  # only valid for objective_traj
    ],
)
def test_config_from_dict_errors_name_the_field(raw, message):
    with pytest.raises(ConfigError, match=message):
        config_from_dict(raw)


def test_load_config_rejects_bad_json(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError, match="JSON"):
        load_config(path)


def test_trajectory_to_dict_shapes():
    A = sample_components(30, 8, seed=3)
    x0 = sample_sphere_init(8, seed=4)
    traj = run(A, x0, max_steps=3, tau=0.9999, stop_at_recovery=False)
    full = trajectory_to_dict(traj)
    assert full["termination"] in ("recovered", "max_steps")
    assert full["steps_taken"] == 3
    assert full["init_seed"] == 4
    assert len(full["steps"]) == 3
    assert len(full["steps"][0]["x_tilde"]) == 8
    lean = trajectory_to_dict(traj, include_iterates=False)
    assert "x_tilde" not in lean["steps"][0]


def test_write_trajectory_json(tmp_path):
    A = sample_components(10, 5, seed=1)
    x0 = sample_sphere_init(5, seed=2)
    traj = run(A, x0, max_steps=2, stop_at_recovery=False)
    path = tmp_path / "traj.json"
    write_trajectory_json(traj, path, extra={"k": 10, "d": 5})
    payload = json.loads(path.read_text())
    assert payload["k"] == 10
    assert payload["steps_taken"] == len(payload["steps"])


# --- CLI ---------------------------------------------------------------------


def _write_phase_config(tmp_path, **extra):
    raw = {
        "kind": "phase_kd",
        "grid": [{"k": 12, "d": 12, "T": 3}, {"k": 40, "d": 12, "T": 3}],
        "trials": 6,
    }
    raw.update(extra)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(raw))
    return path


def test_cli_run_to_stdout(capsys):
    rc = main(["run", "--k", "1", "--d", "16", "--seed", "6", "--tau", "0.9"])
    assert rc == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["termination"] == "recovered"
    assert payload["recovered_component"]["index"] == 0
    assert payload["recovered_component"]["sign"] in (-1, 1)
    assert (payload["k"], payload["d"], payload["seed"]) == (1, 16, 6)


def test_cli_run_to_file(tmp_path, capsys):
    out = tmp_path / "run.json"
    rc = main(["run", "--k", "1", "--d", "16", "--seed", "6", "--tau", "0.9",
               "--out", str(out), "--max-steps", "20"])
    assert rc == 0
    payload = json.loads(out.read_text())
    assert payload["termination"] == "recovered"
    assert "wrote" in capsys.readouterr().out


def test_cli_sweep_phase_outputs(tmp_path, capsys):
    cfg = _write_phase_config(tmp_path)
    out = tmp_path / "out"
    rc = main(["sweep-phase", "--config", str(cfg), "--out", str(out)])
    assert rc == 0
    csv_path = out / "phase_kd.csv"
    assert csv_path.exists()
    cells = read_sweep_csv(csv_path).cells
    assert [(c.k, c.d, c.T) for c in cells] == [(12, 12, 3), (40, 12, 3)]
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["outputs"] == ["phase_kd.csv"]
    assert manifest["config"]["trials"] == 6
    assert manifest["artifact_version"]
    # The manifest's config echo reproduces the run exactly when fed back.
    echoed = config_from_dict(manifest["config"])
    rerun_dir = tmp_path / "rerun"
    cfg2 = tmp_path / "echo.json"
    cfg2.write_text(json.dumps(manifest["config"]))
    assert main(["sweep-phase", "--config", str(cfg2), "--out", str(rerun_dir)]) == 0
    assert (rerun_dir / "phase_kd.csv").read_bytes() == csv_path.read_bytes()
    assert echoed.grid == (GridCell(12, 12, 3), GridCell(40, 12, 3))


def test_cli_sweep_rerun_is_byte_identical(tmp_path):
    cfg = _write_phase_config(tmp_path)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["sweep-phase", "--config", str(cfg), "--out", str(out1)]) == 0
    assert main(["sweep-phase", "--config", str(cfg), "--out", str(out2)]) == 0
    assert (out1 / "phase_kd.csv").read_bytes() == (out2 / "phase_kd.csv").read_bytes()


def test_cli_parallel_sweep_matches_serial(tmp_path, monkeypatch):
    cfg = _write_phase_config(tmp_path)
    serial_dir, par_dir = tmp_path / "serial", tmp_path / "par"
    assert main(["sweep-phase", "--config", str(cfg), "--out", str(serial_dir)]) == 0
    monkeypatch.setenv("TPI_THREADS", "2")
    assert main(["sweep-phase", "--config", str(cfg), "--out", str(par_dir)]) == 0
    assert (serial_dir / "phase_kd.csv").read_bytes() == (
        par_dir / "phase_kd.csv"
    ).read_bytes()


def test_cli_max_steps_override(tmp_path):
    cfg = _write_phase_config(tmp_path)
    out = tmp_path / "out"
    rc = main(["sweep-phase", "--config", str(cfg), "--out", str(out),
               "--max-steps", "2"])
    assert rc == 0
    cells = read_sweep_csv(out / "phase_kd.csv").cells
    assert all(c.T == 2 for c in cells)
    manifest = json.loads((out / "manifest.json").read_text())
    assert all(cell["T"] == 2 for cell in manifest["config"]["grid"])


def test_cli_sweep_dt(tmp_path):
    raw = {
        "kind": "phase_dT",
        "grid": [{"k": 8, "d": 4, "T": 2}, {"k": 8, "d": 4, "T": 6}],
        "trials": 4,
        "ratio": 1.5,
    }
    cfg = tmp_path / "dt.json"
    cfg.write_text(json.dumps(raw))
    out = tmp_path / "out"
    rc = main(["sweep-dt", "--config", str(cfg), "--out", str(out)])
    assert rc == 0
    cells = read_sweep_csv(out / "phase_dT.csv",
                           kind=ExperimentKind.PHASE_DT).cells
    assert [c.T for c in cells] == [2, 6]
    assert cells[0].successes <= cells[1].successes


def test_cli_exit_2_on_kind_mismatch(tmp_path, capsys):
    cfg = _write_phase_config(tmp_path)
    rc = main(["sweep-dt", "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert rc == 2
    assert "kind" in capsys.readouterr().err


def test_cli_exit_2_on_unknown_field(tmp_path, capsys):
    cfg = _write_phase_config(tmp_path, taus=0.9)
    rc = main(["sweep-phase", "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert rc == 2
    assert "taus" in capsys.readouterr().err


def test_cli_exit_2_on_bad_json(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text("{broken")
    rc = main(["sweep-phase", "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert rc == 2
    assert "invalid config" in capsys.readouterr().err


def test_cli_exit_3_on_missing_config(tmp_path, capsys):
    rc = main(["sweep-phase", "--config", str(tmp_path / "absent.json"),
               "--out", str(tmp_path / "o")])
    assert rc == 3
    assert "i/o failure" in capsys.readouterr().err


def test_cli_exit_3_on_unwritable_out(tmp_path, capsys):
    cfg = _write_phase_config(tmp_path)
    blocker = tmp_path / "blocker"
    blocker.write_text("a file, not a directory")
    rc = main(["sweep-phase", "--config", str(cfg),
               "--out", str(blocker / "sub")])
    assert rc == 3
    assert "i/o failure" in capsys.readouterr().err


def test_cli_exit_1_on_trial_panic(tmp_path, monkeypatch, capsys):
    cfg = _write_phase_config(tmp_path)

    def boom(config):
        raise RuntimeError("exploded mid-trial")

    monkeypatch.setattr(io_cli, "run_phase_sweep", boom)
    rc = main(["sweep-phase", "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert rc == 1
    assert "run failed" in capsys.readouterr().err


def test_cli_missing_required_flag_is_usage_error(tmp_path):
    cfg = _write_phase_config(tmp_path)
    with pytest.raises(SystemExit) as exc:
        main(["sweep-phase", "--config", str(cfg)])
    assert exc.value.code == 2


def test_cli_trajectory_inline(tmp_path):
    out = tmp_path / "out"
    rc = main(["trajectory", "--k", "50", "--d", "10", "--tc", "2",
               "--trials", "3", "--out", str(out)])
    assert rc == 0
    stats = read_trajectory_csv(out / "objective_traj.csv")
    assert [s.t for s in stats] == [0, 1, 2]
    assert stats[1].predicted_S == 3.0 * 50 + 20.0 * 10
    assert stats[-1].monotone_fraction is None
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["outputs"] == ["objective_traj.csv"]


def test_cli_trajectory_rejects_conflicting_sources(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "kind": "objective_traj",
        "grid": [{"k": 50, "d": 10, "T": 2}],
        "trials": 2,
    }))
    rc = main(["trajectory", "--config", str(cfg), "--k", "50", "--d", "10",
               "--out", str(tmp_path / "o")])
    assert rc == 2
    assert "--config" in capsys.readouterr().err
    rc = main(["trajectory", "--k", "50", "--out", str(tmp_path / "o")])
    assert rc == 2


def test_cli_diagnose_inline(tmp_path):
    out = tmp_path / "out"
    rc = main(["diagnose", "--k", "90", "--d", "10", "--steps", "2",
               "--trials", "2", "--out", str(out)])
    assert rc == 0
    rows = read_diagnostics_csv(out / "diagnostics.csv")
    assert rows
    assert rows[0].t == 1
    assert math.isnan(rows[0].vt_ratio)


def test_cli_oracle_check(tmp_path, capsys):
    report = tmp_path / "oracle.json"
    rc = main(["oracle-check", "--out", str(report)])
    assert rc == 0
    assert "ok" in capsys.readouterr().out
    payload = json.loads(report.read_text())
    assert payload["ok"] is True
    assert payload["max_rel_err"] <= 1e-10
