"""Delimited output, run manifests, and the command-line front end.

CSV contract: comma-separated, header row always present, newline is
"\\n", floats printed as their shortest round-trip decimal (Python repr),
absent values as empty fields.  Reruns with identical config produce
byte-identical files.

Exit codes: 0 success, 2 invalid configuration (message names the
offending field), 3 I/O failure, 1 anything that escapes a trial.
"""

from __future__ import annotations

import argparse
import datetime
import json
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .experiments import (
    ConfigError,
    DiagnosticsResult,
    DiagnosticsRow,
    ExperimentConfig,
    ExperimentKind,
    GridCell,
    CellResult,
    SweepResult,
    TrajectoryResult,
    TrajectoryStats,
    run_dT_sweep,
    run_diagnostics,
    run_objective_traj,
    run_phase_sweep,
)
from .model import derive_seed, sample_components, sample_sphere_init
from .power_iter import Trajectory, run
from .tensor_core import contract_explicit, contract_implicit, materialize_tensor

__all__ = [
    "RunManifest",
    "SWEEP_COLUMNS",
    "TRAJECTORY_COLUMNS",
    "DIAGNOSTICS_COLUMNS",
    "config_from_dict",
    "load_config",
    "main",
    "read_diagnostics_csv",
    "read_sweep_csv",
    "read_trajectory_csv",
    "trajectory_to_dict",
    "write_diagnostics_csv",
    "write_manifest",
    "write_sweep_csv",
    "write_trajectory_csv",
    "write_trajectory_json",
]

SWEEP_COLUMNS = (
    "k",
    "d",
    "T",
    "trials",
    "successes",
    "success_rate",
    "mean_steps_to_recovery",
    "numerical_failures",
)
TRAJECTORY_COLUMNS = ("t", "mean_S", "std_S", "predicted_S", "monotone_fraction")
DIAGNOSTICS_COLUMNS = (
    "trial",
    "t",
    "residual",
    "alpha_sq_err",
    "alpha1",
    "P_over_Q",
    "vt_ratio",
    "f_norm_over_k",
)


# --- formatting -------------------------------------------------------------


def _fmt(value) -> str:
    """Shortest round-trip text for one CSV field."""
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def _write_rows(path: Path, header: tuple[str, ...], rows) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    path.write_text("\n".join(lines) + "\n")


def _read_rows(path: Path, header: tuple[str, ...]) -> list[list[str]]:
    text = Path(path).read_text()
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or tuple(lines[0].split(",")) != header:
        got = lines[0] if lines else ""
        raise ValueError(f"bad header: expected {','.join(header)!r}, got {got!r}")
    return [line.split(",") for line in lines[1:]]


def _parse_float(text: str) -> float | None:
    return None if text == "" else float(text)


# --- CSV writers / readers --------------------------------------------------


def write_sweep_csv(result: SweepResult, path: str | Path) -> None:
    rows = [
        (
            c.k,
            c.d,
            c.T,
            c.trials,
            c.successes,
            c.success_rate,
            c.mean_steps_to_recovery,
            c.numerical_failures,
        )
        for c in result.cells
    ]
    _write_rows(Path(path), SWEEP_COLUMNS, rows)


def read_sweep_csv(
    path: str | Path, kind: ExperimentKind = ExperimentKind.PHASE_KD
) -> SweepResult:
    cells = []
    for row in _read_rows(Path(path), SWEEP_COLUMNS):
        cells.append(
            CellResult(
                k=int(row[0]),
                d=int(row[1]),
                T=int(row[2]),
                trials=int(row[3]),
                successes=int(row[4]),
                success_rate=float(row[5]),
                mean_steps_to_recovery=_parse_float(row[6]),
                numerical_failures=int(row[7]),
            )
        )
    return SweepResult(kind=kind, cells=tuple(cells))


def write_trajectory_csv(result: TrajectoryResult, path: str | Path) -> None:
    rows = [
        (s.t, s.mean_S, s.std_S, s.predicted_S, s.monotone_fraction)
        for s in result.stats
    ]
    _write_rows(Path(path), TRAJECTORY_COLUMNS, rows)


def read_trajectory_csv(path: str | Path) -> list[TrajectoryStats]:
    return [
        TrajectoryStats(
            t=int(row[0]),
            mean_S=float(row[1]),
            std_S=float(row[2]),
            predicted_S=float(row[3]),
            monotone_fraction=_parse_float(row[4]),
        )
        for row in _read_rows(Path(path), TRAJECTORY_COLUMNS)
    ]


def write_diagnostics_csv(result: DiagnosticsResult, path: str | Path) -> None:
    rows = [
        (
            r.trial,
            r.t,
            r.residual,
            r.alpha_sq_err,
            r.alpha1,
            r.P_over_Q,
            r.vt_ratio,
            r.f_norm_over_k,
        )
        for r in result.rows
    ]
    _write_rows(Path(path), DIAGNOSTICS_COLUMNS, rows)


def read_diagnostics_csv(path: str | Path) -> list[DiagnosticsRow]:
    return [
        DiagnosticsRow(
            trial=int(row[0]),
            t=int(row[1]),
            residual=float(row[2]),
            alpha_sq_err=float(row[3]),
            alpha1=float(row[4]),
            P_over_Q=float(row[5]),
            vt_ratio=float(row[6]),
            f_norm_over_k=float(row[7]),
        )
        for row in _read_rows(Path(path), DIAGNOSTICS_COLUMNS)
    ]


# --- trajectory JSON --------------------------------------------------------


def trajectory_to_dict(traj: Trajectory, include_iterates: bool = True) -> dict:
    steps = []
    for rec in traj.steps:
        entry = {
            "t": rec.t,
            "objective_value": rec.objective_value,
            "recovery": rec.recovery,
        }
        if include_iterates:
            entry["x_tilde"] = [float(v) for v in rec.x_tilde]
        steps.append(entry)
    recovered = None
    if traj.recovered_component is not None:
        index, sign = traj.recovered_component
        recovered = {"index": index, "sign": sign}
    return {
        "termination": traj.termination.value,
        "steps_taken": traj.length,
        "recovered_component": recovered,
        "init_seed": traj.init.seed,
        "steps": steps,
    }


def write_trajectory_json(
    traj: Trajectory, path: str | Path, extra: dict | None = None
) -> None:
    payload = dict(extra or {})
    payload.update(trajectory_to_dict(traj))
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


# --- manifest ---------------------------------------------------------------


@dataclass(frozen=True)
class RunManifest:
    """Provenance sidecar: resolved config, version, wall-clock, outputs."""

    config: dict
    artifact_version: str
    started_at: str
    finished_at: str
    outputs: tuple[str, ...]


def write_manifest(manifest: RunManifest, path: str | Path) -> None:
    Path(path).write_text(json.dumps(asdict(manifest), indent=2) + "\n")


# --- config files -----------------------------------------------------------

_CONFIG_FIELDS = {
    "kind",
    "grid",
    "trials",
    "tau",
    "m",
    "base_seed",
    "record_full",
    "ratio",
    "t_c",
    "memory_cap_floats",
}
_CELL_FIELDS = {"k", "d", "T"}


def _as_int(raw: dict, field: str) -> int:
    v = raw[field]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{field}: expected an integer, got {v!r}")
    return v


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Build and validate an ExperimentConfig; unknown fields are errors."""
    if not isinstance(raw, dict):
        raise ConfigError(f"config: expected a JSON object, got {type(raw).__name__}")
    unknown = set(raw) - _CONFIG_FIELDS
    if unknown:
        raise ConfigError(f"unknown config field: {sorted(unknown)[0]!r}")
    for field in ("kind", "grid", "trials"):
        if field not in raw:
            raise ConfigError(f"{field}: required field is missing")

    kind_text = raw["kind"]
    try:
        kind = ExperimentKind(kind_text)
    except ValueError:
        valid = ", ".join(k.value for k in ExperimentKind)
        raise ConfigError(f"kind: {kind_text!r} is not one of {valid}") from None

    if not isinstance(raw["grid"], list):
        raise ConfigError("grid: expected a list of {k, d, T} objects")
    cells = []
    for entry in raw["grid"]:
        if not isinstance(entry, dict):
            raise ConfigError(f"grid: expected a {{k, d, T}} object, got {entry!r}")
        bad = set(entry) - _CELL_FIELDS
        if bad:
            raise ConfigError(f"grid: unknown cell field {sorted(bad)[0]!r}")
        missing = _CELL_FIELDS - set(entry)
        if missing:
            raise ConfigError(f"grid: cell is missing field {sorted(missing)[0]!r}")
        cells.append(
            GridCell(k=_as_int(entry, "k"), d=_as_int(entry, "d"), T=_as_int(entry, "T"))
        )

    kwargs: dict = {
        "kind": kind,
        "grid": tuple(cells),
        "trials": _as_int(raw, "trials"),
    }
    if "tau" in raw:
        kwargs["tau"] = float(raw["tau"])
    if "m" in raw:
        kwargs["m"] = _as_int(raw, "m")
    if "base_seed" in raw:
        kwargs["base_seed"] = _as_int(raw, "base_seed")
    if "record_full" in raw:
        if not isinstance(raw["record_full"], bool):
            raise ConfigError(
                f"record_full: expected a boolean, got {raw['record_full']!r}"
            )
        kwargs["record_full"] = raw["record_full"]
    if "ratio" in raw:
        kwargs["ratio"] = float(raw["ratio"])
    if "t_c" in raw and raw["t_c"] is not None:
        kwargs["t_c"] = _as_int(raw, "t_c")
    if "memory_cap_floats" in raw:
        kwargs["memory_cap_floats"] = float(raw["memory_cap_floats"])

    config = ExperimentConfig(**kwargs)
    config.validate()
    return config


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"config: {path} is not valid JSON ({e})") from None
    return config_from_dict(raw)


def _config_to_dict(config: ExperimentConfig) -> dict:
    return {
        "kind": config.kind.value,
        "grid": [{"k": c.k, "d": c.d, "T": c.T} for c in config.grid],
        "trials": config.trials,
        "tau": config.tau,
        "m": config.m,
        "base_seed": config.base_seed,
        "record_full": config.record_full,
        "ratio": config.ratio,
        "t_c": config.t_c,
        "memory_cap_floats": config.memory_cap_floats,
    }


# --- CLI --------------------------------------------------------------------


def _now() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def _apply_overrides(config: ExperimentConfig, args) -> ExperimentConfig:
    """Flag values win over config-file values."""
    import dataclasses

    changes: dict = {}
    if args.seed is not None:
        changes["base_seed"] = args.seed
    if args.trials is not None:
        changes["trials"] = args.trials
    if args.tau is not None:
        changes["tau"] = args.tau
    if args.order_m is not None:
        changes["m"] = args.order_m
    if getattr(args, "max_steps", None) is not None:
        changes["grid"] = tuple(
            GridCell(k=c.k, d=c.d, T=args.max_steps) for c in config.grid
        )
    if not changes:
        return config
    config = dataclasses.replace(config, **changes)
    config.validate()
    return config


def _sweep_command(args, kind: ExperimentKind, runner, csv_name: str) -> int:
    started = _now()
    config = load_config(args.config)
    if config.kind is not kind:
        raise ConfigError(
            f"kind: this subcommand runs {kind.value}, config says "
            f"{config.kind.value}"
        )
    config = _apply_overrides(config, args)
    result = runner(config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / csv_name
    write_sweep_csv(result, csv_path)
    manifest = RunManifest(
        config=_config_to_dict(config),
        artifact_version=__version__,
        started_at=started,
        finished_at=_now(),
        outputs=(csv_path.name,),
    )
    write_manifest(manifest, out_dir / "manifest.json")
    print(f"wrote {csv_path} ({len(result.cells)} cells)")
    return 0


def _cmd_sweep_phase(args) -> int:
    return _sweep_command(args, ExperimentKind.PHASE_KD, run_phase_sweep, "phase_kd.csv")


def _cmd_sweep_dt(args) -> int:
    return _sweep_command(args, ExperimentKind.PHASE_DT, run_dT_sweep, "phase_dT.csv")


def _inline_or_file_config(args, kind: ExperimentKind, T: int) -> ExperimentConfig:
    if args.config is not None and args.k is not None:
        raise ConfigError("grid: give either --config or --k/--d, not both")
    if args.config is not None:
        config = load_config(args.config)
        if config.kind is not kind:
            raise ConfigError(
                f"kind: this subcommand runs {kind.value}, config says "
                f"{config.kind.value}"
            )
        return _apply_overrides(config, args)
    if args.k is None or args.d is None:
        raise ConfigError("grid: need --config, or both --k and --d")
    config = ExperimentConfig(
        kind=kind,
        grid=(GridCell(k=args.k, d=args.d, T=T),),
        trials=args.trials if args.trials is not None else 100,
        tau=args.tau if args.tau is not None else 0.95,
        m=args.order_m if args.order_m is not None else 2,
        base_seed=args.seed if args.seed is not None else 0,
        t_c=T if kind is ExperimentKind.OBJECTIVE_TRAJ else None,
    )
    config.validate()
    return config


def _cmd_trajectory(args) -> int:
    started = _now()
    t_c = args.tc if args.tc is not None else 4
    config = _inline_or_file_config(args, ExperimentKind.OBJECTIVE_TRAJ, t_c)
    if args.tc is not None:
        result = run_objective_traj(config, t_c=args.tc)
    else:
        result = run_objective_traj(config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "objective_traj.csv"
    write_trajectory_csv(result, csv_path)
    manifest = RunManifest(
        config=_config_to_dict(config),
        artifact_version=__version__,
        started_at=started,
        finished_at=_now(),
        outputs=(csv_path.name,),
    )
    write_manifest(manifest, out_dir / "manifest.json")
    print(
        f"wrote {csv_path} (t = 0..{result.t_c}, "
        f"strictly increasing in {result.strictly_increasing_fraction:.0%} of trials)"
    )
    return 0


def _cmd_diagnose(args) -> int:
    started = _now()
    T = args.steps if args.steps is not None else 10
    config = _inline_or_file_config(args, ExperimentKind.DIAGNOSTICS, T)
    result = run_diagnostics(config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "diagnostics.csv"
    write_diagnostics_csv(result, csv_path)
    manifest = RunManifest(
        config=_config_to_dict(config),
        artifact_version=__version__,
        started_at=started,
        finished_at=_now(),
        outputs=(csv_path.name,),
    )
    write_manifest(manifest, out_dir / "manifest.json")
    print(f"wrote {csv_path} ({len(result.rows)} rows)")
    return 0


def _cmd_run(args) -> int:
    m = args.order_m if args.order_m is not None else 2
    seed = args.seed if args.seed is not None else 0
    A = sample_components(args.k, args.d, m, derive_seed(seed, 0))
    x0 = sample_sphere_init(args.d, derive_seed(seed, 1))
    traj = run(
        A,
        x0,
        max_steps=args.max_steps if args.max_steps is not None else 1000,
        tau=args.tau if args.tau is not None else 0.95,
        record_full=args.record_full,
    )
    payload = {"k": args.k, "d": args.d, "m": m, "seed": seed}
    payload.update(trajectory_to_dict(traj))
    text = json.dumps(payload, indent=2)
    if args.out is not None:
        Path(args.out).write_text(text + "\n")
        print(f"wrote {args.out}")
    else:
        print(text)
    return 0


def _cmd_oracle_check(args) -> int:
    """Implicit vs explicit contraction across all small shapes.

    The discrepancy is normalized by the absolute-value contraction
    scale |T| |x|^(2m-1): near-orthogonal pairs cancel in the explicit
    sum, so output-relative error would measure conditioning, not
    agreement.
    """
    worst = 0.0
    worst_at = None
    pairs = 20
    for m in (2, 3):
        for d in (2, 3, 4):
            for k in range(1, 9):
                A = sample_components(k, d, m, seed=derive_seed(97, k, d, m))
                T = materialize_tensor(A)
                abs_T = np.abs(T.entries)
                rng = np.random.Generator(
                    np.random.Philox(np.random.SeedSequence(derive_seed(98, k, d, m)))
                )
                for _ in range(pairs):
                    x = rng.standard_normal(d)
                    left = contract_implicit(A, x)
                    right = contract_explicit(T, x)
                    scale = abs_T
                    for _ in range(T.order - 1):
                        scale = scale @ np.abs(x)
                    denom = float(np.linalg.norm(scale))
                    err = float(np.linalg.norm(left - right)) / max(denom, 1e-30)
                    if err > worst:
                        worst, worst_at = err, (d, k, m)
    ok = worst <= 1e-10
    print(
        f"oracle-check: max relative discrepancy {worst:.3e} at "
        f"(d, k, m) = {worst_at} -> {'ok' if ok else 'FAILED (tol 1e-10)'}"
    )
    if args.out is not None:
        Path(args.out).write_text(
            json.dumps(
                {"max_rel_err": worst, "worst_at": list(worst_at), "ok": ok}, indent=2
            )
            + "\n"
        )
    return 0 if ok else 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tpi",
        description=(
            "Tensor power iteration on random overcomplete symmetric tensors: "
            "single runs, success-rate sweeps, objective trajectories, and "
            "decomposition diagnostics."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, with_max_steps: bool = True) -> None:
        p.add_argument("--seed", type=int, default=None, help="base seed (overrides config)")
        p.add_argument("--trials", type=int, default=None, help="trials per cell")
        p.add_argument("--tau", type=float, default=None, help="recovery threshold")
        p.add_argument("--order-m", type=int, default=None, help="half tensor order")
        if with_max_steps:
            p.add_argument("--max-steps", type=int, default=None, help="step cap")

    p_run = sub.add_parser("run", help="one trajectory, JSON to --out or stdout")
    p_run.add_argument("--k", type=int, required=True)
    p_run.add_argument("--d", type=int, required=True)
    common(p_run)
    p_run.add_argument("--record-full", action="store_true")
    p_run.add_argument("--out", type=Path, default=None)
    p_run.set_defaults(func=_cmd_run)

    p_phase = sub.add_parser("sweep-phase", help="success rates over a (k, d) grid")
    p_phase.add_argument("--config", type=Path, required=True)
    p_phase.add_argument("--out", type=Path, required=True, help="output directory")
    common(p_phase)
    p_phase.set_defaults(func=_cmd_sweep_phase)

    p_dt = sub.add_parser("sweep-dt", help="success rates along a log-ratio line")
    p_dt.add_argument("--config", type=Path, required=True)
    p_dt.add_argument("--out", type=Path, required=True, help="output directory")
    common(p_dt)
    p_dt.set_defaults(func=_cmd_sweep_dt)

    p_traj = sub.add_parser("trajectory", help="objective path vs 3k + 20td")
    p_traj.add_argument("--config", type=Path, default=None)
    p_traj.add_argument("--k", type=int, default=None)
    p_traj.add_argument("--d", type=int, default=None)
    p_traj.add_argument("--tc", type=int, default=None, help="horizon (default 4)")
    common(p_traj, with_max_steps=False)
    p_traj.add_argument("--out", type=Path, required=True, help="output directory")
    p_traj.set_defaults(func=_cmd_trajectory)

    p_diag = sub.add_parser("diagnose", help="per-step decomposition diagnostics")
    p_diag.add_argument("--config", type=Path, default=None)
    p_diag.add_argument("--k", type=int, default=None)
    p_diag.add_argument("--d", type=int, default=None)
    p_diag.add_argument("--steps", type=int, default=None, help="horizon (default 10)")
    common(p_diag, with_max_steps=False)
    p_diag.add_argument("--out", type=Path, required=True, help="output directory")
    p_diag.set_defaults(func=_cmd_diagnose)

    p_oracle = sub.add_parser(
        "oracle-check", help="implicit vs explicit contraction on small instances"
    )
    p_oracle.add_argument("--out", type=Path, default=None, help="optional JSON report")
    p_oracle.set_defaults(func=_cmd_oracle_check)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"invalid config -- {e}", file=sys.stderr)
        return 2
    except (ValueError, TypeError) as e:
        print(f"invalid config -- {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"i/o failure -- {e}", file=sys.stderr)
        return 3
    except Exception as e:  # a trial blew up; never silently succeed
        print(f"run failed -- {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
