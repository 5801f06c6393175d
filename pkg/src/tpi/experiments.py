"""Monte-Carlo sweeps over (k, d, T) grids of power-iteration trials.

Four kinds: success-rate sweeps over a (k, d) grid (phase_kd) or along a
fixed log k / log d ratio with growing horizon (phase_dT), objective
trajectories against the closed-form prediction 3k + 20td
(objective_traj), and per-step decomposition diagnostics (diagnostics).

Trial seeding is content-addressed: trial j of any cell draws its
instance from hash(base_seed, k, d, j), so cells that share (k, d) share
instances regardless of grid order, and success-within-T is exactly
nested in T.  Aggregation is keyed by trial index, never by completion
order, so the TPI_THREADS parallelism knob cannot change results.
"""

from __future__ import annotations

import dataclasses
import enum
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .conditioning import (
    decompose_y,
    f_norm_stat,
    orthogonalize,
    trapped_ratio,
    vt_norm_ratio,
)
from .model import (
    ComponentMatrix,
    InitialVector,
    derive_seed,
    sample_components,
    sample_sphere_init,
)
from .power_iter import Termination, run
from .tensor_core import objective

__all__ = [
    "CellResult",
    "ConfigError",
    "DiagnosticsResult",
    "DiagnosticsRow",
    "ExperimentConfig",
    "ExperimentKind",
    "GridCell",
    "SweepResult",
    "TrajectoryResult",
    "TrajectoryStats",
    "make_trial_instance",
    "predicted_objective",
    "run_dT_sweep",
    "run_diagnostics",
    "run_objective_traj",
    "run_phase_sweep",
]


class ConfigError(ValueError):
    """An experiment configuration field is missing, unknown, or invalid."""


class ExperimentKind(enum.Enum):
    PHASE_KD = "phase_kd"
    PHASE_DT = "phase_dT"
    OBJECTIVE_TRAJ = "objective_traj"
    DIAGNOSTICS = "diagnostics"


@dataclass(frozen=True)
class GridCell:
    """One sweep cell: instance size (k, d) and step horizon T."""

    k: int
    d: int
    T: int


@dataclass(frozen=True)
class ExperimentConfig:
    """Full description of a sweep; results are a pure function of this.

    t_c (objective_traj only) overrides the per-cell horizon; ratio
    (phase_dT only) is the declared log k / log d line the grid must sit
    on; memory_cap_floats bounds k*T for full-record runs.
    """

    kind: ExperimentKind
    grid: tuple[GridCell, ...]
    trials: int
    tau: float = 0.95
    m: int = 2
    base_seed: int = 0
    record_full: bool = False
    ratio: float = 1.8
    t_c: int | None = None
    memory_cap_floats: float = 2e8

    def validate(self) -> None:
        if not isinstance(self.kind, ExperimentKind):
            raise ConfigError(f"kind: expected an ExperimentKind, got {self.kind!r}")
        if len(self.grid) == 0:
            raise ConfigError("grid: must contain at least one cell")
        for cell in self.grid:
            if cell.k < 1 or cell.d < 1:
                raise ConfigError(f"grid: cell {cell} needs k >= 1 and d >= 1")
            if cell.T < 1:
                raise ConfigError(f"grid: cell {cell} needs T >= 1 (max_steps)")
        if self.trials < 1:
            raise ConfigError(f"trials: must be >= 1, got {self.trials}")
        if not (0.0 < self.tau <= 1.0):
            raise ConfigError(f"tau: must be in (0, 1], got {self.tau}")
        if self.m < 2:
            raise ConfigError(f"m: must be >= 2, got {self.m}")
        if self.base_seed < 0:
            raise ConfigError(f"base_seed: must be >= 0, got {self.base_seed}")
        if self.kind is ExperimentKind.PHASE_DT:
            for cell in self.grid:
                if cell.d < 2:
                    raise ConfigError(
                        f"grid: phase_dT needs d >= 2 to place cells on the "
                        f"log-ratio line, got {cell}"
                    )
                actual = math.log(cell.k) / math.log(cell.d)
                if abs(actual - self.ratio) > 1e-9 and cell.k != math.ceil(
                    cell.d**self.ratio
                ):
                    raise ConfigError(
                        f"ratio: cell {cell} has log k / log d = {actual:.6f}, "
                        f"not on the declared ratio {self.ratio} "
                        f"(nearest admissible k = {math.ceil(cell.d**self.ratio)})"
                    )
        if self.kind is ExperimentKind.OBJECTIVE_TRAJ:
            if len(self.grid) != 1:
                raise ConfigError(
                    "grid: objective_traj takes exactly one cell "
                    "(its output rows carry no k, d columns)"
                )
            if self.m != 2:
                raise ConfigError(
                    f"m: objective_traj prediction 3k + 20td is order-4 only "
                    f"(m = 2), got m = {self.m}"
                )
            horizon = self.t_c if self.t_c is not None else self.grid[0].T
            if horizon < 1 or horizon > 10:
                raise ConfigError(
                    f"t_c: trajectory horizon must be in [1, 10], got {horizon}"
                )
        if self.kind is not ExperimentKind.OBJECTIVE_TRAJ and self.t_c is not None:
            raise ConfigError(
                f"t_c: only applies to objective_traj, not {self.kind.value}"
            )
        if self.kind is ExperimentKind.DIAGNOSTICS and len(self.grid) != 1:
            raise ConfigError(
                "grid: diagnostics takes exactly one cell "
                "(its output rows carry no k, d columns)"
            )
        needs_full = self.kind is ExperimentKind.DIAGNOSTICS or self.record_full
        if needs_full:
            for cell in self.grid:
                if cell.k * cell.T > self.memory_cap_floats:
                    raise ConfigError(
                        f"memory_cap_floats: full-record cell {cell} needs "
                        f"k*T = {cell.k * cell.T} floats per sequence, cap is "
                        f"{self.memory_cap_floats:g}"
                    )


@dataclass(frozen=True)
class CellResult:
    """Aggregated outcomes of all trials in one cell."""

    k: int
    d: int
    T: int
    trials: int
    successes: int
    success_rate: float
    mean_steps_to_recovery: float | None
    numerical_failures: int


@dataclass(frozen=True)
class SweepResult:
    kind: ExperimentKind
    cells: tuple[CellResult, ...]


@dataclass(frozen=True)
class TrajectoryStats:
    """Cross-trial objective statistics at one step t.

    monotone_fraction is the fraction of trials with S strictly larger
    at t+1 than at t; None on the final row (no t+1 exists).
    """

    t: int
    mean_S: float
    std_S: float
    predicted_S: float
    monotone_fraction: float | None


@dataclass(frozen=True)
class TrajectoryResult:
    kind: ExperimentKind
    k: int
    d: int
    t_c: int
    trials: int
    stats: tuple[TrajectoryStats, ...]
    strictly_increasing_fraction: float
    numerical_failures: int


@dataclass(frozen=True)
class DiagnosticsRow:
    trial: int
    t: int
    residual: float
    alpha_sq_err: float
    alpha1: float
    P_over_Q: float
    vt_ratio: float
    f_norm_over_k: float


@dataclass(frozen=True)
class DiagnosticsResult:
    kind: ExperimentKind
    k: int
    d: int
    T: int
    trials: int
    rows: tuple[DiagnosticsRow, ...]


def predicted_objective(k: int, d: int, t: int) -> float:
    """Closed-form objective prediction along the path: 3k + 20td."""
    return 3.0 * k + 20.0 * t * d


def make_trial_instance(
    base_seed: int, k: int, d: int, trial: int, m: int = 2
) -> tuple[ComponentMatrix, InitialVector]:
    """Instance for one trial, addressed by content (k, d), not cell order.

    The component matrix and the start vector come from separate derived
    streams, so either can be regenerated alone.
    """
    A = sample_components(k, d, m, seed=derive_seed(base_seed, k, d, trial, 0))
    x0 = sample_sphere_init(d, seed=derive_seed(base_seed, k, d, trial, 1))
    return A, x0


# --- parallel trial mapping -------------------------------------------------


def _thread_cap() -> int:
    raw = os.environ.get("TPI_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        n = 1
    return max(1, n)


def _map_trials(fn, args_list: list[tuple]) -> list:
    """Map a picklable worker over trial argument tuples.

    Results come back indexed like args_list (trial order) whether the
    map runs serially or across TPI_THREADS processes.
    """
    cap = _thread_cap()
    if cap == 1 or len(args_list) <= 1:
        return [fn(a) for a in args_list]
    chunk = max(1, len(args_list) // (4 * cap))
    with ProcessPoolExecutor(max_workers=cap) as ex:
        return list(ex.map(fn, args_list, chunksize=chunk))


def _phase_trial(args: tuple) -> tuple[bool, int, bool]:
    """(recovered, steps_to_recovery, numerical_failure) for one trial."""
    base_seed, k, d, m, T, tau, trial = args
    A, x0 = make_trial_instance(base_seed, k, d, trial, m)
    traj = run(A, x0, max_steps=T, tau=tau)
    recovered = traj.termination is Termination.RECOVERED
    failed = traj.termination is Termination.NUMERICAL_FAILURE
    return recovered, traj.length if recovered else 0, failed


def _objective_trial(args: tuple) -> tuple[list[float], bool]:
    """Objective values S(x~_0..x~_tc) for one trial, plus failure flag."""
    base_seed, k, d, m, t_c, tau, trial = args
    A, x0 = make_trial_instance(base_seed, k, d, trial, m)
    traj = run(A, x0, max_steps=t_c, tau=tau, stop_at_recovery=False)
    values = [objective(A, x0.values)] + [rec.objective_value for rec in traj.steps]
    return values, traj.termination is Termination.NUMERICAL_FAILURE


def _diagnostics_trial(args: tuple) -> list[tuple]:
    """Per-step decomposition diagnostics rows for one trial."""
    base_seed, k, d, m, T, tau, trial = args
    A, x0 = make_trial_instance(base_seed, k, d, trial, m)
    traj = run(A, x0, max_steps=T, tau=tau, record_full=True)
    seqs = orthogonalize(traj, traj.length)
    rows = []
    for t in range(1, traj.length + 1):
        dec = decompose_y(seqs, A, traj, t)
        rows.append(
            (
                trial,
                t,
                dec.residual(),
                abs(float(np.sum(dec.alphas**2)) - 1.0),
                float(dec.alphas[0]),
                trapped_ratio(dec),
                vt_norm_ratio(dec),
                f_norm_stat(traj, t),
            )
        )
    return rows


# --- sweep drivers ----------------------------------------------------------


def _run_cells(config: ExperimentConfig) -> tuple[CellResult, ...]:
    cells = []
    for cell in config.grid:
        args = [
            (config.base_seed, cell.k, cell.d, config.m, cell.T, config.tau, j)
            for j in range(config.trials)
        ]
        outcomes = _map_trials(_phase_trial, args)
        successes = sum(1 for rec, _, _ in outcomes if rec)
        failures = sum(1 for _, _, failed in outcomes if failed)
        steps = [s for rec, s, _ in outcomes if rec]
        cells.append(
            CellResult(
                k=cell.k,
                d=cell.d,
                T=cell.T,
                trials=config.trials,
                successes=successes,
                success_rate=successes / config.trials,
                mean_steps_to_recovery=float(np.mean(steps)) if steps else None,
                numerical_failures=failures,
            )
        )
    return tuple(cells)


def run_phase_sweep(config: ExperimentConfig) -> SweepResult:
    """Success rates over an explicit (k, d, T) grid."""
    config.validate()
    if config.kind is not ExperimentKind.PHASE_KD:
        raise ConfigError(f"kind: run_phase_sweep needs phase_kd, got {config.kind}")
    return SweepResult(kind=config.kind, cells=_run_cells(config))


def run_dT_sweep(config: ExperimentConfig) -> SweepResult:
    """Success rates along the declared log k / log d ratio line."""
    config.validate()
    if config.kind is not ExperimentKind.PHASE_DT:
        raise ConfigError(f"kind: run_dT_sweep needs phase_dT, got {config.kind}")
    return SweepResult(kind=config.kind, cells=_run_cells(config))


def run_objective_traj(
    config: ExperimentConfig, t_c: int | None = None
) -> TrajectoryResult:
    """Objective path statistics against the 3k + 20td prediction.

    t_c overrides the config horizon when given.  Trials that fail
    numerically are dropped from the statistics and counted.
    """
    if t_c is not None:
        config = dataclasses.replace(config, t_c=t_c)
    config.validate()
    if config.kind is not ExperimentKind.OBJECTIVE_TRAJ:
        raise ConfigError(
            f"kind: run_objective_traj needs objective_traj, got {config.kind}"
        )
    cell = config.grid[0]
    horizon = config.t_c if config.t_c is not None else cell.T
    args = [
        (config.base_seed, cell.k, cell.d, config.m, horizon, config.tau, j)
        for j in range(config.trials)
    ]
    outcomes = _map_trials(_objective_trial, args)
    failures = sum(1 for _, failed in outcomes if failed)
    kept = np.array([vals for vals, failed in outcomes if not failed])
    if kept.size == 0:
        kept = np.full((0, horizon + 1), np.nan)

    stats = []
    increasing = np.ones(kept.shape[0], dtype=bool)
    for t in range(horizon + 1):
        col = kept[:, t]
        if t < horizon and kept.shape[0] > 0:
            gains = kept[:, t + 1] > kept[:, t]
            increasing &= gains
            mono = float(np.mean(gains))
        elif t < horizon:
            mono = float("nan")
        else:
            mono = None
        stats.append(
            TrajectoryStats(
                t=t,
                mean_S=float(np.mean(col)) if col.shape[0] else float("nan"),
                std_S=float(np.std(col, ddof=1)) if col.shape[0] > 1 else 0.0,
                predicted_S=predicted_objective(cell.k, cell.d, t),
                monotone_fraction=mono,
            )
        )
    return TrajectoryResult(
        kind=config.kind,
        k=cell.k,
        d=cell.d,
        t_c=horizon,
        trials=config.trials,
        stats=tuple(stats),
        strictly_increasing_fraction=(
            float(np.mean(increasing)) if kept.shape[0] else 0.0
        ),
        numerical_failures=failures,
    )


def run_diagnostics(config: ExperimentConfig) -> DiagnosticsResult:
    """Per-(trial, step) decomposition diagnostics for one cell."""
    config.validate()
    if config.kind is not ExperimentKind.DIAGNOSTICS:
        raise ConfigError(
            f"kind: run_diagnostics needs diagnostics, got {config.kind}"
        )
    cell = config.grid[0]
    args = [
        (config.base_seed, cell.k, cell.d, config.m, cell.T, config.tau, j)
        for j in range(config.trials)
    ]
    per_trial = _map_trials(_diagnostics_trial, args)
    rows = tuple(
        DiagnosticsRow(*row) for trial_rows in per_trial for row in trial_rows
    )
    return DiagnosticsResult(
        kind=config.kind,
        k=cell.k,
        d=cell.d,
        T=cell.T,
        trials=config.trials,
        rows=rows,
    )
