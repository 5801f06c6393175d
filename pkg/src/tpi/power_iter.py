"""The normalized power iteration and its trajectory records.

One step from the current iterate x~ (norm sqrt(d)):

    y = A x~,   f = y^(2m-1)  elementwise,   x = A^T f,
    x~_next = sqrt(d) * x / ||x||.

Unnormalized x is the objective gradient at x~ up to the constant 2m, so
the iteration is gradient ascent with the step size sent to infinity.
Recovery is declared when max_i |<a_i, x~>| / sqrt(d) crosses a threshold
tau: the iterate is then aligned with component argmax up to sign.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .model import ComponentMatrix, InitialVector
from .tensor_core import DimensionMismatchError, _even_power, _odd_power

__all__ = [
    "NumericalFailureError",
    "RecoveryMetric",
    "StepRecord",
    "Termination",
    "Trajectory",
    "recovery_metric",
    "run",
    "step",
]

#: Below this norm the normalization is meaningless; the step has failed.
_NORM_FLOOR = 1e-300


class NumericalFailureError(ArithmeticError):
    """The pre-normalization iterate collapsed or left the finite range."""


class Termination(enum.Enum):
    RECOVERED = "recovered"
    MAX_STEPS = "max_steps"
    NUMERICAL_FAILURE = "numerical_failure"


@dataclass(frozen=True)
class RecoveryMetric:
    """max_i |<a_i, x~>| / sqrt(d), with the winning component and sign."""

    value: float
    argmax: int
    sign: int


@dataclass(frozen=True)
class StepRecord:
    """State after one step.  y and f are kept only under record_full."""

    t: int
    x: np.ndarray
    x_tilde: np.ndarray
    objective_value: float
    recovery: float
    y: np.ndarray | None = None
    f: np.ndarray | None = None


@dataclass
class Trajectory:
    """A complete run: start, per-step records, and how it ended."""

    init: InitialVector
    steps: list[StepRecord] = field(default_factory=list)
    termination: Termination = Termination.MAX_STEPS
    recovered_component: tuple[int, int] | None = None
    record_full: bool = False

    @property
    def length(self) -> int:
        return len(self.steps)

    def x_tilde_at(self, t: int) -> np.ndarray:
        """Normalized iterate after t steps (t = 0 is the start)."""
        if t == 0:
            return self.init.values
        return self.steps[t - 1].x_tilde


def recovery_metric(A: ComponentMatrix, x_tilde: np.ndarray) -> RecoveryMetric:
    """Best alignment of x~ with any component, scale-free in d.

    Ties break to the smallest index; sign is the sign of the winning
    inner product (+1 when it is zero).
    """
    z = A.entries @ np.asarray(x_tilde, dtype=float)
    arg = int(np.argmax(np.abs(z)))
    value = float(np.abs(z[arg]) / np.sqrt(A.d))
    sign = -1 if z[arg] < 0 else 1
    return RecoveryMetric(value=value, argmax=arg, sign=sign)


def _step_impl(
    A: ComponentMatrix,
    x_tilde_prev: np.ndarray,
    y: np.ndarray,
    t: int,
    record_full: bool,
) -> tuple[StepRecord, np.ndarray]:
    """One step given y = A x_tilde_prev; returns (record, A x_tilde_next).

    The returned matrix product is the next step's y, so a run does two
    matrix-vector products per step in steady state.
    """
    # Overflow here is legal input to the norm check below, not an anomaly:
    # let inf/nan flow through silently and fail over to the typed error.
    with np.errstate(over="ignore", invalid="ignore"):
        f = _odd_power(y, A.m)
        x = A.entries.T @ f
        nrm = float(np.linalg.norm(x))
    if not np.isfinite(nrm) or nrm < _NORM_FLOOR:
        raise NumericalFailureError(
            f"pre-normalization iterate has norm {nrm!r} at step {t}"
        )
    x_tilde = np.sqrt(A.d) * x / nrm
    z = A.entries @ x_tilde
    record = StepRecord(
        t=t,
        x=x,
        x_tilde=x_tilde,
        objective_value=float(np.sum(_even_power(z, A.m))),
        recovery=float(np.max(np.abs(z)) / np.sqrt(A.d)),
        y=y if record_full else None,
        f=f if record_full else None,
    )
    return record, z


def step(
    A: ComponentMatrix,
    x_tilde_prev: np.ndarray,
    t: int = 1,
    record_full: bool = False,
) -> StepRecord:
    """Single iteration step from a normalized iterate.

    Raises NumericalFailureError when the pre-normalization iterate
    underflows (norm < 1e-300) or stops being finite; run() converts that
    into a terminal status instead of propagating.
    """
    x_tilde_prev = np.asarray(x_tilde_prev, dtype=float)
    if x_tilde_prev.shape != (A.d,):
        raise DimensionMismatchError(
            f"expected iterate of shape ({A.d},), got {x_tilde_prev.shape}"
        )
    y = A.entries @ x_tilde_prev
    record, _ = _step_impl(A, x_tilde_prev, y, t, record_full)
    return record


def run(
    A: ComponentMatrix,
    x0: InitialVector,
    max_steps: int,
    tau: float = 0.95,
    record_full: bool = False,
    stop_at_recovery: bool = True,
) -> Trajectory:
    """Iterate from x0 until recovery, max_steps, or numerical failure.

    Parameters
    ----------
    A : ComponentMatrix
    x0 : InitialVector
        Start iterate; must match A's dimension.
    max_steps : int
        Hard step cap, >= 1.
    tau : float
        Recovery threshold in (0, 1], checked every step.
    record_full : bool
        Keep the k-length y and f vectors on every StepRecord.
    stop_at_recovery : bool
        When False, run all max_steps regardless of the metric (used for
        trajectory statistics); termination still reports recovered if
        the final iterate clears tau.
    """
    if max_steps < 1:
        raise ValueError(f"max_steps must be >= 1, got {max_steps}")
    if not (0.0 < tau <= 1.0):
        raise ValueError(f"tau must be in (0, 1], got {tau}")
    if x0.values.shape != (A.d,):
        raise DimensionMismatchError(
            f"init has dimension {x0.values.shape[0]}, matrix has d = {A.d}"
        )

    traj = Trajectory(init=x0, record_full=record_full)
    x_tilde = x0.values
    y_next = A.entries @ x_tilde
    for t in range(1, max_steps + 1):
        try:
            record, y_next = _step_impl(A, x_tilde, y_next, t, record_full)
        except NumericalFailureError:
            traj.termination = Termination.NUMERICAL_FAILURE
            return traj
        traj.steps.append(record)
        x_tilde = record.x_tilde
        if record.recovery >= tau and (stop_at_recovery or t == max_steps):
            # y_next already equals A x_tilde for the accepted iterate.
            arg = int(np.argmax(np.abs(y_next)))
            traj.termination = Termination.RECOVERED
            traj.recovered_component = (arg, -1 if y_next[arg] < 0 else 1)
            return traj
    traj.termination = Termination.MAX_STEPS
    return traj
