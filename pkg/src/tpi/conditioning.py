"""Observable decomposition of the iterates against their own past.

Writing x~_i^perp for the component of x~_i orthogonal to all earlier
normalized iterates, and f_i^perp likewise within the f sequence, the
pre-activation y_t = A x~_{t-1} splits exactly into

    g_t = sum_{i=1..t} proj_perp(F_{1:i-1})(A x~_{i-1}^perp)
                       * <x~_{i-1}^perp, x~_{t-1}> / ||x~_{i-1}^perp||^2
    v_t = sum_{i=2..t} f_{i-1}^perp
                       * <x_{i-1}, x~_{i-1}^perp> / ||f_{i-1}^perp||^2
                       * <x~_{i-1}^perp, x~_{t-1}> / ||x~_{i-1}^perp||^2

with y_t = g_t + v_t: g_t collects the fresh-randomness directions while
v_t is the feedback of past nonlinearities.  The alignment profile
alpha_{i,t} = <x~_{i-1}^perp, x~_{t-1}> / (sqrt(d) ||x~_{i-1}^perp||)
satisfies sum_i alpha_{i,t}^2 = 1, and the start-direction mass split
P + Q = d tracks how much of the iterate has escaped the initialization.

Everything here needs the full per-step record (y and f vectors), so the
trajectory must have been run with record_full.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import ComponentMatrix
from .power_iter import Trajectory

__all__ = [
    "ConditioningDecomposition",
    "MissingFullRecordError",
    "OrthogonalSequences",
    "decompose_y",
    "f_norm_stat",
    "init_mass_split",
    "orthogonalize",
    "trapped_ratio",
    "vt_norm_ratio",
]

#: Residuals below this relative size are degenerate (direction already spanned).
_DEGENERACY_RTOL = 1e-10

#: Below this, a ratio denominator is treated as exactly collapsed.
_RATIO_FLOOR = 1e-12


class MissingFullRecordError(RuntimeError):
    """The trajectory was run without record_full; y/f vectors are gone."""


def _mgs(vectors: list[np.ndarray]) -> tuple[list[np.ndarray], list[bool]]:
    """Sequential residuals by modified Gram-Schmidt.

    Each vector is orthogonalized against all earlier non-degenerate
    residuals; a second pass re-orthogonalizes to push cancellation error
    down to roundoff (classic twice-is-enough).  Residuals with norm
    below 1e-10 of the input norm are flagged degenerate and excluded
    from later projections.
    """
    residuals: list[np.ndarray] = []
    degenerate: list[bool] = []
    for v in vectors:
        r = np.array(v, dtype=float, copy=True)
        for _ in range(2):
            for b, dead in zip(residuals, degenerate):
                if dead:
                    continue
                r -= (np.dot(b, r) / np.dot(b, b)) * b
        dead = bool(np.linalg.norm(r) < _DEGENERACY_RTOL * np.linalg.norm(v))
        residuals.append(r)
        degenerate.append(dead)
    return residuals, degenerate


@dataclass
class OrthogonalSequences:
    """Gram-Schmidt residuals of the x~ and f sequences up to step t.

    x_perp[i] is the residual of x~_i (i = 0..t, so x_perp[0] = x~_0);
    f_perp[i-1] is the residual of f_i (i = 1..t) -- use fp(i) to avoid
    the off-by-one.  Degeneracy flags run parallel to each list.
    """

    x_perp: list[np.ndarray]
    f_perp: list[np.ndarray]
    x_degenerate: list[bool]
    f_degenerate: list[bool]
    # A x_perp[i] images with earlier-f directions projected out, filled
    # lazily by decompose_y (they depend on A, not on the target step).
    _g_terms: list[np.ndarray] | None = field(default=None, repr=False)

    def xp(self, i: int) -> np.ndarray:
        """x~_i^perp for i >= 0."""
        return self.x_perp[i]

    def fp(self, i: int) -> np.ndarray:
        """f_i^perp for i >= 1."""
        return self.f_perp[i - 1]

    def x_dead(self, i: int) -> bool:
        return self.x_degenerate[i]

    def f_dead(self, i: int) -> bool:
        return self.f_degenerate[i - 1]

    @property
    def upto_t(self) -> int:
        return len(self.x_perp) - 1


def orthogonalize(trajectory: Trajectory, upto_t: int) -> OrthogonalSequences:
    """Residualize x~_0..x~_t and f_1..f_t against their own prefixes."""
    if upto_t < 0:
        raise ValueError(f"upto_t must be >= 0, got {upto_t}")
    if upto_t > trajectory.length:
        raise ValueError(
            f"upto_t = {upto_t} exceeds trajectory length {trajectory.length}"
        )
    if upto_t > 0 and not trajectory.record_full:
        raise MissingFullRecordError(
            "orthogonalize needs the f vectors; rerun with record_full=True"
        )
    xs = [trajectory.x_tilde_at(i) for i in range(upto_t + 1)]
    fs = [trajectory.steps[i - 1].f for i in range(1, upto_t + 1)]
    x_perp, x_deg = _mgs(xs)
    f_perp, f_deg = _mgs(fs)
    return OrthogonalSequences(
        x_perp=x_perp, f_perp=f_perp, x_degenerate=x_deg, f_degenerate=f_deg
    )


@dataclass(frozen=True)
class ConditioningDecomposition:
    """Split of y_t into fresh (g) and feedback (v) parts, plus profiles.

    alphas[i-1] holds alpha_{i,t} for i = 1..t.  P and Q are the squared
    masses of x~_{t-1} off and along the start direction (P + Q = d).
    degenerate_terms flags that at least one index was skipped for
    degeneracy, in which case the profile identities may not close.
    """

    t: int
    y: np.ndarray
    g: np.ndarray
    v: np.ndarray
    alphas: np.ndarray
    P: float
    Q: float
    degenerate_terms: bool

    def residual(self) -> float:
        """||y - g - v|| / ||y||: distance from the exact split."""
        nrm = float(np.linalg.norm(self.y))
        if nrm == 0.0:
            return float(np.linalg.norm(self.g + self.v))
        return float(np.linalg.norm(self.y - self.g - self.v) / nrm)


def _ensure_g_terms(
    seqs: OrthogonalSequences, A: ComponentMatrix
) -> list[np.ndarray]:
    """Cache proj_perp(F_{1:i-1})(A x~_{i-1}^perp) for i = 1..upto_t."""
    if seqs._g_terms is not None:
        return seqs._g_terms
    terms: list[np.ndarray] = []
    for i in range(1, seqs.upto_t + 1):
        h = A.entries @ seqs.xp(i - 1)
        for j in range(1, i):
            if seqs.f_dead(j):
                continue
            fj = seqs.fp(j)
            h = h - (np.dot(fj, h) / np.dot(fj, fj)) * fj
        terms.append(h)
    seqs._g_terms = terms
    return terms


def init_mass_split(x0: np.ndarray, x_cur: np.ndarray) -> tuple[float, float]:
    """(P, Q): squared mass of x_cur off / along the x0 direction."""
    d = x0.shape[0]
    coeff = float(np.dot(x0, x_cur) / np.dot(x0, x0))
    q_vec = coeff * x0
    P = float(np.dot(x_cur - q_vec, x_cur - q_vec))
    Q = float(np.dot(q_vec, q_vec))
    return P, Q


def decompose_y(
    seqs: OrthogonalSequences,
    A: ComponentMatrix,
    trajectory: Trajectory,
    t: int,
) -> ConditioningDecomposition:
    """Decompose y_t = g_t + v_t at step t >= 1.

    Needs residual sequences through index t-1; degenerate indices
    contribute zero terms and set the degenerate_terms flag.
    """
    if t < 1:
        raise ValueError(f"t must be >= 1, got {t}")
    if t > trajectory.length:
        raise ValueError(f"t = {t} exceeds trajectory length {trajectory.length}")
    if seqs.upto_t < t - 1:
        raise ValueError(
            f"sequences only reach index {seqs.upto_t}, need {t - 1} for step {t}"
        )
    if not trajectory.record_full:
        raise MissingFullRecordError(
            "decompose_y needs the recorded y/f vectors; rerun with record_full=True"
        )

    d = A.d
    x_target = trajectory.x_tilde_at(t - 1)
    y_t = trajectory.steps[t - 1].y
    g_terms = _ensure_g_terms(seqs, A)

    g = np.zeros(A.k)
    v = np.zeros(A.k)
    alphas = np.zeros(t)
    any_dead = False
    for i in range(1, t + 1):
        if seqs.x_dead(i - 1):
            any_dead = True
            continue
        xp = seqs.xp(i - 1)
        xp_sq = float(np.dot(xp, xp))
        coeff = float(np.dot(xp, x_target)) / xp_sq
        alphas[i - 1] = float(np.dot(xp, x_target)) / (np.sqrt(d) * np.sqrt(xp_sq))
        g += g_terms[i - 1] * coeff
        if i >= 2:
            if seqs.f_dead(i - 1):
                any_dead = True
                continue
            fp = seqs.fp(i - 1)
            x_prev = trajectory.steps[i - 2].x
            v += fp * (float(np.dot(x_prev, xp)) / float(np.dot(fp, fp))) * coeff

    P, Q = init_mass_split(trajectory.init.values, x_target)
    return ConditioningDecomposition(
        t=t, y=y_t, g=g, v=v, alphas=alphas, P=P, Q=Q, degenerate_terms=any_dead
    )


def trapped_ratio(decomp: ConditioningDecomposition) -> float:
    """P/Q: how much iterate mass sits outside the start direction.

    Small means trapped near the initialization.  Q below 1e-12 means
    the iterate has fully escaped; that is signalled with inf rather
    than an exception.
    """
    if decomp.Q < _RATIO_FLOOR:
        return float("inf")
    return decomp.P / decomp.Q


def vt_norm_ratio(decomp: ConditioningDecomposition) -> float:
    """||v||^2 over the off-start mass P of the same decomposition.

    Near 1 in the trapped regime.  P below 1e-12 (iterate still equal to
    the start direction, e.g. t = 1) makes the ratio undefined: nan.
    """
    if decomp.P < _RATIO_FLOOR:
        return float("nan")
    return float(np.dot(decomp.v, decomp.v)) / decomp.P


def f_norm_stat(trajectory: Trajectory, t: int) -> float:
    """||f_t||^2 / k for a full-record trajectory."""
    if t < 1 or t > trajectory.length:
        raise ValueError(f"t must be in [1, {trajectory.length}], got {t}")
    f = trajectory.steps[t - 1].f
    if f is None:
        raise MissingFullRecordError(
            "f_norm_stat needs the recorded f vectors; rerun with record_full=True"
        )
    return float(np.dot(f, f)) / f.shape[0]
