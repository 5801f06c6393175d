"""Render sweep heatmaps and objective-trajectory plots from CSV files.

Three figure kinds:

- heatmap_kd: success_rate over a (k, d) grid, log-log axes, with the
  k = d^2 reference boundary drawn on top.
- heatmap_dT: success_rate over a (d, T) grid, log-log axes.
- trajectory: mean objective with +/- 2 std error bars per step, and the
  predicted_S column overlaid as a line.

Every plotted number is read from a CSV column; this module never
recomputes statistics.  Rendering is a pure function of the file:
fixed style, fixed layout, no timestamps on the canvas.  Heatmap cells
sit exactly on the grid values (edges at geometric midpoints); absent
cells stay blank rather than being interpolated.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from matplotlib.figure import Figure

__all__ = [
    "EmptyInputError",
    "FigureKind",
    "FigureSpec",
    "SchemaMismatchError",
    "SWEEP_COLUMNS",
    "TRAJECTORY_COLUMNS",
    "render",
]

#: Column contract of the sweep CSVs the `tpi` command writes.
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

#: Column contract of the objective-trajectory CSV.
TRAJECTORY_COLUMNS = ("t", "mean_S", "std_S", "predicted_S", "monotone_fraction")

#: Label attached to the k = d^2 boundary line, also used by tests to
#: find the artist.
BOUNDARY_LABEL = "k = d^2"


class SchemaMismatchError(ValueError):
    """The CSV header does not match the figure kind's column contract."""


class EmptyInputError(ValueError):
    """The CSV has no data rows to plot."""


class FigureKind(enum.Enum):
    HEATMAP_KD = "heatmap_kd"
    HEATMAP_DT = "heatmap_dT"
    TRAJECTORY = "trajectory"


@dataclass(frozen=True)
class FigureSpec:
    """What to render: source CSV, figure kind, output image path."""

    input_csv: Path
    kind: FigureKind
    output: Path


_EXPECTED = {
    FigureKind.HEATMAP_KD: SWEEP_COLUMNS,
    FigureKind.HEATMAP_DT: SWEEP_COLUMNS,
    FigureKind.TRAJECTORY: TRAJECTORY_COLUMNS,
}


def _read_table(path: Path, expected: tuple[str, ...]) -> list[list[str]]:
    """Rows of the CSV after checking the header against the contract."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise EmptyInputError(f"{path}: file is empty (no header row)")
    header = tuple(rows[0])
    if header != expected:
        missing = [c for c in expected if c not in header]
        unexpected = [c for c in header if c not in expected]
        parts = [f"{path}: columns do not match the expected schema"]
        if missing:
            parts.append(f"missing {missing}")
        if unexpected:
            parts.append(f"unexpected {unexpected}")
        if not missing and not unexpected:
            parts.append(f"order differs: expected {list(expected)}, got {list(header)}")
        raise SchemaMismatchError("; ".join(parts))
    data = rows[1:]
    if not data:
        raise EmptyInputError(f"{path}: header only, nothing to plot")
    return data


def _log_edges(values: np.ndarray) -> np.ndarray:
    """Cell edges at geometric midpoints of sorted unique grid values."""
    if values.size == 1:
        return np.array([values[0] / np.sqrt(2.0), values[0] * np.sqrt(2.0)])
    logs = np.log(values)
    mids = 0.5 * (logs[:-1] + logs[1:])
    first = logs[0] - (mids[0] - logs[0])
    last = logs[-1] + (logs[-1] - mids[-1])
    return np.exp(np.concatenate(([first], mids, [last])))


def _draw_heatmap(ax, xs, ys, rates, xlabel: str, ylabel: str):
    """Masked success-rate mesh on log-log axes; returns the mesh."""
    xu = np.array(sorted(set(xs)), dtype=float)
    yu = np.array(sorted(set(ys)), dtype=float)
    grid = np.full((yu.size, xu.size), np.nan)
    for x, y, r in zip(xs, ys, rates):
        grid[np.searchsorted(yu, y), np.searchsorted(xu, x)] = r
    mesh = ax.pcolormesh(
        _log_edges(xu),
        _log_edges(yu),
        np.ma.masked_invalid(grid),
        cmap="viridis",
        vmin=0.0,
        vmax=1.0,
        shading="flat",
    )
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    return mesh


def _parse_sweep(data: list[list[str]]):
    ks = [int(row[0]) for row in data]
    ds = [int(row[1]) for row in data]
    Ts = [int(row[2]) for row in data]
    rates = [float(row[5]) for row in data]
    return ks, ds, Ts, rates


def _render_heatmap_kd(ax, data: list[list[str]]) -> None:
    ks, ds, _, rates = _parse_sweep(data)
    mesh = _draw_heatmap(ax, ds, ks, rates, xlabel="dimension d", ylabel="components k")
    d_line = np.geomspace(min(ds) / np.sqrt(2.0), max(ds) * np.sqrt(2.0), 64)
    ax.plot(d_line, d_line**2, color="red", linestyle="--", linewidth=1.5,
            label=BOUNDARY_LABEL)
    ax.legend(loc="upper left", framealpha=0.9)
    ax.set_title("recovery success rate")
    ax.figure.colorbar(mesh, ax=ax, label="success rate")


def _render_heatmap_dT(ax, data: list[list[str]]) -> None:
    _, ds, Ts, rates = _parse_sweep(data)
    mesh = _draw_heatmap(ax, ds, Ts, rates, xlabel="dimension d", ylabel="step horizon T")
    ax.set_title("recovery success rate")
    ax.figure.colorbar(mesh, ax=ax, label="success rate")


def _render_trajectory(ax, data: list[list[str]]) -> None:
    ts = np.array([int(row[0]) for row in data])
    means = np.array([float(row[1]) for row in data])
    stds = np.array([float(row[2]) for row in data])
    preds = np.array([float(row[3]) for row in data])
    ax.errorbar(ts, means, yerr=2.0 * stds, fmt="o", color="C0", capsize=3.0,
                markersize=5.0, label="mean S (bars: 2 std)")
    ax.plot(ts, preds, color="C1", linestyle="-", linewidth=1.5,
            label="predicted S")
    ax.set_xlabel("step t")
    ax.set_ylabel("objective S")
    ax.set_xticks(ts)
    ax.legend(loc="upper left", framealpha=0.9)
    ax.set_title("objective along the iteration")


_DRAWERS = {
    FigureKind.HEATMAP_KD: _render_heatmap_kd,
    FigureKind.HEATMAP_DT: _render_heatmap_dT,
    FigureKind.TRAJECTORY: _render_trajectory,
}


def render(spec: FigureSpec) -> Figure:
    """Render one figure from a CSV and write it to spec.output.

    Returns the Figure object so callers can inspect the drawn artists.
    Raises SchemaMismatchError / EmptyInputError for bad inputs and
    OSError for unreadable or unwritable paths.
    """
    if not isinstance(spec.kind, FigureKind):
        raise ValueError(f"kind: expected a FigureKind, got {spec.kind!r}")
    data = _read_table(Path(spec.input_csv), _EXPECTED[spec.kind])
    fig = Figure(figsize=(6.4, 4.8), dpi=120)
    ax = fig.add_subplot()
    _DRAWERS[spec.kind](ax, data)
    fig.savefig(spec.output)
    return fig
