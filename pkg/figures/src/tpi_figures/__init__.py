"""Figure rendering for power-iteration sweep and trajectory CSVs.

Consumes the delimited files the `tpi` command emits -- success-rate
sweeps and objective trajectories -- and renders them as image files.
Plotted numbers come straight from CSV columns; nothing is recomputed.
"""

__version__ = "0.1.0"

from .render import (
    EmptyInputError,
    FigureKind,
    FigureSpec,
    SchemaMismatchError,
    SWEEP_COLUMNS,
    TRAJECTORY_COLUMNS,
    render,
)

__all__ = [
    "EmptyInputError",
    "FigureKind",
    "FigureSpec",
    "SchemaMismatchError",
    "SWEEP_COLUMNS",
    "TRAJECTORY_COLUMNS",
    "render",
]
