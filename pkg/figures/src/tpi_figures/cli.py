"""Command-line front end: `tpi-figures render --kind ... --in ... --out ...`.

Exit codes mirror the data-producing tool: 0 success, 2 invalid input
(schema mismatch or nothing to plot), 3 I/O failure, 1 anything else.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .render import EmptyInputError, FigureKind, FigureSpec, SchemaMismatchError, render


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tpi-figures",
        description="Render figures from tpi sweep and trajectory CSVs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("render", help="render one figure from one CSV")
    p.add_argument(
        "--kind",
        required=True,
        choices=[k.value for k in FigureKind],
        help="which figure the CSV feeds",
    )
    p.add_argument("--in", dest="input_csv", type=Path, required=True,
                   help="input CSV path")
    p.add_argument("--out", dest="output", type=Path, required=True,
                   help="output image path (format from the extension)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    spec = FigureSpec(
        input_csv=args.input_csv,
        kind=FigureKind(args.kind),
        output=args.output,
    )
    try:
        render(spec)
    except (SchemaMismatchError, EmptyInputError) as e:
        print(f"invalid input -- {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"i/o failure -- {e}", file=sys.stderr)
        return 3
    except Exception as e:
        print(f"render failed -- {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    print(f"wrote {args.output}")
    return 0
