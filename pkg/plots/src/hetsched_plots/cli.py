"""Command line front end: ``plot <kind> <csv>... -o <png>``."""

from __future__ import annotations

import argparse
import sys

from hetsched_plots.aggregate import DEFAULT_GROUP_COLS, PlotInputError
from hetsched_plots.figures import KINDS, FigureSpec, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plot",
        description="Render a figure from hetsched sweep CSV output.",
    )
    parser.add_argument("kind", choices=sorted(KINDS), help="figure kind")
    parser.add_argument(
        "csv", nargs="+", help="sweep CSV file(s); multiple files are concatenated"
    )
    parser.add_argument(
        "-o", "--output", required=True, help="output image path (.png)"
    )
    parser.add_argument(
        "--group-by",
        default=",".join(DEFAULT_GROUP_COLS),
        help="comma-separated columns that split the curves "
        f"(default: {','.join(DEFAULT_GROUP_COLS)})",
    )
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    group_cols = [c.strip() for c in args.group_by.split(",") if c.strip()]
    if not group_cols:
        print("plot: --group-by must name at least one column", file=sys.stderr)
        return 2
    spec = FigureSpec(
        inputs=args.csv, kind=args.kind, output=args.output, group_cols=group_cols
    )
    try:
        out_png, out_csv = render(spec)
    except PlotInputError as exc:
        print(f"plot: {exc}", file=sys.stderr)
        return 2
    print(out_png)
    print(out_csv)
    return 0


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
