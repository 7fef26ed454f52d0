"""CLI: plot --runs a.csv b.csv --labels A B --x time|steps --out fig.png"""

from __future__ import annotations

import argparse
import sys

from .plotting import plot_convergence


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="plot", description="Convergence figures from metrics.csv run logs"
    )
    parser.add_argument("--runs", nargs="+", required=True, help="metrics.csv files")
    parser.add_argument("--labels", nargs="+", default=None,
                        help="one legend label per run (default: file stems)")
    parser.add_argument("--x", choices=("time", "steps"), default="time",
                        dest="axes", help="x-axis quantity")
    parser.add_argument("--out", required=True, help="output figure file")
    parser.add_argument("--force", action="store_true",
                        help="overwrite an existing output file")
    args = parser.parse_args(argv)

    try:
        path = plot_convergence(args.runs, args.out, axes=args.axes,
                                labels=args.labels, overwrite=args.force)
    except (ValueError, FileExistsError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
