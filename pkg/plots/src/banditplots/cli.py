"""Script entry point: ``banditplot --input RUN [--input RUN2 ...] --kind K --out IMG``."""

from __future__ import annotations

import argparse
import sys

from .io import SchemaError
from .render import FIGURE_KINDS, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="banditplot",
        description="Render figures from gpbandits run outputs "
        "(run directories, summary.json or trace.csv files).",
    )
    parser.add_argument(
        "--input", action="append", required=True,
        help="run directory, summary.json or trace.csv; repeat for the "
        "scaling kind",
    )
    parser.add_argument("--kind", required=True, choices=FIGURE_KINDS)
    parser.add_argument("--out", required=True, help="output image path")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        out = render(args.kind, args.input, args.out)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {out} and {out.name}.series.json")
    return 0


if __name__ == "__main__":
    sys.exit(main())
