"""Command line front end: ``plot <kind> --trace ... --out image``.

Exit code 0 on success; 1 when inputs are missing or do not match the
documented CSV schemas (the message names the offending columns).
"""

from __future__ import annotations

import argparse
import sys

from .figures import KINDS, FigureSpec, render
from .tables import SchemaError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plot",
        description="Render benchmark figures from trace/metrics CSV files.",
    )
    parser.add_argument("kind", choices=KINDS, help="figure kind")
    parser.add_argument("--trace", help="trace CSV (per-tick simulation log)")
    parser.add_argument("--metrics", help="metrics CSV (long-format summary)")
    parser.add_argument("--out", required=True, help="output image path")
    parser.add_argument("--title", help="override the figure heading")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = FigureSpec(
            kind=args.kind,
            out=args.out,
            trace=args.trace,
            metrics=args.metrics,
            title=args.title,
        )
        result = render(spec)
    except (SchemaError, ValueError, OSError) as error:
        print(str(error), file=sys.stderr)
        return 1
    print(f"wrote {result.path} ({result.n_series} series)")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
