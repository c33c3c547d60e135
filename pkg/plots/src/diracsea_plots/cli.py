"""Command-line figure rendering: diracsea-plot --kind ... --in ... --out ...

Exit codes: 0 success, 1 input/validation error.
"""

import argparse
import sys

from .errors import PlotError
from .render import KINDS, FigureJob, render


def build_parser():
    p = argparse.ArgumentParser(prog="diracsea-plot", description=__doc__)
    p.add_argument("--kind", required=True, choices=KINDS)
    p.add_argument("--in", dest="inputs", action="append", required=True,
                   help="input CSV (repeat for multi-curve figures)")
    p.add_argument("--out", required=True, help="output image (.png or .svg)")
    p.add_argument("--dpi", type=int, default=150)
    p.add_argument("--max-items", type=int, default=16,
                   help="panel/trajectory cap for gallery and trajectory figures")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        job = FigureJob(kind=args.kind, inputs=tuple(args.inputs), output=args.out,
                        dpi=args.dpi, max_items=args.max_items)
        meta = render(job)
    except (PlotError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    summary = ", ".join(f"{k}={v}" for k, v in sorted(meta.items()))
    print(f"wrote {args.out} ({summary})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
