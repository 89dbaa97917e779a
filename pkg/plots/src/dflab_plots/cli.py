"""dflab-plot: render dflab harness artifacts into diagnostic figures.

    dflab-plot --kind KIND --in PATH [PATH ...] --out FILE.png

Exits nonzero on missing inputs or schema mismatches, naming the missing
column.
"""

from __future__ import annotations

import argparse
import sys

from .figures import KINDS, FigureSpec, MissingColumnError, render


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dflab-plot",
                                description=__doc__.splitlines()[0])
    p.add_argument("--kind", required=True, choices=KINDS)
    p.add_argument("--in", dest="inputs", nargs="+", required=True,
                   metavar="PATH", help="input artifact(s)")
    p.add_argument("--out", required=True, help="output image path (png)")
    p.add_argument("--path-id", type=int, default=None,
                   help="trajectory to draw for particle-traces")
    return p


def main(argv: list | None = None) -> int:
    args = build_parser().parse_args(argv)
    options = {}
    if args.path_id is not None:
        options["path_id"] = args.path_id
    try:
        out = render(FigureSpec(args.kind, args.inputs, args.out, options))
    except MissingColumnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
