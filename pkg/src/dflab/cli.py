"""Command-line entry point.

    dflab <subcommand> [--config PATH] [--seed N] [--out DIR]
                       [--workers N] [--format {csv,json}]

Subcommands are the verification tasks plus `all`.  Environment variables
with the DFLAB_ prefix override config fields (DFLAB_SEED, DFLAB_OUT,
DFLAB_WORKERS, DFLAB_FORMAT).  Exit code 0 means no check failed
(inconclusive does not fail); 2 signals a configuration error.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

from .harness import SUBCOMMANDS, ConfigError, load_config, run, run_all


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="dflab",
        description="Sampler, diffusion simulator and identity-verification "
                    "harness for random atomic measures on the flat torus")
    p.add_argument("subcommand", choices=SUBCOMMANDS + ["all"])
    p.add_argument("--config", default=os.environ.get("DFLAB_CONFIG"),
                   help="JSON config; packaged defaults when omitted")
    p.add_argument("--seed", type=int, default=None,
                   help="master seed (overrides config and DFLAB_SEED)")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--workers", type=int,
                   default=int(os.environ.get("DFLAB_WORKERS", "1")),
                   help="process count for `all` (results are identical "
                        "for any worker count)")
    p.add_argument("--format", choices=["csv", "json"],
                   default=os.environ.get("DFLAB_FORMAT", "csv"),
                   help="preferred artifact format where both exist")
    return p


def main(argv: list | None = None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out_dir"] = args.out
    try:
        cfg = load_config(args.config, overrides)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    t0 = time.perf_counter()
    try:
        if args.subcommand == "all":
            reports = run_all(cfg, workers=args.workers)
        else:
            reports = [run(args.subcommand, cfg)]
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    failed = 0
    for rep in reports:
        for c in rep.checks:
            marker = {"pass": "PASS", "fail": "FAIL",
                      "inconclusive": "????"}[c.status]
            print(f"[{marker}] {c.name}: {c.estimate:.6g}"
                  + (f" +- {c.stderr:.2g}" if c.stderr else ""))
        failed += rep.n_failed
    elapsed = time.perf_counter() - t0
    print(f"{sum(len(r.checks) for r in reports)} checks, {failed} failed "
          f"({elapsed:.1f}s); reports in {cfg['out_dir']}/")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
