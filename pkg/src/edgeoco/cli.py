"""Command-line front end.

Subcommands:
  run          execute a configured experiment and write its result files
  solve-bench  emit only the offline benchmark solutions for a config
  check-bounds re-assert the guarantee rows of an existing run directory

The EDGEOCO_OUTDIR environment variable overrides the configured output
directory for ``run`` and ``solve-bench``.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

from .runner import (check_bounds_dir, load_config, run_experiment,
                     solve_benchmarks)

OUTDIR_ENV = "EDGEOCO_OUTDIR"


def _load(path: str):
    cfg = load_config(path)
    override = os.environ.get(OUTDIR_ENV)
    if override:
        cfg = dataclasses.replace(cfg, outdir=override)
    return cfg


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="edgeoco",
        description="slotted online resource-allocation experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config", help="path to a config or manifest JSON")

    p_bench = sub.add_parser("solve-bench",
                             help="solve and emit benchmarks only")
    p_bench.add_argument("config", help="path to a config or manifest JSON")

    p_check = sub.add_parser("check-bounds",
                             help="assert guarantee rows of a finished run")
    p_check.add_argument("rundir", help="output directory of a previous run")

    args = parser.parse_args(argv)

    if args.command == "run":
        cfg = _load(args.config)
        manifest = run_experiment(cfg)
        print(f"wrote {len(manifest['files'])} files to {cfg.outdir}")
        for name in manifest["files"]:
            print(f"  {name}")
        return 0

    if args.command == "solve-bench":
        cfg = _load(args.config)
        out = solve_benchmarks(cfg)
        print(f"wrote {out}")
        return 0

    lines, ok = check_bounds_dir(args.rundir)
    for line in lines:
        print(line)
    print("all guarantee rows hold" if ok else "guarantee violation found")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
