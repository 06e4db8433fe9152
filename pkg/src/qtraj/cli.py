"""Command-line entry: run/validate configs, list presets.

Exit codes: 0 success, 2 config error, 3 numerical guard tripped,
4 validity-condition refusal.  QTRAJ_THREADS overrides the worker count
when --threads is not given.
"""
from __future__ import annotations

import os

# pin BLAS threading before numpy loads so results do not depend on the
# machine's core count
for _var in ("OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "OMP_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import argparse
import sys
from pathlib import Path


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="qtraj", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a scenario config")
    run_p.add_argument("config", type=Path)
    run_p.add_argument("--seed", type=int, default=None, help="override config seed")
    run_p.add_argument("--trajectories", type=int, default=None, help="override trajectory count")
    run_p.add_argument("--out", type=Path, default=Path("."), help="output directory")
    run_p.add_argument("--threads", type=int, default=None, help="worker processes")

    val_p = sub.add_parser("validate", help="validate a config without running")
    val_p.add_argument("config", type=Path)

    sub.add_parser("presets", help="list scenario presets").add_argument(
        "what", choices=["list"], nargs="?", default="list"
    )

    args = parser.parse_args(argv)

    from .config import ConfigError, parse_config, validity_warnings
    from .lindblad import StepSizeError
    from .photon import ValidityError

    if args.command == "presets":
        from .models import PRESETS

        for name in sorted(PRESETS):
            print(name)
        return 0

    try:
        cfg = parse_config(args.config.read_text(encoding="utf-8"))
    except FileNotFoundError:
        print(f"config not found: {args.config}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    if args.command == "validate":
        for warning in validity_warnings(cfg):
            print(f"warning: {warning}", file=sys.stderr)
        print(f"ok: {cfg.name} ({cfg.scenario}, method={cfg.method})")
        return 0

    if args.seed is not None:
        cfg.seed = args.seed
    if args.trajectories is not None:
        cfg.trajectories = args.trajectories

    from .runner import run_scenario

    try:
        summary = run_scenario(cfg, args.out, threads=args.threads)
    except StepSizeError as exc:
        print(f"numerical guard: {exc}", file=sys.stderr)
        return 3
    except ValidityError as exc:
        print(f"validity refusal: {exc}", file=sys.stderr)
        return 4
    for warning in summary.get("warnings", []):
        print(f"warning: {warning}", file=sys.stderr)
    print(f"wrote {args.out / (cfg.name + '.csv')} and summary")
    return 0


if __name__ == "__main__":
    sys.exit(main())
