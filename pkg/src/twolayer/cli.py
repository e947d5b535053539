"""``twolayer <command> --config <path> [--out <dir>] [--seed <u64>] [--threads <n>]``.

Exit codes: 0 success, 1 failed checks, 2 config errors, 3 numerical errors.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .errors import (
    InvalidConfig,
    InvalidPhaseType,
    InvalidProblem,
    NonDistinctRoots,
    SubordinatorPath,
    TwoLayerError,
)
from .experiments import COMMANDS, RUNNERS, load_config

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="twolayer", description="Optimal two-layer dividend strategies.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="TOML experiment config")
    p.add_argument("--out", help="output directory (overrides output.directory)")
    p.add_argument("--seed", type=int, help="Monte Carlo seed (overrides simulate.seed)")
    p.add_argument("--threads", type=int, help="worker processes for sweeps and simulation")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise InvalidConfig("--seed must be an unsigned 64-bit integer")
            cfg = replace(cfg, seed=args.seed)
        if args.threads is not None:
            if args.threads < 1:
                raise InvalidConfig("--threads must be at least 1")
            cfg = replace(cfg, workers=args.threads)
        if args.out is not None:
            cfg = replace(cfg, out_dir=args.out)
        if cfg.command and cfg.command != args.command:
            print(f"note: config names command '{cfg.command}', running '{args.command}'", file=sys.stderr)
        return RUNNERS[args.command](cfg)
    except (InvalidConfig, InvalidProblem, InvalidPhaseType, SubordinatorPath) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonDistinctRoots as exc:
        print(f"numerical error: {exc}\nhint: perturb q slightly (e.g. by 1e-6) to separate the roots",
              file=sys.stderr)
        return EXIT_NUMERIC
    except TwoLayerError as exc:
        print(f"numerical error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
