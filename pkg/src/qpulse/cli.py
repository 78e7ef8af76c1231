"""Command-line entry point: ``qpulse <scenario> --config <file>``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .cascade import InvariantViolation
from .modes import ModeError
from .scenarios import SCENARIOS, ConfigError, ScenarioConfig, run_scenario

EXIT_OK = 0
EXIT_INVARIANT = 1
EXIT_CONFIG = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qpulse",
        description="Two-photon pulse scattering on a chirally coupled two-level system.")
    parser.add_argument("scenario", choices=SCENARIOS)
    parser.add_argument("--config", required=True, type=Path,
                        help="INI file with a [scenario] section")
    parser.add_argument("--out", type=Path, help="output directory (overrides out_dir)")
    parser.add_argument("--jobs", type=int, help="worker processes for sweep points")
    parser.add_argument("--substeps", type=int, help="RK4 steps per grid interval")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = ScenarioConfig.from_file(args.config, args.scenario, out_dir=args.out,
                                          jobs=args.jobs, substeps=args.substeps)
        result = run_scenario(config)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"qpulse: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InvariantViolation, ModeError) as exc:
        print(f"qpulse: invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    for key, val in result.summary.items():
        print(f"{key} = {val}")
    print(f"results written to {config.out_dir}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
