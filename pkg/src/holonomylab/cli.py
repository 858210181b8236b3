import argparse
import json
import logging
import os
import sys
from typing import Optional

import yaml
from pydantic import ValidationError

from .errors import ConfigurationError, HolonomyLabError
from .lab import HolonomyLab
from .runs import COMMANDS

logger = logging.getLogger(__name__)

OUTPUT_DIR_ENV = "HOLONOMYLAB_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = "reports"

EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_CONFIG = 2

DESCRIPTIONS = {
    "hannay": "Hannay angle as the holonomy of the averaged connection around a parameter loop",
    "berry": "Discrete Berry phases of Koopman eigenstates transported around a parameter loop",
    "aa-phase": "Aharonov-Anandan phase of a cyclic Koopman evolution",
    "verify-relation": "Compare Berry phases with m . theta and check S(0) = 0",
    "koopman-check": "Group law, unitarity, composition and spectrum of the Koopman propagator",
    "liouville-check": "Monte Carlo invariance of the Liouville measure under the flow",
    "resonance": "Search for integer resonances k . Omega = 0",
}

EPILOG = f"""environment:
  {OUTPUT_DIR_ENV}  directory for reports when neither --out nor the config's output is set
                          (default: ./{DEFAULT_OUTPUT_DIR})

exit status:
  0  success
  1  numerical failure: a tolerance check failed or a computation raised a domain error
  2  configuration error: unreadable or invalid config file
"""


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="Run configuration file (YAML or JSON)")
    common.add_argument("--out", help="Report path (JSON); overrides the config's output")
    common.add_argument("--workers", type=int, help="Worker threads; results do not depend on it")
    common.add_argument("--seed", type=int, help="Seed of all random streams; overrides the config")
    common.add_argument("--tables", action="store_true", default=None, help="Also write CSV tables")
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", action="store_true", help="Log debug detail")
    verbosity.add_argument("--quiet", action="store_true", help="Log warnings only")

    parser = argparse.ArgumentParser(
        prog="holonomylab",
        description="Hannay angles and Koopman geometric phases of integrable Hamiltonian families",
        epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    subparsers = parser.add_subparsers(dest="command", required=True, metavar="command")
    for command in COMMANDS:
        subparsers.add_parser(
            command,
            parents=[common],
            help=DESCRIPTIONS[command],
            description=DESCRIPTIONS[command],
            epilog=EPILOG,
            formatter_class=argparse.RawDescriptionHelpFormatter,
        )
    return parser


def output_path(args: argparse.Namespace, lab: HolonomyLab) -> str:
    if args.out:
        return args.out
    if lab.run_config.output:
        return lab.run_config.output
    directory = os.environ.get(OUTPUT_DIR_ENV, DEFAULT_OUTPUT_DIR)
    return os.path.join(directory, f"{lab.command}.json")


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)

    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s - %(message)s")

    overrides = {"seed": args.seed, "workers": args.workers, "tables": args.tables}
    try:
        lab = HolonomyLab(config_file=args.config, command=args.command, overrides=overrides)
    except ValidationError as e:
        print(f"error: invalid configuration {args.config}\n{e}", file=sys.stderr)
        return EXIT_CONFIG
    except yaml.YAMLError as e:
        print(f"error: cannot parse {args.config}: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except json.JSONDecodeError as e:
        print(f"error: cannot parse {args.config}: line {e.lineno} column {e.colno}: {e.msg}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConfigurationError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        report = lab.run()
    except ValidationError as e:
        print(f"error: configuration rejected during {lab.command}\n{e}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigurationError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except HolonomyLabError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL

    lab.save(report, output_path(args, lab))
    return EXIT_OK if report.status == "ok" else EXIT_NUMERICAL
