#!/usr/bin/env python3
"""
AtomicLift command line

Subcommands are the registered experiment agents (synth, run, sweep, noisy,
certify); their flags come from each agent's parameter metadata.

Usage:
    python atomiclift_cli.py run --preset fig1 --seed 7
    python atomiclift_cli.py sweep --config workflows/fig2.json --jobs 8 --out results/fig2

Exit codes: 0 when the experiment completed (recorded per-trial failures
included), 2 for configuration or IO errors.
"""

import argparse
import logging
import sys
from typing import Any, Dict, List, Optional

import colorama
from termcolor import colored

from atomiclift import __version__
from atomiclift.errors import ConfigurationError
from utils.agent_manager import get_manager
from utils.environment import get_default_jobs, get_log_level

EXIT_OK = 0
EXIT_USAGE = 2

_JSON_TYPES = {"string": str, "integer": int, "number": float}


def _add_parameter(parser: argparse.ArgumentParser, name: str, schema: Dict[str, Any]) -> None:
    flag = "--" + name.replace("_", "-")
    help_text = schema.get("description")
    kind = schema.get("type", "string")
    if kind == "boolean":
        parser.add_argument(flag, dest=name, action="store_true", default=None, help=help_text)
    elif kind == "array":
        item_type = _JSON_TYPES.get(schema.get("items", {}).get("type", "string"), str)
        parser.add_argument(flag, dest=name, nargs="+", type=item_type, help=help_text)
    else:
        parser.add_argument(flag, dest=name, type=_JSON_TYPES.get(kind, str),
                            choices=schema.get("enum"), help=help_text)


def build_parser(manager=None) -> argparse.ArgumentParser:
    """Parser with one subcommand per registered agent."""
    manager = manager or get_manager()
    if not manager.list_agents():
        manager.discover_agents()

    parser = argparse.ArgumentParser(prog="atomiclift", description="Blind spikes deconvolution experiments")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default=None, help="Logging level (default: ATOMICLIFT_LOG_LEVEL or INFO)")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name in manager.list_agents():
        agent = manager.get_agent(name)
        metadata = agent.metadata
        sub = subparsers.add_parser(name, help=metadata.get("description"),
                                    description=metadata.get("description"))
        for parameter, schema in metadata["parameters"]["properties"].items():
            _add_parameter(sub, parameter, schema)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    colorama.just_fix_windows_console()
    manager = get_manager()
    parser = build_parser(manager)
    args = parser.parse_args(argv)

    logging.basicConfig(level=(args.log_level or get_log_level()).upper(),
                        format="%(asctime)s %(levelname)s %(message)s")

    kwargs = {k: v for k, v in vars(args).items() if k not in ("command", "log_level") and v is not None}
    if "jobs" not in kwargs and get_default_jobs() is not None:
        kwargs["jobs"] = get_default_jobs()

    agent = manager.get_agent(args.command)
    try:
        summary = agent.perform(**kwargs)
    except ConfigurationError as e:
        print(colored(f"Configuration error: {e}", "red"), file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(colored(f"IO error: {e}", "red"), file=sys.stderr)
        return EXIT_USAGE

    print(summary)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
