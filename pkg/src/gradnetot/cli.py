"""``gradnetot <subcommand> [--config FILE] [--seed N] [--out-dir DIR] [--iterations N]``.

Prints the run manifest as JSON on success. On failure prints
``{"error": <type>, "message": <text>}`` to stderr and exits nonzero.
"""

import argparse
import json
import sys

from .errors import ConfigError
from .experiments.commands import COMMANDS


def build_parser():
    parser = argparse.ArgumentParser(prog="gradnetot", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file; unknown keys are rejected")
        p.add_argument("--seed", type=int)
        p.add_argument("--out-dir", default=f"runs/{name}")
        p.add_argument("--iterations", type=int)
    return parser


def load_config(command, path=None, seed=None, iterations=None):
    cls, _ = COMMANDS[command]
    raw = {}
    if path:
        with open(path) as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
    if seed is not None:
        raw["seed"] = seed
    if iterations is not None:
        if command == "verify":
            raise ConfigError("--iterations does not apply to verify")
        raw["iterations"] = iterations
    return cls.from_dict(raw)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.command, args.config, args.seed, args.iterations)
        manifest = COMMANDS[args.command][1](cfg, args.out_dir)
    except Exception as exc:
        json.dump({"error": type(exc).__name__, "message": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return 1
    json.dump(manifest, sys.stdout, indent=2)
    sys.stdout.write("\n")
    return 0
