"""Command line entry point: ``nbmplab <subcommand> [--config FILE] [--set key=value] [--<field> value]``."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields

from .config import KINDS, OUTPUT_ENV, ExperimentConfig, load_config
from .experiments import run_experiment

_ALIASES = {"output_dir": ["--output"], "verify_level": ["--level"]}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nbmplab",
        description="Branching-selection and boundary-killed branching simulations.",
        epilog=f"Outputs go under ${OUTPUT_ENV} (default ./nbmplab-out) unless --output is given.",
    )
    sub = parser.add_subparsers(dest="kind", required=True, metavar="SUBCOMMAND")
    for kind in KINDS:
        p = sub.add_parser(kind, help=f"run the {kind} experiment", allow_abbrev=False)
        p.add_argument("--config", help="JSON file with config fields")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one config field (repeatable); lists and dicts as JSON")
        for f in fields(ExperimentConfig):
            if f.name == "kind":
                continue
            flags = [f"--{f.name.replace('_', '-')}"]
            if "_" in f.name:
                flags.append(f"--{f.name}")
            p.add_argument(*flags, *_ALIASES.get(f.name, []), dest=f.name, default=None, metavar="VALUE",
                           help=argparse.SUPPRESS if f.name not in ("workers", "output_dir", "seed", "verify_level")
                           else f"config field {f.name}")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = list(args.set)
    for f in fields(ExperimentConfig):
        raw = getattr(args, f.name, None) if f.name != "kind" else None
        if raw is not None:
            overrides.append(f"{f.name}={raw}")
    overrides.append(f"kind={args.kind}")
    try:
        cfg = load_config(args.config, overrides)
    except (KeyError, ValueError, OSError) as exc:
        print(f"nbmplab: invalid configuration: {exc}", file=sys.stderr)
        return 2
    result = run_experiment(cfg)
    print(json.dumps({"output": str(result.path), "ok": result.ok, "summary": result.summary}, default=str, indent=2))
    return 0 if result.ok else 1


if __name__ == "__main__":
    sys.exit(main())
