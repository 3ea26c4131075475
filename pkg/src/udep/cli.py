"""Command line entry point ``udep``.

``udep run CONFIG`` runs a ``key = value`` experiment file.  The shortcuts
``udep rate|lil|hl|spectrum|moments|cov|ratio|dyadic`` build the same
configuration from flags.  Exit status: 0 success, 1 configuration error,
2 runtime error.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from typing import Dict, List, Optional, Tuple

from . import __version__
from ._parallel import THREADS_ENV
from .config import KEYS, config_from_entries, parse_config
from .errors import ConfigError, UdepError
from .runner import run_experiment

__all__ = ["EXIT_CONFIG", "EXIT_OK", "EXIT_RUNTIME", "SHORTCUTS", "build_parser", "main"]

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2

SHORTCUTS = {
    "rate": "rate_theorem1",
    "lil": "lil_theorem2",
    "hl": "hl_bahadur",
    "spectrum": "spectrum",
    "moments": "moment_scan",
    "cov": "covariance_decay",
    "ratio": "variance_ratio",
    "dyadic": "dyadic_max",
}

# flag -> config key
FLAGS = {
    "--kernel": "kernel",
    "--model": "model",
    "--n-max": "n_max",
    "--reps": "replicates",
    "--seed": "base_seed",
    "--out": "out",
    "--threads": "threads",
}


def _default_text(key: str) -> str:
    default = KEYS[key][1]
    if default is None:
        return "see description"
    if isinstance(default, tuple):
        return ",".join(str(v) for v in default)
    if key == "n_max":
        return "2^14"
    return str(default)


def _keys_epilog() -> str:
    lines = ["configuration keys (key = value; default in brackets):"]
    for key, (_, _, text) in KEYS.items():
        lines.append(f"  {key:<11} [{_default_text(key)}] {text}")
    lines.append("")
    lines.append(f"environment: {THREADS_ENV} overrides the thread count of any run.")
    lines.append("exit status: 0 success, 1 configuration error, 2 runtime error.")
    return "\n".join(lines)


class _Parser(argparse.ArgumentParser):
    # usage errors are configuration errors, not runtime failures
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="udep",
        description="Reproducible Monte-Carlo experiments for U-statistics of "
                    "dependent sequences.",
        epilog=_keys_epilog(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"udep {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command", required=True,
                                parser_class=_Parser)

    run = sub.add_parser("run", help="run an experiment from a config file",
                         epilog=_keys_epilog(),
                         formatter_class=argparse.RawDescriptionHelpFormatter)
    run.add_argument("config", help="path to a key = value config file")
    run.add_argument("--out", help="override the config's output directory")

    for name, experiment in SHORTCUTS.items():
        p = sub.add_parser(name, help=f"run the {experiment} experiment",
                           epilog=_keys_epilog(),
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        for flag, key in FLAGS.items():
            suffix = "" if KEYS[key][1] is None else f" (default: {_default_text(key)})"
            p.add_argument(flag, dest=key, metavar=key.upper(), help=KEYS[key][2] + suffix)
        p.add_argument("--set", dest="extra", action="append", default=[],
                       metavar="KEY=VALUE", help="any other config key; repeatable")
        p.set_defaults(experiment=experiment)
    return parser


def _entries_from_args(args) -> Dict[str, Tuple[str, Optional[int]]]:
    entries: Dict[str, Tuple[str, Optional[int]]] = {"experiment": (args.experiment, None)}
    for key in FLAGS.values():
        value = getattr(args, key)
        if value is not None:
            entries[key] = (value, None)
    for item in args.extra:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = (part.strip() for part in item.split("=", 1))
        if key in entries and key != "experiment":
            raise ConfigError(f"key {key!r} given twice")
        if key == "experiment":
            raise ConfigError("the experiment is fixed by the subcommand")
        entries[key] = (value, None)
    return entries


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            try:
                with open(args.config, encoding="utf-8") as fh:
                    text = fh.read()
            except OSError as exc:
                raise ConfigError(f"cannot read {args.config!r}: {exc.strerror}") from None
            cfg = parse_config(text)
            if args.out is not None:
                cfg = dataclasses.replace(cfg, out=args.out)
        else:
            cfg = config_from_entries(_entries_from_args(args))
    except ConfigError as exc:
        print(f"udep: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        manifest = run_experiment(cfg)
    except (UdepError, ValueError, OSError) as exc:
        print(f"udep: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"udep: {cfg.experiment} finished; {len(manifest['files']) + 1} files in {cfg.out}")
    for flag in manifest["flags"]:
        print(f"udep: flag: {flag}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
