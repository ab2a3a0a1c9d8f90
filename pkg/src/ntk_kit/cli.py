"""``ntk-kit`` command line entry point.

Five subcommands map onto the experiment runners; each takes the same four
options.  Exit codes: 0 success, 2 configuration problem (also argparse's
code for bad flags), 3 numerical failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

from .backend import set_threads
from .config import COMMANDS, default_config, parse_config
from .errors import ConfigError, NumericalFailure
from .experiments import TOOL_VERSION, run

_HELP = {
    "taxonomy": "case/phase/pole table for activation presets",
    "dynamics": "depth traces of the iterate and normalized kernels",
    "polefit": "fit the (1-z) pole order of the depth limit",
    "fig2": "two-slope map: normalized limit vs its power law",
    "compare": "classifier test errors against the exact optimum",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ntk-kit",
        description="Depth-limit taxonomy and classifier experiments for "
        "wide fully-connected network kernels.",
    )
    parser.add_argument(
        "--version", action="version", version=f"ntk-kit {TOOL_VERSION}"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd in COMMANDS:
        sp = sub.add_parser(cmd, help=_HELP[cmd])
        sp.add_argument("--config", metavar="PATH", help="INI or JSON config file")
        sp.add_argument("--out", metavar="DIR", help="output directory (default .)")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument(
            "--threads",
            type=int,
            help="thread cap for the compiled backend "
            "(falls back to NTK_KIT_THREADS)",
        )
    return parser


def _resolve_threads(args_threads, config_threads) -> int | None:
    if args_threads is not None:
        return args_threads
    env = os.environ.get("NTK_KIT_THREADS")
    if env is not None:
        try:
            value = int(env)
        except ValueError:
            raise ConfigError(f"NTK_KIT_THREADS must be an integer, got {env!r}") from None
        if value < 1:
            raise ConfigError("NTK_KIT_THREADS must be >= 1")
        return value
    return config_threads


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.config:
            config = parse_config(args.config, args.command)
        else:
            config = default_config(args.command)
        if args.seed is not None:
            if not (0 <= args.seed < 2**64):
                raise ConfigError("--seed must fit in 64 bits")
            config = replace(config, seed=args.seed)
        if args.out is not None:
            config = replace(config, out_dir=args.out)
        threads = _resolve_threads(args.threads, config.threads)
        if threads is not None and threads < 1:
            raise ConfigError("--threads must be >= 1")
        config = replace(config, threads=threads)
        set_threads(threads)

        report = run(config)
    except ConfigError as exc:
        print(f"ntk-kit: config error: {exc}", file=sys.stderr)
        return 2
    except NumericalFailure as exc:
        print(f"ntk-kit: numerical failure: {exc}", file=sys.stderr)
        return 3

    _print_summary(args.command, report)
    return 0


def _print_summary(command: str, report) -> None:
    m = report.metrics
    if command == "taxonomy":
        print(f"taxonomy: {len(m['table'])} activations classified")
    elif command == "dynamics":
        worst = max(row["cauchy_gap_last_two_depths"] for row in m["per_z"])
        print(
            f"dynamics: {len(m['per_z'])} z values, "
            f"worst tail gap {worst:.3e}"
        )
    elif command == "polefit":
        print(
            f"polefit: fitted order {m['fitted_order']:.6f} "
            f"(predicted {m['predicted_order']:.6f}, "
            f"gap {100 * m['relative_gap']:.2f}%)"
        )
    elif command == "fig2":
        print(
            f"fig2: fitted order {m['fitted_order']:.6f} "
            f"(exact {m['exact_order']:.6f}, "
            f"gap {100 * m['relative_gap']:.3f}%)"
        )
    elif command == "compare":
        for pred, mus in m["mean_error"].items():
            path = ", ".join(f"{mu:.4f}" for mu in mus)
            print(f"compare: {pred:<9} mean error by n: {path}")
        for name, value in m["checks"].items():
            if isinstance(value, bool):
                print(f"compare: {name}: {'yes' if value else 'NO'}")
    for path in report.files:
        print(f"wrote {path}")


if __name__ == "__main__":
    sys.exit(main())
