"""foliate command-line entry point.

    foliate verify|flow|functional --config <path> [--out <dir>] [--seed <n>]

Every run path ends in one of the documented exit codes: 0 success,
2 verification failure or hard error, 3 flow blow-up, 4 non-convergence.
"""

import argparse
import logging
import sys
import time
import traceback
from collections.abc import Sequence

from foliate.commands import COMMANDS
from foliate.config import load_config, load_settings, resolve_output_dir
from foliate.exceptions import FoliateError, configuration_error

logger = logging.getLogger("foliate.main")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="foliate",
        description="Transverse geometry, Ricci flow and soliton checks on foliated scenarios.",
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="TOML run configuration")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    return parser


def _dispatch(args: argparse.Namespace) -> int:
    settings = load_settings()
    config = load_config(args.config)
    if config.command is not None and config.command != args.command:
        raise configuration_error(
            f"{args.config}: config is for `{config.command}`, not `{args.command}`"
        )
    if args.seed is not None:
        if args.seed < 0:
            raise configuration_error(f"--seed must be non-negative, got {args.seed}")
        config = config.model_copy(update={"seed": args.seed})
    out_dir = resolve_output_dir(config, settings, args.out)
    started = time.perf_counter()
    logger.info("%s %s -> %s", args.command, config.scenario, out_dir)
    code = COMMANDS[args.command](config, out_dir)
    logger.info(
        "%s finished with exit %d (%.1f ms)",
        args.command,
        code,
        1000 * (time.perf_counter() - started),
    )
    return code


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    settings = load_settings()
    logging.basicConfig(
        level=settings.log_level.upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return _dispatch(args)
    except FoliateError as exc:
        if settings.debug:
            traceback.print_exc()
        print(f"foliate {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    except Exception as exc:
        logger.exception("%s failed unexpectedly", args.command)
        print(f"foliate {args.command}: internal error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
