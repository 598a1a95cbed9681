import sys
from typing import List, Optional

from loguru import logger

from protosed.core.config import load_run_config
from protosed.core.errors import ProtoSEDError, UsageError
from protosed.core.logging import setup_logging
from protosed.routes.commands import build_parser, flag_overrides


def cli(argv: Optional[List[str]] = None) -> int:
    """
    Run one subcommand

    Returns:
        0 on success, 1 for input errors, 2 for runtime failures
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"protosed: {e}", file=sys.stderr)
        return e.exit_code
    except SystemExit as e:
        # --help / --version
        return int(e.code or 0)

    setup_logging(level="DEBUG" if args.verbose else None)
    try:
        config = load_run_config(args.config, args.set, flag_overrides(args))
        for key, source in config.provenance.items():
            if source != "default":
                logger.debug(f"config {key} = {config.to_flat()[key]} ({source})")
        return args.handler(args, config)
    except ProtoSEDError as e:
        logger.error(f"✗ {e}")
        return e.exit_code
    except Exception as e:
        logger.exception(f"✗ Unexpected failure: {e}")
        return 2


def run():
    sys.exit(cli())


if __name__ == "__main__":
    run()
