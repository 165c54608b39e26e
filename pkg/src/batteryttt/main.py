"""
BatteryTTT command-line entry point.

    batteryttt simulate  --preset calce --out data/cycles.csv
    batteryttt featurize --in data/cycles.csv --out data/features.csv
    batteryttt pretrain  --in data/features.csv --out output/pretrained.json
    batteryttt probe     --checkpoint output/pretrained.json --in data/features.csv
    batteryttt adapt     --checkpoint output/pretrained.json --in data/target.csv --out output/report.json
    batteryttt ablate    --config data/experiment.json
    batteryttt gradcheck
    batteryttt report    --in output/report.json
"""

import argparse
import json
import logging
import sys
from typing import Optional, Sequence

from .cli import COMMAND_MODULES
from .config import load_app_config
from .exceptions import BatteryTTTError, ConfigError, ParseError
from .schemas.common import ErrorResponse

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INPUT_ERROR = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="batteryttt",
        description="Physics-guided test-time training for battery State-of-Health estimation",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for module in COMMAND_MODULES:
        module.register(subparsers)
    return parser


def _emit_error(
    command: str, error: str, message: str, exit_code: int, detail: Optional[dict]
) -> int:
    payload = ErrorResponse(
        command=command, error=error, message=message, exit_code=exit_code, detail=detail
    ).model_dump()
    print(json.dumps(payload, default=str), file=sys.stderr)
    return exit_code


def main(argv: Optional[Sequence[str]] = None) -> int:
    app = load_app_config()
    logging.basicConfig(
        level=getattr(logging, app.log_level),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        force=True,
    )
    args = build_parser().parse_args(argv)

    try:
        return args.func(args, app)
    except (ConfigError, ParseError) as e:
        logger.error(f"{args.command}: {e}")
        return _emit_error(args.command, type(e).__name__, e.message, EXIT_INPUT_ERROR, e.detail)
    except BatteryTTTError as e:
        logger.error(f"{args.command}: {e}")
        return _emit_error(args.command, type(e).__name__, e.message, EXIT_FAILURE, e.detail)
    except Exception as e:
        logger.error(f"Unhandled exception: {e}", exc_info=True)
        return _emit_error(
            args.command,
            "InternalError",
            "An unexpected error occurred",
            EXIT_FAILURE,
            {"type": type(e).__name__, "message": str(e)},
        )


if __name__ == "__main__":
    sys.exit(main())
