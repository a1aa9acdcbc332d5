import os
import sys
import logging

from typing import Optional, Sequence

import sentry_sdk

from .cli import parse_args
from .data import DataError
from .config import Config, ConfigError
from .logger import setup as setup_logger
from .commands import BaseCommand
from .tracking import NumericalError
from .autodiff.serialize import SerializationError

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4


def setup_sentry(config: Config) -> None:
    if config["sentry"]["enabled"]:
        log.info("initializing sentry")
        sentry_sdk.init(
            dsn=config["sentry"]["dsn"],
            debug=config["sentry"]["debug"],
            send_default_pii=True,
        )
    else:
        log.debug("skipping sentry initialization")


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = parse_args(argv)

    setup_logger(args.verbosity, color=not args.no_color, log_file=args.log_file)

    log.debug(f"running on version {os.environ.get('GIT_COMMIT', 'UNSET')}")

    try:
        config = Config(path=args.config, overrides=args.set)

        setup_sentry(config)

        BaseCommand.get(args.command)(args, config).run()
    except ConfigError as e:
        log.error(f"config error: {e}")

        return EXIT_CONFIG
    except (DataError, SerializationError) as e:
        log.error(f"data error: {e}")

        return EXIT_DATA
    except NumericalError as e:
        log.error(f"numerical failure: {e}")

        return EXIT_NUMERICAL
    except Exception:
        log.exception(f"{args.command} failed")

        return EXIT_FAILURE

    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
