import argparse

from typing import Optional, Sequence

from .commands import BaseCommand


def build_argparser() -> argparse.ArgumentParser:
    argparser = argparse.ArgumentParser(
        prog="sgdvit", description="Saliency-guided dynamic vision transformer tracker"
    )
    argparser.add_argument(
        "--verbosity",
        "-v",
        choices=["critical", "error", "warning", "info", "debug"],
        default="info",
        help="Verbosity level",
    )
    argparser.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="Override a config value, can be repeated",
    )
    argparser.add_argument(
        "--no-color", action="store_true", help="Disable colored log output"
    )
    argparser.add_argument(
        "--log-file", default=None, help="Also write debug-level logs to this file"
    )

    subparsers = argparser.add_subparsers(dest="command", metavar="COMMAND")
    subparsers.required = True

    for name, command in BaseCommand.registry().items():
        parser = subparsers.add_parser(name, help=command.help, description=command.help)
        parser.add_argument(
            "--config", "-c", default=None, help="Path to the YAML config file"
        )
        command.add_arguments(parser)

    return argparser


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    return build_argparser().parse_args(argv)
