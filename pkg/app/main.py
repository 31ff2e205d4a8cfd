import argparse
import logging
import sys
from typing import List, Optional

from app.api import commands
from app.core.config import settings

# Configure logging
logging.basicConfig(
    level=getattr(logging, settings.log_level.upper(), logging.INFO),
    format=settings.log_format
)
logger = logging.getLogger(__name__)


class CliParser(argparse.ArgumentParser):
    """Argument parser whose usage errors exit with code 1."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(commands.EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _non_negative(value: str) -> int:
    number = int(value)
    if number < 0:
        raise argparse.ArgumentTypeError(f"{value} is negative")
    return number


def build_parser() -> CliParser:
    parser = CliParser(
        prog="dynmis",
        description="Deterministic fully dynamic maximal independent set engine",
    )
    subparsers = parser.add_subparsers(dest="command", required=True, parser_class=CliParser)

    gen = subparsers.add_parser("gen", help="Generate an update stream")
    gen.add_argument("kind", choices=["random", "window", "vertex-mix", "adversary"])
    gen.add_argument("--n", type=_non_negative, required=True, help="Vertex count")
    gen.add_argument("--steps", type=_non_negative, default=1000, help="Number of updates")
    gen.add_argument("--seed", type=int, default=None, help="PRNG seed")
    gen.add_argument("--insert-bias", type=float, default=None, help="Insertion probability")
    gen.add_argument("--window", type=int, default=None, help="Live-edge window (window streams)")
    gen.add_argument("--vertex-rate", type=float, default=None, help="Share of vertex operations")
    gen.add_argument("--out", default="-", help="Output path, '-' for stdout")
    gen.set_defaults(handler=commands.cmd_gen)

    run = subparsers.add_parser("run", help="Replay a stream through a sequential engine")
    run.add_argument("--algo", choices=["delta", "sublinear", "auto"], default="auto")
    run.add_argument("--delta-bound", type=_non_negative, default=None, help="Declared maximum degree")
    run.add_argument("--stream", required=True, help="Stream path, '-' for stdin")
    run.add_argument("--verify", action="store_true", help="Audit the MIS and invariants after every update")
    run.add_argument("--per-update", action="store_true", help="Print one JSON line per update")
    run.add_argument("--report", default=None, help="Also write the summary JSON to this path")
    run.set_defaults(handler=commands.cmd_run)

    simulate = subparsers.add_parser("simulate", help="Replay a stream through the message-passing simulator")
    simulate.add_argument("--stream", required=True, help="Stream path, '-' for stdin")
    simulate.add_argument("--verify", action="store_true", help="Audit every node after every update")
    simulate.add_argument("--per-update", action="store_true", help="Print one JSON line per update")
    simulate.add_argument("--report", default=None, help="Also write the summary JSON to this path")
    simulate.add_argument("--parallel", action="store_true", help="Step nodes on a thread pool")
    simulate.set_defaults(handler=commands.cmd_simulate)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else commands.EXIT_USAGE
    logger.debug(f"Running {args.command}")
    return args.handler(args)


if __name__ == "__main__":
    sys.exit(main())
