"""Command-line entry point (`aw`)."""

import argparse
import sys
from pathlib import Path
from typing import Any, Optional, Sequence

import yaml
from loguru import logger
from pydantic import ValidationError

from adapted_wasserstein.cli.configuration import ACTIONS, RunConfig
from adapted_wasserstein.cli.runner import EXIT_INPUT, run
from adapted_wasserstein.core.errors import InvalidInputError
from adapted_wasserstein.helpers.logging_helpers import add_console_sink, configure_logger


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got '{text}'") from e


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got '{text}'") from e


def _common(parser: argparse.ArgumentParser) -> None:
    """Flags every subcommand accepts; defaults are None so config files are not overridden."""
    parser.add_argument("--config", type=str, default=None, help="YAML run config")
    parser.add_argument("-o", "--output", type=str, default=None, help="report path")
    parser.add_argument("--format", choices=["json", "csv"], default=None)
    parser.add_argument("--plot", type=str, default=None, help="SVG plot path")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--workers", type=int, default=None)
    parser.add_argument("--theme", type=str, default=None, help="YAML console theme")
    parser.add_argument("--tolerance", type=float, default=None)
    parser.add_argument(
        "-v",
        "--verbose",
        action="count",
        default=0,
        help="Show info logs (-v) or debug (-vv) to console",
    )


def _distance_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--p", type=float, default=None)
    parser.add_argument("--method", choices=["lp", "dp", "sync"], default=None)
    parser.add_argument(
        "--stage-cost", dest="stage_cost", choices=["martingale_quadratic", "nested_power"], default=None
    )


def _hedge_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--k", type=float, default=None, help="strategy bound")
    parser.add_argument("--alpha", type=float, default=None)
    parser.add_argument("--m", type=float, default=None, help="initial capital")
    parser.add_argument("--claim", choices=["call", "tent", "zero"], default=None)
    parser.add_argument("--K", "--strike", dest="strike", type=float, default=None)
    parser.add_argument("--loss", choices=["positive_part", "exponential", "avar"], default=None)
    parser.add_argument(
        "--utility", choices=["linear_capped", "capped_exponential", "linear"], default=None
    )
    parser.add_argument("--cap", type=float, default=None)
    parser.add_argument("--risk-aversion", dest="risk_aversion", type=float, default=None)
    parser.add_argument("--strategy", type=str, default=None, help="strategy JSON file")
    parser.add_argument("--slope", type=float, default=None, help="slope of the prefix strategy")


def _model_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--N", "--steps", dest="steps", type=_ints, default=None)
    parser.add_argument("--sigma", "--sigma1", dest="sigma", type=_floats, default=None)
    parser.add_argument("--sigma-hat", "--sigma2", dest="sigma_hat", type=_floats, default=None)
    parser.add_argument("--mu", type=_floats, default=None)
    parser.add_argument("--horizon", type=float, default=None)
    parser.add_argument("--root", type=float, default=None)
    parser.add_argument("--quantization", choices=["binomial", "gauss-hermite"], default=None)
    parser.add_argument("--points", type=int, default=None)
    parser.add_argument("--n", type=int, default=None, help="counterexample size")
    parser.add_argument("--eps", type=float, default=None)
    parser.add_argument("--delta", type=float, default=None)


def _suite_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--instances", type=int, default=None)
    parser.add_argument("--pairs", type=int, default=None)
    parser.add_argument("--depth", type=int, default=None, help="horizon of random trees")
    parser.add_argument("--max-children", dest="max_children", type=int, default=None)
    parser.add_argument("--rel-tol", dest="rel_tol", type=float, default=None)
    parser.add_argument("--model", choices=["call"], default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aw", description="Adapted Wasserstein distances and hedging stability checks"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (
        ("dist", "AW_p between two tree files"),
        ("wass", "classical W_p between two tree or law files"),
        ("weak", "weak transport d_p^w between two law files"),
        ("seminorm", "AW_p to the constant path"),
        ("project", "project a strategy through an optimal coupling"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("inputs", nargs="*")
        _common(p)
        _distance_flags(p)
        if name == "project":
            _hedge_flags(p)

    for name, help_text in (
        ("hedge", "hedging solvers on one tree"),
        ("verify", "stability checks, sweeps and counterexamples"),
        ("gen", "write model trees"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("action", choices=ACTIONS[name])
        p.add_argument("inputs", nargs="*")
        _common(p)
        _distance_flags(p)
        _hedge_flags(p)
        _model_flags(p)
        if name == "verify":
            _suite_flags(p)
    return parser


CLI_ONLY = {"config", "verbose"}


def config_from_args(args: argparse.Namespace) -> RunConfig:
    """Merge a YAML config (if any) with explicit flags; flags win."""
    base: dict[str, Any] = {}
    if args.config is not None:
        path = Path(args.config)
        if not path.is_file():
            raise InvalidInputError(f"config file not found: {path}")
        try:
            base = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
        except yaml.YAMLError as e:
            raise InvalidInputError(f"{path}: not valid YAML: {e}") from e
        if not isinstance(base, dict):
            raise InvalidInputError(f"{path}: expected a mapping of RunConfig fields")
    flags = {
        key: value
        for key, value in vars(args).items()
        if key not in CLI_ONLY and value is not None and not (key == "inputs" and not value)
    }
    return RunConfig.from_json({**base, **flags})


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Parse arguments, configure logging and run one subcommand."""
    args = build_parser().parse_args(argv)

    try:
        configure_logger(source=f"aw-{args.command}")
    except Exception as e:
        logger.warning(f"Failed to configure logger: {e}")
    add_console_sink(args.verbose)

    try:
        config = config_from_args(args)
    except (InvalidInputError, ValidationError) as e:
        logger.error(f"Invalid configuration: {e}")
        print(f"invalid input: {e}", file=sys.stderr)
        return EXIT_INPUT

    logger.info(f"Running {config.command} {config.action or ''}")
    try:
        return run(config)
    finally:
        logger.info("aw exited.")


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
