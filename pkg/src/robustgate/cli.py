"""Command-line entry point: ``robustgate <command> [--config FILE] [overrides]``.

Exit codes: 0 success, 2 validation failure, 3 infeasible optimization,
4 configuration error.
"""
from __future__ import annotations

import argparse
import logging
import sys

from .experiments.config import ConfigError, ExperimentSpec
from .experiments.runners import RUNNERS

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_INFEASIBLE = 3
EXIT_CONFIG = 4

STOCHASTIC = {"optimize", "sweep-time", "sweep-alpha", "scan-perturbation", "traces", "tradeoff"}

HELP = {
    "optimize": "optimize pulses for each scheme, V and gate time",
    "sweep-time": "optimized J_U and J_R against gate time",
    "sweep-alpha": "time sweeps over several anharmonicities",
    "scan-perturbation": "infidelity against static perturbation strength",
    "traces": "time-resolved fidelity and leakage of T, TR, TL and DRAG pulses",
    "tradeoff": "multistart J_R versus J_L scatter",
    "drag": "DRAG baseline fields and costs",
    "validate": "run the oracle checks",
}


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _words(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with the configuration code instead of argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="robustgate",
                                     description="Robust transmon gate optimization experiments.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in HELP.items():
        p = sub.add_parser(name, help=text, description=text)
        p.error = parser.error
        p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--seed", type=int,
                       help="base random seed" + (" (required)" if name in STOCHASTIC else ""))
        p.add_argument("--out", dest="output_dir", help="output root directory")
        p.add_argument("--schemes", type=_words, help="e.g. T,TR,TL,TRL")
        p.add_argument("--perturbations", type=_words, help="any of n,q,n2")
        p.add_argument("--times", type=_floats, help="gate times in units of T_Omega")
        p.add_argument("--alphas", type=_floats, help="anharmonicities alpha/Omega")
        p.add_argument("--levels", dest="n_levels", type=int, help="levels used for optimization")
        p.add_argument("--verify-levels", dest="verification_n_levels", type=int,
                       help="levels used for verification (default 11)")
        p.add_argument("--n-seeds", type=int, help="random starts per optimization")
        p.add_argument("--n-starts", type=int, help="random starts per scheme in the scatter")
        p.add_argument("--epsilon", type=float, help="stage-A threshold epsilon_A")
        p.add_argument("--workers", type=int, help="worker processes")
        p.add_argument("--no-charts", dest="charts", action="store_false", default=None,
                       help="skip SVG rendering")
    return parser


def spec_from_args(args) -> ExperimentSpec:
    if args.command in STOCHASTIC and args.seed is None:
        raise ConfigError(f"{args.command} is stochastic and needs --seed")
    if args.config:
        spec = ExperimentSpec.load(args.config)
    else:
        spec = ExperimentSpec.for_command(args.command)
    over = {k: getattr(args, k) for k in ("seed", "output_dir", "schemes", "perturbations",
                                          "times", "alphas", "n_levels", "verification_n_levels",
                                          "n_seeds", "n_starts", "workers", "charts")}
    if args.epsilon is not None:
        over["optimizer"] = {**spec.optimizer, "epsilon_a": args.epsilon}
    return spec.with_overrides(**over)


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        spec = spec_from_args(args)
        result = RUNNERS[args.command](spec)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(result.path)
    if result.status == "validation_failed":
        for r in result.extra.get("failed", []):
            print(r.line(), file=sys.stderr)
        if "summary" in result.extra and "error" in result.extra["summary"]:
            print(result.extra["summary"]["error"], file=sys.stderr)
        return EXIT_VALIDATION
    if result.status == "infeasible":
        print("at least one optimization did not meet its epsilon constraint", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
