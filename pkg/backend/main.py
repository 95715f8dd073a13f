"""
qmle command-line entry point.

    python main.py estimate --functional tsallis --q 2 --n 64 --eps 0.1
    python main.py scale-sweep --q 0.5 --eps 0.2 --n 16 64 256 1024
    python main.py verify
    python main.py certify-poly --kind neg_power --c 0.5 --delta 0.125 --eps 0.01
    python main.py compare-backends --count 20

Results go to --out (or QMLE_OUTPUT_DIR); the JSON summary is printed to stdout
and logs go to stderr.
"""

import argparse
import logging
import os
import sys
from typing import Dict, List, Optional

from dotenv import load_dotenv

from src.commands import certify, compare, estimate, sweep, verify
from src.config import LOG_LEVEL_ENV, Backend, DistributionKind, FunctionalKind, PolyKind, Profile, Purification

load_dotenv()

logger = logging.getLogger(__name__)


class QMLEArgumentParser(argparse.ArgumentParser):
    """Usage errors exit with 1, the malformed-input code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def configure_logging() -> None:
    level_name = os.getenv(LOG_LEVEL_ENV, "INFO").upper()
    logging.basicConfig(
        level=getattr(logging, level_name, logging.INFO),
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
        stream=sys.stderr,
    )


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=str, default=None, help="JSON config document")
    parser.add_argument("--out", type=str, default=None, help="Output directory")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--workers", type=int, default=None)


def _choices(enum) -> List[str]:
    return [member.value for member in enum]


def build_parser() -> argparse.ArgumentParser:
    parser = QMLEArgumentParser(prog="qmle", description="Multi-level amplitude estimation of entropies")
    sub = parser.add_subparsers(dest="cmd", required=True)

    est = sub.add_parser("estimate", help="Seeded estimates of one functional")
    _common(est)
    est.add_argument("--distribution", choices=_choices(DistributionKind), default=None)
    est.add_argument("--n", type=int, default=None)
    est.add_argument("--s", type=float, default=None, help="Zipf exponent")
    est.add_argument("--path", type=str, default=None, help="Probability file")
    est.add_argument("--functional", choices=_choices(FunctionalKind), default=None)
    est.add_argument("--q", type=float, default=None)
    est.add_argument("--alpha", type=float, default=None)
    est.add_argument("--eps", type=float, default=None)
    est.add_argument("--trials", type=int, default=None)
    est.add_argument("--backend", choices=_choices(Backend), default=None)
    est.add_argument("--purification", choices=_choices(Purification), default=None)
    est.add_argument("--profile", choices=_choices(Profile), default=None)
    est.add_argument("--perturb-map", dest="perturb_map", action="store_true", default=None)
    est.add_argument("--shannon-tail-factor", dest="shannon_tail_factor", type=float, default=None)
    est.set_defaults(func=estimate.run_estimate_command, flags=estimate.FLAGS)

    swp = sub.add_parser("scale-sweep", help="Query counts over an (n, eps) grid")
    _common(swp)
    swp.add_argument("--q", type=float, default=None)
    swp.add_argument("--eps", type=float, nargs="+", default=None)
    swp.add_argument("--n", type=int, nargs="+", default=None)
    swp.add_argument("--distribution", choices=["uniform", "zipf"], default=None)
    swp.add_argument("--s", type=float, default=None)
    swp.add_argument("--trials", type=int, default=None)
    swp.add_argument("--profile", choices=_choices(Profile), default=None)
    swp.set_defaults(func=sweep.run_sweep_command, flags=sweep.FLAGS)

    ver = sub.add_parser("verify", help="Plan conditions, error budgets and backend equivalence")
    _common(ver)
    ver.add_argument("--q", type=float, nargs="+", default=None)
    ver.add_argument("--eps", type=float, nargs="+", default=None)
    ver.add_argument("--n", type=int, nargs="+", default=None)
    ver.add_argument("--no-shannon", dest="include_shannon", action="store_false", default=None)
    ver.add_argument("--profiles", choices=_choices(Profile), nargs="+", default=None)
    ver.add_argument("--adversarial-seeds", dest="adversarial_seeds", type=int, default=None)
    ver.add_argument("--compare-count", dest="compare_count", type=int, default=None)
    ver.add_argument("--sabotage-bounds", dest="sabotage_bounds", type=float, default=None, help=argparse.SUPPRESS)
    ver.set_defaults(func=verify.run_verify_command, flags=verify.FLAGS)

    cert = sub.add_parser("certify-poly", help="Build and certify one polynomial")
    cert.add_argument("--config", type=str, default=None)
    cert.add_argument("--out", type=str, default=None)
    cert.add_argument("--kind", choices=_choices(PolyKind), default=None)
    for name in ("c", "delta", "nu", "beta", "eps"):
        cert.add_argument(f"--{name}", type=float, default=None)
    cert.add_argument("--j", type=int, default=None)
    cert.add_argument("--m", type=int, default=None)
    cert.add_argument("--max-explicit-degree", dest="max_explicit_degree", type=int, default=None)
    cert.set_defaults(func=certify.run_certify_command, flags=certify.FLAGS)

    cmp = sub.add_parser("compare-backends", help="Block against dense per-level amplitudes")
    _common(cmp)
    cmp.add_argument("--count", type=int, default=None)
    cmp.add_argument("--max-n", dest="max_n", type=int, default=None)
    cmp.add_argument("--q", type=float, default=None)
    cmp.add_argument("--eps", type=float, default=None)
    cmp.add_argument("--tolerance", type=float, default=None)
    cmp.add_argument("--profile", choices=_choices(Profile), default=None)
    cmp.set_defaults(func=compare.run_compare_command, flags=compare.FLAGS)
    return parser


def collect_overrides(args: argparse.Namespace) -> Dict[str, object]:
    """Map parsed flags onto dotted config keys; flags left unset are dropped."""
    values = vars(args)
    return {key: values[flag] for flag, key in args.flags.items() if values.get(flag) is not None}


def main(argv: Optional[List[str]] = None) -> int:
    configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    overrides = collect_overrides(args)
    logger.debug(f"{args.cmd}: overrides {overrides}")
    return args.func(args.config, overrides, args.out)


if __name__ == "__main__":
    sys.exit(main())
