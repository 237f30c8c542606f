"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 numerical gate failure,
4 verification failure.
"""

from __future__ import annotations

import argparse
import sys

from .. import __version__
from ..covariance import DomainError, IntegratorError
from ..kernels import KernelDomainError
from ..macro import InitialDataError, JumpGateError
from ..params import ParameterError
from .commands import RUNNERS, VerificationFailure
from .config import ConfigError, load_file, resolve

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_VERIFY = 0, 2, 3, 4

HELP = {
    "simulate": "Monte Carlo ensemble of the chain: energy profile and integrated currents",
    "covariance": "exact covariance evolution (optionally with the Fourier residual report)",
    "pde": "limiting equation: stationary profile or time evolution",
    "kernels": "tabulate the macroscopic kernels to CSV",
    "converge": "covariance solver vs PDE over a list of chain sizes",
    "verify": "run the acceptance checks (quick or full)",
}

NUMERICAL = (ParameterError, IntegratorError, DomainError, KernelDomainError, InitialDataError, JumpGateError)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="heatchain", description="Heat transport in a harmonic chain with baths.")
    ap.add_argument("--version", action="version", version=f"heatchain {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, text in HELP.items():
        p = sub.add_parser(name, help=text, description=text)
        p.add_argument("--config", metavar="PATH", help="JSON config file")
        p.add_argument("--seed", type=int, metavar="U64")
        p.add_argument("--out", metavar="DIR", help="output directory (default: runs/<command>)")
        p.add_argument("--threads", type=int, metavar="K", help="worker threads; never changes results")
        p.add_argument("--tolerance-scale", type=float, metavar="FLOAT", dest="tolerance_scale")
        if name == "verify":
            p.add_argument("--level", choices=("quick", "full"))
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    flags = {k: getattr(args, k) for k in ("seed", "threads", "tolerance_scale", "out")}
    if args.command == "verify":
        flags["level"] = args.level
    try:
        file_values = load_file(args.config) if args.config else {}
        if args.out is None and "out" not in file_values:
            flags["out"] = f"runs/{args.command}"
        cfg = resolve(args.command, file_values, flags)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    runner = RUNNERS[args.command]
    try:
        if args.command == "verify":
            _, results = runner(cfg, cfg.out, progress=lambda r: print(r.line(), flush=True))
            _summary(results)
        elif args.command == "converge":
            runner(cfg, cfg.out, progress=lambda r: print(
                f"n={r.n} e_n={r.e_n:.3e} equipartition={r.equipartition:.3e} "
                f"current_bound={r.current_bound:.4f} [{r.runtime_s:.1f}s]", flush=True))
        else:
            runner(cfg, cfg.out)
    except VerificationFailure as exc:
        if exc.results:
            _summary(exc.results)
        print(f"verification failed: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except NUMERICAL as exc:
        print(f"numerical gate: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (OSError, KeyError, ValueError) as exc:
        # unreadable kernel table and similar input problems
        print(f"config error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"wrote {cfg.out}")
    return EXIT_OK


def _summary(results):
    from .checks import CLOSED_FORM_CONSTANTS

    print("constants checked:")
    for c in CLOSED_FORM_CONSTANTS:
        print(f"  {c}")
    n_ok = sum(r.passed for r in results)
    print(f"{n_ok}/{len(results)} checks passed")


if __name__ == "__main__":
    sys.exit(main())
