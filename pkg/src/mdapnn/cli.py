"""Command line front end.

    mdapnn reference --config ex511.cfg --out runs/ex511
    mdapnn train     --config ex511.cfg --out runs/ex511 [--seed 7]
    mdapnn evaluate  --config ex511.cfg --out runs/ex511
    mdapnn export    --out runs/ex511 --format json

Exit codes: 0 success, 2 configuration, 3 numerical, 4 input/output.
Any config key can be overridden on the command line, e.g.
`--override problem.eps=1e-4 --override weights.lambda0=10`.
"""

import argparse
import os
import sys

from .config import parse_config
from .errors import ConfigurationError, ContractViolation, NumericalError
from .experiment import export_results, run_experiment

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4

BUNDLED_DIR = os.path.join(os.path.dirname(__file__), "configs")


def resolve_config_path(path):
    """Accept a filesystem path or the name of a bundled config."""
    if os.path.exists(path):
        return path
    bundled = os.path.join(BUNDLED_DIR, path)
    if os.path.exists(bundled):
        return bundled
    if not path.endswith(".cfg") and os.path.exists(bundled + ".cfg"):
        return bundled + ".cfg"
    return path  # parse_config reports the missing file


def build_parser():
    p = argparse.ArgumentParser(
        prog="mdapnn",
        description="Micro-macro physics-informed networks for 1D gray "
                    "radiative transfer, with deterministic reference solvers.")
    sub = p.add_subparsers(dest="mode", required=True)

    def common(sp, needs_config=True):
        if needs_config:
            sp.add_argument("--config", required=True,
                            help="config file path or bundled config name")
            sp.add_argument("--override", action="append", default=[],
                            metavar="KEY=VALUE",
                            help="override a config entry, KEY is section.key")
        sp.add_argument("--out", default="out", help="output directory")

    sp = sub.add_parser("reference", help="solve and cache the reference")
    common(sp)
    sp.add_argument("--force", action="store_true",
                    help="recompute even if a cache entry exists")

    sp = sub.add_parser("train", help="train the configured model variant")
    common(sp)
    sp.add_argument("--seed", type=int, default=None,
                    help="override the sampling/init seed")

    sp = sub.add_parser("evaluate", help="compare the trained model "
                                         "against the cached reference")
    common(sp)
    sp.add_argument("--self-check", action="store_true",
                    help="evaluate the reference against itself (all zeros)")

    sp = sub.add_parser("export", help="rewrite saved results in csv or json")
    common(sp, needs_config=False)
    sp.add_argument("--format", choices=("csv", "json"), default="csv")
    return p


def _dispatch(args):
    if args.mode == "export":
        path = export_results(args.out, args.format)
        print(f"wrote {path}")
        return EXIT_OK

    config = parse_config(resolve_config_path(args.config),
                          overrides=args.override)
    if args.mode == "reference":
        ref = run_experiment(config, "reference", args.out)
        if getattr(args, "force", False):
            from .experiment import run_reference
            ref = run_reference(config, args.out, force=True)
        shape = ref.rho.shape
        print(f"reference [{ref.scheme}] grid {shape} cached under {args.out}/cache")
        return EXIT_OK
    if args.mode == "train":
        nets, state = run_experiment(config, "train", args.out, seed=args.seed)
        final = state.history[-1][1].total if state.history else float("nan")
        print(f"trained {config.variant} for {state.step} steps, "
              f"final loss {final:.6g}; artifacts under {args.out}")
        return EXIT_OK
    table, _ = run_experiment(config, "evaluate", args.out,
                              self_check=args.self_check)
    print("quantity,time,error")
    for q, t, e in table:
        print(f"{q},{t:g},{e:.6g}")
    print(f"results + plots + figures under {args.out}")
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except ConfigurationError as exc:
        print("configuration error:", file=sys.stderr)
        for v in exc.violations:
            print(f"  - {v}", file=sys.stderr)
        return EXIT_CONFIG
    except ContractViolation as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (OSError, TimeoutError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
