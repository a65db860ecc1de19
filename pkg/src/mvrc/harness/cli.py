"""Command line: ``mvrc run|validate <config>`` and ``mvrc summarize <dir>``.

Exit codes: 0 success, 2 configuration error, 3 runtime failure (including a
run where some solver failed; its trace ends in an ``error`` row).
"""
import argparse
import logging
import sys

from ..core import ConfigurationError
from ..data import DataLoadError
from . import config as cfgmod
from .experiment import SUMMARY_COLUMNS, run_experiment, summarize_dir, validate

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

log = logging.getLogger("mvrc")


def _print_summary(rows, out):
    cols = ("solver", "algorithm", "status", "budget", "iter", "grad_mapping_norm", "objective", "gap")
    out.write("  ".join(f"{c:>18}" for c in cols) + "\n")
    for r in rows:
        cells = []
        for c in cols:
            v = r.get(c, "")
            cells.append(f"{v:>18.6g}" if isinstance(v, float) else f"{str(v):>18}")
        out.write("  ".join(cells) + "\n")


def _cmd_validate(args):
    flat = cfgmod.read_config(args.config)
    spec, problem, info, x0, solvers = validate(flat)
    print(f"ok: problem {problem.name} (d={problem.d}, n={problem.n}, N={problem.N}), "
          f"{len(solvers)} solver(s): {', '.join(solvers)}")
    return EXIT_OK


def _cmd_run(args):
    flat = cfgmod.read_config(args.config)
    rows, failures = run_experiment(flat, args.output)
    _print_summary(rows, sys.stdout)
    for name, err in failures.items():
        log.error("solver %s failed: %s", name, err)
    return EXIT_RUNTIME if failures else EXIT_OK


def _cmd_summarize(args):
    rows = summarize_dir(args.directory)
    if args.csv:
        sys.stdout.write(",".join(SUMMARY_COLUMNS) + "\n")
        for r in rows:
            sys.stdout.write(",".join("" if r.get(c) is None else str(r.get(c)) for c in SUMMARY_COLUMNS) + "\n")
    else:
        _print_summary(rows, sys.stdout)
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="mvrc", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run every solver in a config file")
    r.add_argument("config")
    r.add_argument("-o", "--output", help="output directory (overrides the config)")
    r.set_defaults(func=_cmd_run)
    v = sub.add_parser("validate", help="check a config file without running")
    v.add_argument("config")
    v.set_defaults(func=_cmd_validate)
    s = sub.add_parser("summarize", help="summarise an output directory")
    s.add_argument("directory")
    s.add_argument("--csv", action="store_true", help="print CSV instead of a table")
    s.set_defaults(func=_cmd_summarize)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors, which matches the config-error code
        return exc.code if isinstance(exc.code, int) else EXIT_CONFIG
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigurationError, DataLoadError) as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except Exception as exc:
        log.error("runtime failure: %s: %s", type(exc).__name__, exc)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
