"""Batch command line: ``simulate``, ``oracle``, ``run``, ``compare``, ``plot``.

Exit codes: 0 ok, 1 comparison failed, 2 usage or configuration error,
3 runtime fault (deadlock, instability).
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings

from .buck import SimulationFault
from .kernel import KernelError
from .scenario import ScenarioError, load_scenario, run_scenario
from .svgplot import plot_trace
from .trace import TraceFormatError, compare_traces

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_FAULT = 0, 1, 2, 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="buckcpn", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="cmd", required=True)
    for name, help_ in (
        ("simulate", "run the Petri net model"),
        ("oracle", "run the forward-Euler reference"),
        ("run", "run the engine named in the scenario"),
    ):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("scenario")
        sp.add_argument("--out", required=True, help="trace CSV to write")
    sp = sub.add_parser("compare", help="compare two trace CSV files")
    sp.add_argument("a")
    sp.add_argument("b")
    sp.add_argument("--tol", type=float, default=1e-9, help="max relative error for iL and vo")
    sp = sub.add_parser("plot", help="render a trace CSV as SVG")
    sp.add_argument("csv")
    sp.add_argument("--out", required=True)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.cmd in ("simulate", "oracle", "run"):
            scenario = load_scenario(args.scenario)
            engine = {"simulate": "net", "oracle": "oracle", "run": None}[args.cmd]
            with warnings.catch_warnings():
                warnings.simplefilter("always")
                run_scenario(scenario, args.out, engine)
            return EXIT_OK
        if args.cmd == "compare":
            report = compare_traces(args.a, args.b, args.tol)
            print(json.dumps(report.to_dict(), sort_keys=True))
            return EXIT_OK if report.passed else EXIT_FAIL
        if args.cmd == "plot":
            plot_trace(args.csv, args.out)
            return EXIT_OK
    except (ScenarioError, TraceFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SimulationFault, KernelError) as exc:
        print(f"runtime fault: {exc}", file=sys.stderr)
        return EXIT_FAULT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
