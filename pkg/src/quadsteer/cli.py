"""Command-line entry point.

    quadsteer run <scenario.toml | bundled-name> [--out-dir D] [--seed N] [-v]
    quadsteer list [-v]
    quadsteer plotdata <report.json | run-dir> [--out-dir D]

Exit codes: 0 success, 1 run failure (a failed report was still written),
2 invalid configuration or arguments.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .scenarios import (ScenarioError, bundled_scenario_path, emit_plotdata,
                        list_scenarios, run_scenario)


def _cmd_run(args) -> int:
    path = Path(args.scenario)
    if not path.exists():
        try:
            path = bundled_scenario_path(args.scenario)
        except ScenarioError as exc:
            print(f"error: {args.scenario} is neither a file nor a bundled "
                  f"scenario", file=sys.stderr)
            for line in exc.errors:
                print(f"  {line}", file=sys.stderr)
            return 2
    try:
        report = run_scenario(path, out_dir=args.out_dir, seed=args.seed,
                              verbose=args.verbose)
    except ScenarioError as exc:
        print("error: scenario failed validation:", file=sys.stderr)
        for line in exc.errors:
            print(f"  - {line}", file=sys.stderr)
        return 2

    s = report.scenario
    print(f"scenario      {s.name} ({s.mode})")
    print(f"out dir       {report.out_dir}")
    print(f"completed     {report.completed}")
    print(f"converged     {report.converged}   final error {report.final_error:.3e} m")
    print(f"mpc solves    {report.mpc_solves} over {report.num_events} events")
    if s.mode == "full_order":
        print(f"alloc solves  {report.allocator_solves}")
        print(f"max |y|       {report.max_output_norm:.4f} (bound {s.output_bound})")
    for key, count in report.violations.items():
        print(f"violations    {key}: {count}")
    if report.failure:
        print(f"FAILED        {report.failure}")
        return 1
    if s.note and args.verbose:
        print(f"note          {s.note}")
    print(f"report        {report.report_path}")
    return 0


def _cmd_list(args) -> int:
    catalog = list_scenarios()
    width = max(len(c["name"]) for c in catalog) if catalog else 0
    for entry in catalog:
        extras = []
        if entry["mode"] == "full_order":
            extras.append(entry["contact_model"])
            if entry["latency"]:
                extras.append(f"{entry['control_rate_hz']:.0f} Hz + "
                              f"{entry['latency'] * 1e3:.0f} ms delay")
        tag = ", ".join(extras)
        line = (f"{entry['name']:<{width}}  {entry['mode']:<13} "
                f"{entry['direction']:<9} {tag}")
        print(line.rstrip())
        if args.verbose and entry["note"]:
            print(f"{'':<{width}}  {entry['note']}")
    return 0


def _cmd_plotdata(args) -> int:
    try:
        written = emit_plotdata(args.report, out_dir=args.out_dir)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    base = Path(args.out_dir) if args.out_dir else (
        Path(args.report).parent if Path(args.report).is_file() else Path(args.report))
    for name in written:
        print(base / name)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="quadsteer",
        description="Run locomotion scenarios: event-based COM steering plus "
                    "QP-based whole-body tracking.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario file or bundled scenario")
    p_run.add_argument("scenario", help="TOML path or bundled scenario name")
    p_run.add_argument("--out-dir", default=None, help="output directory "
                       "(default: the scenario's out_dir, else runs/<name>)")
    p_run.add_argument("--seed", type=int, default=None,
                       help="override the scenario's random seed")
    p_run.add_argument("-v", "--verbose", action="store_true",
                       help="print per-event progress")
    p_run.set_defaults(func=_cmd_run)

    p_list = sub.add_parser("list", help="list bundled scenarios")
    p_list.add_argument("-v", "--verbose", action="store_true",
                        help="include descriptions")
    p_list.set_defaults(func=_cmd_list)

    p_plot = sub.add_parser("plotdata",
                            help="emit whitespace-delimited plot files from a report")
    p_plot.add_argument("report", help="report.json (or its directory)")
    p_plot.add_argument("--out-dir", default=None,
                        help="where to write the .dat files (default: beside the report)")
    p_plot.set_defaults(func=_cmd_plotdata)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
