#!/usr/bin/env python3
"""Run the full 18-DOF pipeline on a bundled scenario and print the summary.

Thin wrapper over the scenario runner; equivalent to `quadsteer run` but
handy when you want the result object in a debugger (`python -i`).
"""
import argparse
import sys

from quadsteer.scenarios import bundled_scenario_path, list_scenarios, run_scenario


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("scenario", nargs="?", default="forward_trot",
                    help="bundled scenario name or a TOML path")
    ap.add_argument("--out-dir", help="where to put report.json and the CSVs")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--list", action="store_true", help="list bundled scenarios")
    args = ap.parse_args(argv)

    if args.list:
        for entry in list_scenarios():
            print(f"{entry['name']:28s} {entry['mode']:13s} {entry['note']}")
        return 0

    path = args.scenario
    try:
        path = bundled_scenario_path(path)
    except KeyError:
        pass  # treat as a filesystem path
    report = run_scenario(path, out_dir=args.out_dir, seed=args.seed, verbose=True)
    print()
    print(f"  completed:   {report.completed}")
    print(f"  converged:   {report.converged}  (final error {report.final_error:.3e} m)")
    print(f"  events:      {report.num_events}  mpc solves: {report.mpc_solves}  "
          f"allocator solves: {report.allocator_solves}")
    if report.max_output_norm is not None:
        print(f"  max |y|:     {report.max_output_norm:.4f}")
    print(f"  violations:  {report.violations}")
    if report.failure:
        print(f"  FAILED:      {report.failure}")
    print(f"report: {report.report_path}")
    return 0 if report.completed else 1


if __name__ == "__main__":
    sys.exit(main())
