#!/usr/bin/env python3
"""Plot a finished run from its plotdata files.

Feed it a run directory (the one holding report.json).  Missing .dat files
are regenerated with `emit_plotdata` first.  Produces PNGs next to the data:

    plan.png      top-down COM path over footholds and support polygons
    com_cop.png   COM state and applied COP against the sample index
    outputs.png   output norms and joint torques over time   (full mode)
    grf.png       vertical ground reaction forces            (full mode)

Requires matplotlib (not a package dependency; install separately).
"""
import argparse
import sys
from pathlib import Path

import numpy as np

try:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    plt = None


def read_blocks(path):
    """Parse a blank-line-separated .dat file -> (header, [arrays])."""
    header = None
    blocks, current = [], []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            if header is None:
                header = line[1:].strip()
            continue
        if not line.strip():
            if current:
                blocks.append(np.asarray(current))
                current = []
            continue
        current.append([float(v) for v in line.split()])
    if current:
        blocks.append(np.asarray(current))
    return header, blocks


def plot_plan(path, out):
    _, blocks = read_blocks(path)
    com, feet, polys = blocks[0], blocks[1], blocks[2:]
    fig, ax = plt.subplots(figsize=(6, 6))
    for poly in polys:
        ax.fill(poly[:, 0], poly[:, 1], alpha=0.08, color="tab:green", lw=0)
        ax.plot(poly[:, 0], poly[:, 1], color="tab:green", lw=0.5, alpha=0.5)
    ax.plot(feet[:, 0], feet[:, 1], "s", color="tab:red", ms=5, label="footholds")
    ax.plot(com[:, 0], com[:, 1], color="tab:blue", lw=1.5, label="COM path")
    ax.plot(com[0, 0], com[0, 1], "o", color="tab:blue")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_aspect("equal")
    ax.legend(loc="best", fontsize=8)
    ax.set_title("plan view")
    fig.savefig(out, dpi=150, bbox_inches="tight")
    plt.close(fig)


def plot_com_cop(path, out):
    header, blocks = read_blocks(path)
    cols = header.split()
    data = blocks[0]
    k = data[:, 0]
    fig, axes = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    for name, style in ((cols[1], "-"), (cols[3], "--")):
        axes[0].plot(k, data[:, cols.index(name)], style, label=name)
    axes[0].step(k, data[:, cols.index("u_x")], where="post",
                 color="tab:red", lw=0.8, label="u_x")
    axes[0].legend(fontsize=8)
    axes[0].set_ylabel("x [m]")
    for name, style in ((cols[2], "-"), (cols[4], "--")):
        axes[1].plot(k, data[:, cols.index(name)], style, label=name)
    axes[1].step(k, data[:, cols.index("u_y")], where="post",
                 color="tab:red", lw=0.8, label="u_y")
    axes[1].legend(fontsize=8)
    axes[1].set_ylabel("y")
    axes[1].set_xlabel("sample k")
    fig.savefig(out, dpi=150, bbox_inches="tight")
    plt.close(fig)


def plot_outputs(path, out):
    header, blocks = read_blocks(path)
    cols = header.split()
    data = blocks[0]
    t = data[:, 0]
    fig, axes = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    for name in ("y_norm", "ydot_norm"):
        axes[0].plot(t, data[:, cols.index(name)], lw=0.8, label=name)
    axes[0].set_yscale("log")
    axes[0].legend(fontsize=8)
    axes[0].set_ylabel("output norms")
    for name in cols:
        if name.startswith("tau"):
            axes[1].plot(t, data[:, cols.index(name)], lw=0.5)
    axes[1].set_ylabel("joint torques [N m]")
    axes[1].set_xlabel("t [s]")
    fig.savefig(out, dpi=150, bbox_inches="tight")
    plt.close(fig)


def plot_grf(path, out):
    header, blocks = read_blocks(path)
    cols = header.split()
    data = blocks[0]
    t = data[:, 0]
    fig, ax = plt.subplots(figsize=(8, 4))
    for name in cols:
        if name.endswith("_z"):
            ax.plot(t, data[:, cols.index(name)], lw=0.7, label=name)
    ax.set_ylabel("vertical GRF [N]")
    ax.set_xlabel("t [s]")
    ax.legend(fontsize=8, ncol=4)
    fig.savefig(out, dpi=150, bbox_inches="tight")
    plt.close(fig)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("run_dir", help="directory containing report.json")
    args = ap.parse_args(argv)

    if plt is None:
        print("matplotlib is not installed; pip install matplotlib", file=sys.stderr)
        return 2
    run = Path(args.run_dir)
    if not (run / "report.json").exists():
        print(f"no report.json under {run}", file=sys.stderr)
        return 2
    if not (run / "plot_plan.dat").exists():
        from quadsteer.scenarios import emit_plotdata
        emit_plotdata(run / "report.json")

    made = []
    plot_plan(run / "plot_plan.dat", run / "plan.png")
    made.append("plan.png")
    plot_com_cop(run / "plot_com_cop.dat", run / "com_cop.png")
    made.append("com_cop.png")
    if (run / "plot_outputs.dat").exists():
        plot_outputs(run / "plot_outputs.dat", run / "outputs.png")
        made.append("outputs.png")
    if (run / "plot_grf.dat").exists():
        plot_grf(run / "plot_grf.dat", run / "grf.png")
        made.append("grf.png")
    for name in made:
        print(f"wrote {run / name}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
