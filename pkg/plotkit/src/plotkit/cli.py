"""Command line: render panels or convergence plots from a run directory.

    spme-plot panels --in RUNDIR --out FILE [--snapshots N] [--times ...]
    spme-plot convergence --in RUNDIR --out FILE

``panels`` picks up every trajectory*.csv in the run directory (sorted),
one grid row per trajectory; ``convergence`` reads convergence.csv.
"""

from __future__ import annotations

import argparse
import glob
import os
import sys

from .convergence import render_convergence
from .io import SchemaError, load_trajectory
from .panels import PanelSpec, render_panels

__all__ = ["main"]


def _pick_times(path: str, n: int) -> list:
    times = load_trajectory(path).times
    if len(times) <= n:
        return list(times)
    idx = [round(i * (len(times) - 1) / (n - 1)) for i in range(n)]
    return [times[i] for i in idx]


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="spme-plot")
    parser.add_argument("kind", choices=("panels", "convergence"))
    parser.add_argument("--in", dest="run_dir", required=True,
                        help="run directory with the CSV outputs")
    parser.add_argument("--out", required=True, help="output image path")
    parser.add_argument("--snapshots", type=int, default=4,
                        help="snapshot count per trajectory (panels)")
    parser.add_argument("--times", type=float, nargs="*", default=None,
                        help="explicit snapshot times (panels)")
    args = parser.parse_args(argv)

    try:
        if args.kind == "panels":
            paths = sorted(glob.glob(os.path.join(args.run_dir,
                                                  "trajectory*.csv")))
            if not paths:
                raise FileNotFoundError(
                    f"no trajectory*.csv in {args.run_dir}")
            entries = []
            for p in paths:
                times = (args.times if args.times
                         else _pick_times(p, args.snapshots))
                entries.append((p, times))
            labels = [os.path.splitext(os.path.basename(p))[0]
                      for p in paths]
            result = render_panels(PanelSpec(entries, labels=labels),
                                   args.out)
            print(f"wrote {result.path}: {result.rows}x{result.cols} panels")
        else:
            csv_path = os.path.join(args.run_dir, "convergence.csv")
            result = render_convergence(csv_path, args.out)
            print(f"wrote {result.path}: {result.annotation}")
        return 0
    except (OSError, ValueError, KeyError, SchemaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
