"""Log-log convergence plots with the fitted slope annotated.

The annotated slope is taken verbatim from the CSV's slope column (the
renderer never refits), so the figure always agrees with the table it
came from.
"""

from __future__ import annotations

from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .io import load_convergence  # noqa: E402

__all__ = ["ConvergenceRender", "render_convergence"]

_SAVEFIG_KW = dict(dpi=120, metadata={"Software": "plotkit"})


@dataclass
class ConvergenceRender:
    path: str
    annotation: str
    has_errorbars: bool


def render_convergence(csv_path: str, out: str) -> ConvergenceRender:
    """Render a log-log scatter of the rung errors to ``out``.

    Draws error bars when a stderr column is present and a guide line
    with the CSV's fitted slope; rejects tables with fewer than 2 rungs.
    """
    table = load_convergence(csv_path)
    if table.values.size < 2:
        raise ValueError(
            f"need at least 2 rungs to plot a rate, got {table.values.size}"
        )
    annotation = f"slope = {table.slope:.2f}"

    fig, ax = plt.subplots(figsize=(4.2, 3.4))
    has_errorbars = table.stderr is not None
    if has_errorbars:
        ax.errorbar(table.values, table.errors, yerr=table.stderr,
                    fmt="o", capsize=3)
    else:
        ax.plot(table.values, table.errors, "o")
    # guide line with the fitted slope through the first point
    x = np.array([table.values.min(), table.values.max()])
    y = table.errors[0] * (x / table.values[0]) ** table.slope
    ax.plot(x, y, "--", linewidth=1)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel(table.parameter)
    ax.set_ylabel("squared dual-norm distance")
    ax.annotate(annotation, xy=(0.05, 0.92), xycoords="axes fraction")
    fig.tight_layout()
    fig.savefig(out, **_SAVEFIG_KW)
    plt.close(fig)
    return ConvergenceRender(out, annotation, has_errorbars)
