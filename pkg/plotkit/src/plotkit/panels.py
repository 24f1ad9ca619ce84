"""Moisture panel grids: trajectories as rows, snapshot times as columns.

All panels of one figure share a single color scale (default: the global
range over every referenced snapshot), so the visual comparison between
rows carries meaning.  Depth increases downward in each panel.
"""

from __future__ import annotations

from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .io import load_trajectory  # noqa: E402

__all__ = ["PanelSpec", "RenderResult", "render_panels"]

_SAVEFIG_KW = dict(dpi=120, metadata={"Software": "plotkit"})


@dataclass
class PanelSpec:
    """Which trajectories and snapshot times to arrange in a grid.

    ``entries`` holds (trajectory CSV path, [snapshot times]); all entries
    must request the same number of snapshots.  Color bounds default to
    the global min/max across every referenced snapshot.
    """

    entries: list
    labels: list | None = None
    color_bounds: tuple | None = None

    def __post_init__(self):
        if not self.entries:
            raise ValueError("panel spec has no trajectories")
        counts = {len(times) for _, times in self.entries}
        if len(counts) != 1 or counts == {0}:
            raise ValueError(
                "every trajectory needs the same nonzero snapshot count"
            )


@dataclass
class RenderResult:
    path: str
    rows: int
    cols: int

    @property
    def panel_count(self) -> int:
        return self.rows * self.cols


def _as_image(arr: np.ndarray) -> np.ndarray:
    # depth (last axis) maps to image rows, surface at the top
    if arr.ndim == 1:
        return arr[None, :].T  # depth profile as a single column
    return arr.T


def render_panels(spec: PanelSpec, out: str) -> RenderResult:
    """Render the grid to ``out``; deterministic for identical inputs."""
    grids = []
    for path, times in spec.entries:
        traj = load_trajectory(path)
        grids.append([_as_image(traj.at(t)) for t in times])

    if spec.color_bounds is None:
        vmin = min(g.min() for row in grids for g in row)
        vmax = max(g.max() for row in grids for g in row)
    else:
        vmin, vmax = spec.color_bounds
    if not (np.isfinite(vmin) and np.isfinite(vmax)):
        raise ValueError("color bounds must be finite")
    if vmin == vmax:
        vmax = vmin + 1.0  # constant fields sit at the scale minimum

    rows, cols = len(spec.entries), len(spec.entries[0][1])
    fig, axes = plt.subplots(rows, cols,
                             figsize=(2.4 * cols + 1.2, 2.4 * rows),
                             squeeze=False)
    image = None
    for r, (entry, row_grids) in enumerate(zip(spec.entries, grids)):
        for c, arr in enumerate(row_grids):
            ax = axes[r][c]
            image = ax.imshow(arr, origin="upper", vmin=vmin, vmax=vmax,
                              aspect="auto", cmap="viridis")
            ax.set_xticks([])
            ax.set_yticks([])
            if r == 0:
                ax.set_title(f"t = {entry[1][c]:g}", fontsize=9)
        label = (spec.labels[r] if spec.labels else entry[0])
        axes[r][0].set_ylabel(label, fontsize=8)
    fig.colorbar(image, ax=[ax for row in axes for ax in row],
                 fraction=0.025)
    fig.savefig(out, **_SAVEFIG_KW)
    plt.close(fig)
    return RenderResult(out, rows, cols)
