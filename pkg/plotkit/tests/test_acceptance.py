"""Secondary acceptance: a 2x4 panel grid from gravity-demo outputs and a
convergence plot whose annotation matches the CSV, with the synthetic
exact-slope input annotated "1.00".

The gravity-demo outputs come from the solver CLI when it is installed
(reduced resolution; the interface is the file schema, not the size);
without it the test falls back to schema-conforming synthetic files.
"""

import json
import shutil
import subprocess

import numpy as np
import pytest

from plotkit import PanelSpec, load_trajectory, render_convergence, render_panels

from conftest import write_convergence_csv, write_trajectory_csv

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def _gravity_demo_dir(tmp_path):
    """Real gravity-demo outputs via the solver CLI, if available."""
    if shutil.which("spme") is None:
        return None
    cfg = tmp_path / "demo.json"
    cfg.write_text(json.dumps({
        "domain": {"d": 2, "extents": [1.0, 1.0], "cells": [16, 16]},
        "law": {"name": "cubic_plus_linear"},
        "operator": {"K": 1.0, "lam": 0.05, "mu": 2.5, "eps": 0.01},
        "noise": {"modes": 4, "scale": 0.1},
        "boundary": {"surface": -0.5},
        "time": {"T": 0.5, "steps": 8, "snapshots": 5},
        "replicas": 2,
        "basis_modes": 8,
        "output": str(tmp_path / "runs"),
    }))
    proc = subprocess.run(
        ["spme", "gravity-demo", "--config", str(cfg)],
        capture_output=True, text=True, timeout=600)
    if proc.returncode != 0:
        raise RuntimeError(f"gravity demo failed: {proc.stderr}")
    (run_dir,) = (tmp_path / "runs").iterdir()
    return run_dir


def _synthetic_demo_dir(tmp_path):
    rng = np.random.default_rng(12)
    times = [0.0, 0.125, 0.25, 0.375, 0.5]
    run_dir = tmp_path / "synthetic"
    run_dir.mkdir()
    for k in (0, 1):
        fields = [rng.random((17, 17)) * t * (1 + k) for t in times]
        write_trajectory_csv(run_dir / f"trajectory-K{k}.csv", times, fields)
    return run_dir


def test_secondary_panel_grid_and_convergence(tmp_path):
    run_dir = _gravity_demo_dir(tmp_path) or _synthetic_demo_dir(tmp_path)
    paths = sorted(run_dir.glob("trajectory-K*.csv"))
    assert len(paths) == 2

    times = load_trajectory(str(paths[0])).times
    assert len(times) >= 4
    picks = [times[round(i * (len(times) - 1) / 3)] for i in range(4)]
    spec = PanelSpec([(str(p), picks) for p in paths],
                     labels=["no gravity", "gravity"])
    out = tmp_path / "panels.png"
    result = render_panels(spec, str(out))
    assert (result.rows, result.cols) == (2, 4)
    assert result.panel_count == 8
    assert out.read_bytes().startswith(PNG_MAGIC)
    print(f"PASS criterion 12a (panel grid): 2x4 panels at {out}")

    csv = write_convergence_csv(tmp_path / "convergence.csv",
                                [1e-2, 5e-3, 2.5e-3],
                                [2e-4, 1e-4, 5e-5], slope=1.0)
    rate_out = tmp_path / "rate.png"
    rate = render_convergence(str(csv), str(rate_out))
    assert rate.annotation == "slope = 1.00"
    assert rate_out.read_bytes().startswith(PNG_MAGIC)
    print("PASS criterion 12b (convergence annotation): 'slope = 1.00'")
