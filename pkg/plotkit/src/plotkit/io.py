"""Readers for the versioned simulation CSV schemas.

Trajectory files are long-format tables ``t,i0[,i1[,i2]],value`` holding
one row per node per snapshot; convergence files carry one row per
ladder rung with a repeated fitted-slope column.  A ``manifest.json``
sitting next to a file is consulted for its schema version when present.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass

import numpy as np

__all__ = ["SchemaError", "Trajectory", "ConvergenceTable",
           "load_trajectory", "load_convergence"]

SUPPORTED_SCHEMA = 1


class SchemaError(ValueError):
    pass


def _check_manifest(path: str):
    manifest_path = os.path.join(os.path.dirname(os.path.abspath(path)),
                                 "manifest.json")
    if os.path.exists(manifest_path):
        with open(manifest_path) as fh:
            manifest = json.load(fh)
        version = manifest.get("schema_version")
        if version is not None and version != SUPPORTED_SCHEMA:
            raise SchemaError(
                f"{path}: schema version {version} unsupported "
                f"(expected {SUPPORTED_SCHEMA})"
            )


@dataclass
class Trajectory:
    """Snapshots of one run: time -> nodal array shaped like the grid."""

    times: list
    snapshots: dict  # time -> ndarray (1d or 2d)
    ndim: int

    def at(self, t: float, atol: float = 1e-12) -> np.ndarray:
        for known in self.times:
            if abs(known - t) <= atol * max(1.0, abs(t)):
                return self.snapshots[known]
        raise KeyError(
            f"snapshot t={t} not in trajectory (times: {self.times})"
        )


def load_trajectory(path: str) -> Trajectory:
    """Parse a long-format trajectory CSV into per-time arrays."""
    _check_manifest(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        index_cols = [h for h in header[1:-1]]
        if (header[0] != "t" or header[-1] != "value" or not index_cols
                or any(h != f"i{k}" for k, h in enumerate(index_cols))):
            raise SchemaError(
                f"{path}: expected header t,i0[,i1[,i2]],value, got {header}"
            )
        ndim = len(index_cols)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise SchemaError(f"{path}:{lineno}: wrong column count")
            rows.append((float(row[0]),
                         tuple(int(c) for c in row[1:-1]),
                         float(row[-1])))
    if not rows:
        raise SchemaError(f"{path}: no data rows")

    shape = tuple(
        max(idx[k] for _, idx, _ in rows) + 1 for k in range(ndim)
    )
    times = []
    snapshots = {}
    for t, idx, value in rows:
        if t not in snapshots:
            snapshots[t] = np.full(shape, np.nan)
            times.append(t)
        snapshots[t][idx] = value
    for t, arr in snapshots.items():
        if np.any(np.isnan(arr)):
            raise SchemaError(f"{path}: snapshot t={t} has missing nodes")
    return Trajectory(times, snapshots, ndim)


@dataclass
class ConvergenceTable:
    parameter: str
    values: np.ndarray
    errors: np.ndarray
    stderr: np.ndarray | None
    slope: float


def load_convergence(path: str) -> ConvergenceTable:
    """Parse a convergence CSV (parameter, error column, optional stderr,
    repeated slope column)."""
    _check_manifest(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        rows = [row for row in reader if row]
    if "slope" not in header:
        raise SchemaError(f"{path}: no slope column in {header}")
    cols = {name: i for i, name in enumerate(header)}
    err_col = next(
        (c for c in ("dist_sq_T", "error", "dist_sq") if c in cols), None)
    if err_col is None:
        raise SchemaError(f"{path}: no error column in {header}")
    se_col = next(
        (c for c in ("stderr_T", "stderr") if c in cols), None)

    values = np.array([float(r[0]) for r in rows])
    errors = np.array([float(r[cols[err_col]]) for r in rows])
    stderr = (np.array([float(r[cols[se_col]]) for r in rows])
              if se_col is not None else None)
    slopes = {r[cols["slope"]] for r in rows}
    if len(slopes) != 1:
        raise SchemaError(f"{path}: inconsistent slope column {slopes}")
    return ConvergenceTable(header[0], values, errors, stderr,
                            float(slopes.pop()))
