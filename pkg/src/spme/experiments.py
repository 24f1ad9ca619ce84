"""Scripted studies: regularization-parameter convergence, drift-energy
boundedness, the gravity comparison, and the accretivity threshold scan.

Every sweep couples its rungs through shared noise: increments are keyed
by (seed, replica, step), so two runs that differ only in a
regularization parameter see the same Brownian path and their distance
isolates the parameter effect.  All Monte-Carlo outputs carry standard
errors, and a trend only counts as significant when it exceeds twice the
combined standard error.
"""

from __future__ import annotations

import io
import json
import os
from dataclasses import dataclass, replace as dc_replace
from datetime import datetime

import numpy as np
from scipy.linalg import eigh

from . import __version__
from .constitutive import make_law
from .geometry import DiscreteField, bump_field, depth_coordinate, quad_volume
from .porous_operator import OperatorConfig, accretivity_probe, apply_drift
from .sde_solver import Scheme, SimConfig, simulate

__all__ = [
    "ConvergenceResult",
    "DriftBoundTable",
    "GravityReport",
    "ThresholdScan",
    "eps_convergence",
    "drift_bound_sweep",
    "lambda_sweep",
    "gravity_compare",
    "accretivity_threshold_scan",
    "center_of_depth",
    "write_outputs",
]


def _trend_significant(hi_mean, hi_se, lo_mean, lo_se) -> bool:
    return (hi_mean - lo_mean) > 2.0 * float(np.hypot(hi_se, lo_se))


def _loglog_slope(x, y) -> float:
    if np.size(x) < 2:
        return float("nan")
    return float(np.polyfit(np.log(x), np.log(np.maximum(y, 1e-300)), 1)[0])


def _mean_stderr(stack: np.ndarray):
    m = stack.shape[0]
    mean = stack.mean(axis=0)
    # center on the first replica: identical replicas give exactly zero
    se = ((stack - stack[:1]).std(axis=0, ddof=1) / np.sqrt(m)
          if m > 1 else np.zeros_like(mean))
    return mean, se


@dataclass
class ConvergenceResult:
    """Distances between neighbouring rungs of a parameter ladder.

    ``ladder`` is strictly decreasing; row i compares the runs at
    ``ladder[i]`` and ``ladder[i+1]`` (squared dual-norm distance at the
    final time, and the max over the snapshot checkpoints, which lower
    bounds the sup over time).
    """

    parameter: str
    ladder: np.ndarray
    dist_sq: np.ndarray
    stderr: np.ndarray
    dist_sq_max: np.ndarray
    stderr_max: np.ndarray
    slope: float
    trend_significant: bool
    extras: dict

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"{self.parameter},dist_sq_T,stderr_T,dist_sq_max,"
                  "stderr_max,slope\n")
        for i in range(self.dist_sq.size):
            buf.write(
                f"{float(self.ladder[i])!r},{float(self.dist_sq[i])!r},"
                f"{float(self.stderr[i])!r},{float(self.dist_sq_max[i])!r},"
                f"{float(self.stderr_max[i])!r},{float(self.slope)!r}\n"
            )
        return buf.getvalue()


@dataclass
class DriftBoundTable:
    """Time-integrated squared dual norm of the Yosida drift per rung."""

    ladder: np.ndarray
    energy: np.ndarray
    stderr: np.ndarray
    max_min_ratio: float

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("eps,drift_energy,stderr,ratio_to_min\n")
        emin = self.energy.min()
        for i in range(self.ladder.size):
            ratio = self.energy[i] / emin if emin > 0 else 1.0
            buf.write(
                f"{float(self.ladder[i])!r},{float(self.energy[i])!r},"
                f"{float(self.stderr[i])!r},{float(ratio)!r}\n"
            )
        return buf.getvalue()


def _replace_op(base: SimConfig, op_cfg: OperatorConfig, **kw) -> SimConfig:
    return dc_replace(base, op_cfg=op_cfg, **kw)


def _run_eps_ladder(base: SimConfig, ladder) -> dict:
    """Shared runner: for each replica, integrate every rung with the same
    noise stream and collect checkpoint fields plus drift energies."""
    ladder = np.asarray(sorted(ladder, reverse=True), dtype=float)
    if ladder.size < 2 or np.any(np.diff(ladder) >= 0):
        raise ValueError("need a strictly decreasing ladder of >= 2 rungs")
    if base.M < 8:
        raise ValueError("convergence sweeps need at least 8 replicas")
    dt = base.dt
    if dt > ladder.min() / 2:
        raise ValueError(
            f"shared step dt={dt:.3e} violates the explicit stability bound "
            f"for the smallest rung ({ladder.min():.3e})"
        )
    op = base.op_cfg.op
    n_pairs = ladder.size - 1
    dist_T = np.zeros((base.M, n_pairs))
    dist_max = np.zeros((base.M, n_pairs))
    drift_energy = np.zeros((base.M, ladder.size))

    for m in range(base.M):
        snapshots = []
        for r, eps in enumerate(ladder):
            cfg = _replace_op(base, base.op_cfg.with_eps(eps),
                              scheme=Scheme.EXPLICIT_YOSIDA)
            traj = simulate(cfg, replica=m, collect_energy=False)
            snapshots.append(traj.fields)
            drift_energy[m, r] = traj.diagnostics["drift_energy"]
        for i in range(n_pairs):
            diffs = [
                op.dual_norm_sq(a.values - b.values)
                for a, b in zip(snapshots[i], snapshots[i + 1])
            ]
            dist_T[m, i] = diffs[-1]
            dist_max[m, i] = max(diffs)

    mean_T, se_T = _mean_stderr(dist_T)
    mean_max, se_max = _mean_stderr(dist_max)
    e_mean, e_se = _mean_stderr(drift_energy)
    return {
        "ladder": ladder,
        "dist_T": (mean_T, se_T),
        "dist_max": (mean_max, se_max),
        "drift": (e_mean, e_se),
    }


def eps_convergence(base: SimConfig, ladder) -> ConvergenceResult:
    """Distance between runs at neighbouring Yosida steps (eps, eps/2).

    All rungs share the grid, the law regularization, the time grid, and
    the noise stream; only the drift's Yosida parameter differs.  The
    fitted log-log slope of the squared distance against eps measures the
    convergence rate of the vanishing-eps limit.
    """
    data = _run_eps_ladder(base, ladder)
    lad = data["ladder"]
    mean_T, se_T = data["dist_T"]
    mean_max, se_max = data["dist_max"]
    pairs = lad[:-1]
    slope = _loglog_slope(pairs, mean_T)
    trend = _trend_significant(mean_T[0], se_T[0], mean_T[-1], se_T[-1])
    e_mean, e_se = data["drift"]
    extras = {
        "drift_energy": e_mean,
        "drift_energy_stderr": e_se,
        "drift_ladder": lad,
        "slope_max_metric": _loglog_slope(pairs, mean_max),
    }
    return ConvergenceResult("eps", pairs, mean_T, se_T, mean_max, se_max,
                             slope, trend, extras)


def drift_bound_sweep(base: SimConfig, ladder,
                  precomputed: ConvergenceResult | None = None) -> DriftBoundTable:
    """Uniform-in-eps bound on the time-integrated squared dual norm of
    the Yosida drift; the max/min ratio across rungs is the headline."""
    if precomputed is not None and "drift_energy" in precomputed.extras:
        lad = precomputed.extras["drift_ladder"]
        e_mean = precomputed.extras["drift_energy"]
        e_se = precomputed.extras["drift_energy_stderr"]
    else:
        data = _run_eps_ladder(base, ladder)
        lad = data["ladder"]
        e_mean, e_se = data["drift"]
    ratio = (float(e_mean.max() / e_mean.min()) if e_mean.min() > 0
             else (1.0 if e_mean.max() == 0 else float("inf")))
    return DriftBoundTable(lad, e_mean, e_se, ratio)


def lambda_sweep(base: SimConfig, ladder) -> ConvergenceResult:
    """Distance between runs at neighbouring law regularizations, plus
    boundedness of the coercivity budget terms uniformly in lambda.

    Rungs share noise and the time grid; the implicit scheme keeps the
    effective drift step equal to dt for every rung.
    """
    ladder = np.asarray(sorted(ladder, reverse=True), dtype=float)
    if ladder.size < 2 or np.any(np.diff(ladder) >= 0):
        raise ValueError("need a strictly decreasing ladder of >= 2 rungs")
    if base.M < 8:
        raise ValueError("convergence sweeps need at least 8 replicas")
    op = base.op_cfg.op
    o = base.op_cfg
    n_pairs = ladder.size - 1
    dist_T = np.zeros((base.M, n_pairs))
    dist_max = np.zeros((base.M, n_pairs))
    law_pair_budget = np.zeros((base.M, ladder.size))
    l2_sup = np.zeros((base.M, ladder.size))

    for m in range(base.M):
        snapshots = []
        for r, lam in enumerate(ladder):
            op_cfg = OperatorConfig(o.op, o.law, o.K, lam, o.mu, o.eps, o.basis)
            cfg = _replace_op(base, op_cfg, scheme=Scheme.IMPLICIT_RESOLVENT)
            traj = simulate(cfg, replica=m, collect_energy=True)
            snapshots.append(traj.fields)
            law_pair_budget[m, r] = float(
                np.trapezoid(traj.energy["law_pair"], traj.times)
            )
            l2_sup[m, r] = float(np.max(traj.energy["l2_sq"]))
        for i in range(n_pairs):
            diffs = [
                op.dual_norm_sq(a.values - b.values)
                for a, b in zip(snapshots[i], snapshots[i + 1])
            ]
            dist_T[m, i] = diffs[-1]
            dist_max[m, i] = max(diffs)

    mean_T, se_T = _mean_stderr(dist_T)
    mean_max, se_max = _mean_stderr(dist_max)
    pairs = ladder[:-1]
    slope = _loglog_slope(pairs, mean_T)
    trend = _trend_significant(mean_T[0], se_T[0], mean_T[-1], se_T[-1])
    pb_mean, pb_se = _mean_stderr(law_pair_budget)
    l2_mean, l2_se = _mean_stderr(l2_sup)
    extras = {
        "law_pair_budget": pb_mean, "law_pair_budget_stderr": pb_se,
        "l2_sup": l2_mean, "l2_sup_stderr": l2_se,
        "budget_ladder": ladder,
        "cauchy_monotone": bool(np.all(np.diff(mean_T) <= 0)),
    }
    return ConvergenceResult("lam", pairs, mean_T, se_T, mean_max, se_max,
                             slope, trend, extras)


# ── Gravity comparison ───────────────────────────────────────────────────


def center_of_depth(X: DiscreteField) -> float:
    """Moisture-weighted mean depth  int X*z / int X  (guarding zero mass)."""
    mass = quad_volume(X)
    if abs(mass) <= 1e-14:
        raise ValueError("total moisture mass is numerically zero")
    return quad_volume(X * depth_coordinate(X.domain)) / mass


def _center_or_nan(X: DiscreteField) -> float:
    try:
        return center_of_depth(X)
    except ValueError:
        return float("nan")


@dataclass
class GravityReport:
    """Depth center-of-mass trajectories with and without gravity."""

    K_values: tuple
    times: np.ndarray
    zbar_mean: dict  # K -> per-checkpoint means
    zbar_stderr: dict
    depth_shift: float
    shift_stderr: float
    control_drift: float | None
    trajectories: dict = None  # K -> replica-0 Trajectory

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("K,t,zbar_mean,zbar_stderr\n")
        for k in self.K_values:
            for i, t in enumerate(self.times):
                buf.write(f"{float(k)!r},{float(t)!r},"
                          f"{float(self.zbar_mean[k][i])!r},"
                          f"{float(self.zbar_stderr[k][i])!r}\n")
        return buf.getvalue()

    def summary_csv(self) -> str:
        control = (float(self.control_drift)
                   if self.control_drift is not None else None)
        return ("depth_shift,shift_stderr,control_drift\n"
                f"{float(self.depth_shift)!r},{float(self.shift_stderr)!r},"
                f"{control!r}\n")


def _symmetry_control(base: SimConfig) -> float:
    """Depth drift of a no-forcing, zero-noise, centered-bump run with
    K = 0: any drift exposes an asymmetry of the discretization.

    The degenerate cubic law with a tiny regularization keeps the bump
    compactly supported away from the (asymmetric) boundary conditions.
    """
    o = base.op_cfg
    domain = o.domain
    law = make_law("cubic")
    op_cfg = OperatorConfig(o.op, law, K=0.0, lam=1e-3, mu=0.0, eps=o.eps,
                            basis=o.basis)
    center = [0.5 * e for e in domain.extents]
    radius = 0.2 * min(domain.extents)
    x0 = bump_field(domain, center, radius, amplitude=0.3)
    cfg = SimConfig(op_cfg, None, None, x0, T=0.25, N_t=16,
                    scheme=Scheme.IMPLICIT_RESOLVENT, M=1, seed=base.seed,
                    snapshots=2)
    traj = simulate(cfg, collect_energy=False)
    return abs(center_of_depth(traj.final) - center_of_depth(traj.fields[0]))


def gravity_compare(base: SimConfig, K_values=(0.0, 1.0),
                    run_control: bool = True) -> GravityReport:
    """Identical runs at each gravity coefficient, coupled through shared
    noise; reports the depth shift of the center of mass at the horizon.

    Positive shift means the gravity run ends deeper, the qualitative
    infiltration signature.
    """
    K_values = tuple(float(k) for k in K_values)
    o = base.op_cfg
    zbars = {}  # K -> (M, n_checkpoints)
    trajectories = {}
    times = None
    for K in K_values:
        op_cfg = OperatorConfig(o.op, o.law, K, o.lam, o.mu, o.eps, o.basis)
        cfg = _replace_op(base, op_cfg)
        rows = []
        for m in range(base.M):
            traj = simulate(cfg, replica=m, collect_energy=False)
            rows.append([_center_or_nan(f) for f in traj.fields])
            times = traj.times
            if m == 0:
                trajectories[K] = traj
        zbars[K] = np.asarray(rows)

    zbar_mean, zbar_se = {}, {}
    import warnings as _warnings

    for K in K_values:
        stack = zbars[K]
        m = stack.shape[0]
        with _warnings.catch_warnings():
            _warnings.simplefilter("ignore", RuntimeWarning)  # all-NaN columns
            zbar_mean[K] = np.nanmean(stack, axis=0)
            zbar_se[K] = (np.nanstd(stack, axis=0, ddof=1) / np.sqrt(m)
                          if m > 1 else np.zeros(stack.shape[1]))

    k_hi, k_lo = max(K_values), min(K_values)
    per_replica_shift = zbars[k_hi][:, -1] - zbars[k_lo][:, -1]
    shift_mean, shift_se = _mean_stderr(per_replica_shift[:, None])
    control = _symmetry_control(base) if run_control else None
    return GravityReport(K_values, times, zbar_mean, zbar_se,
                         float(shift_mean[0]), float(shift_se[0]), control,
                         trajectories)


# ── Accretivity threshold scan ───────────────────────────────────────────


@dataclass
class ThresholdScan:
    """Shifted-monotonicity margins across a grid of shift values."""

    mu_grid: np.ndarray
    min_q_random: np.ndarray
    min_q_constructed: np.ndarray
    threshold_estimate: float
    young_threshold: float

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("mu,min_q_random,min_q_constructed\n")
        for i in range(self.mu_grid.size):
            buf.write(f"{float(self.mu_grid[i])!r},"
                      f"{float(self.min_q_random[i])!r},"
                      f"{float(self.min_q_constructed[i])!r}\n")
        return buf.getvalue()


def _linearized_form(cfg: OperatorConfig):
    """Dense symmetric matrix of the small-amplitude shifted-monotonicity
    form on the span of the computed modes; its smallest eigenvalue is
    negative exactly when some direction defeats the shift."""
    basis = cfg.basis
    op = cfg.op
    w = cfg.domain.volume_weights
    J = basis.J
    slope0 = float(cfg.law.deriv(np.zeros(1))[0])
    transport = np.zeros((J, J))
    for j in range(J):
        dphi = cfg.grad_z @ (basis.modes[:, j] / basis.lambdas[j])
        transport[:, j] = basis.modes.T @ (w * dphi)
    sym = 0.5 * (transport + transport.T)
    return slope0 * np.eye(J) - cfg.K * sym, np.diag(1.0 / basis.lambdas)


def accretivity_threshold_scan(cfg: OperatorConfig, mu_grid,
                               trials: int = 200, seed: int = 0) -> ThresholdScan:
    """Locate the smallest shift restoring monotonicity of the drift.

    Combines random-pair probes with a constructed worst direction from
    the linearized form, and bisects the linearized threshold for
    comparison with the Young-inequality value K^2/(4 c0).
    """
    if cfg.law.c0 <= 0 or cfg.K == 0:
        raise ValueError("the scan needs gravity (K != 0) and c0 > 0")
    mu_grid = np.asarray(sorted(mu_grid), dtype=float)
    base_form, dual_form = _linearized_form(cfg)

    def min_eig(mu):
        return float(eigh(base_form + mu * dual_form,
                          eigvals_only=True, subset_by_index=[0, 0])[0])

    min_q_rand = np.zeros(mu_grid.size)
    min_q_con = np.zeros(mu_grid.size)
    basis = cfg.basis
    for i, mu in enumerate(mu_grid):
        probe_cfg = OperatorConfig(cfg.op, cfg.law, cfg.K, cfg.lam, mu,
                                   cfg.eps, basis)
        rep = accretivity_probe(probe_cfg, trials, seed)
        min_q_rand[i] = rep.summary["min_q"]
        vals, vecs = eigh(base_form + mu * dual_form, subset_by_index=[0, 0])
        delta = basis.modes @ vecs[:, 0]
        amp = 1e-3
        x = DiscreteField(cfg.domain, amp * delta, validate=False)
        y = DiscreteField.zeros(cfg.domain)
        op = cfg.op
        d = x.values - y.values
        phi = op.poisson_solve(d)
        dd = apply_drift(probe_cfg, x.values, regularized=False) - \
            apply_drift(probe_cfg, y.values, regularized=False)
        w = cfg.domain.volume_weights
        min_q_con[i] = float((w * (mu * d + dd)) @ phi)

    lo, hi = mu_grid[0], mu_grid[-1]
    if min_eig(lo) > 0:
        threshold = lo
    elif min_eig(hi) < 0:
        threshold = np.inf
    else:
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if min_eig(mid) < 0:
                lo = mid
            else:
                hi = mid
        threshold = 0.5 * (lo + hi)
    young = cfg.K**2 / (4.0 * cfg.law.c0)
    return ThresholdScan(mu_grid, min_q_rand, min_q_con, float(threshold), young)


# ── Output writing ───────────────────────────────────────────────────────


def write_outputs(out_dir: str, experiment: str, seed: int, csv_map: dict,
                  manifest: dict, summary: str,
                  timestamp: str | None = None) -> str:
    """Write the experiment's CSVs, manifest, and summary into
    ``out_dir/{experiment}-{seed}-{timestamp}/``; returns the run dir."""
    if timestamp is None:
        timestamp = datetime.now().strftime("%Y%m%dT%H%M%S")
    run_dir = os.path.join(out_dir, f"{experiment}-{seed}-{timestamp}")
    os.makedirs(run_dir, exist_ok=True)
    for name, text in csv_map.items():
        with open(os.path.join(run_dir, name), "w", newline="") as fh:
            fh.write(text)
    manifest = dict(manifest)
    manifest.setdefault("schema_version", 1)
    manifest.setdefault("package_version", __version__)
    manifest.setdefault("experiment", experiment)
    manifest.setdefault("seed", seed)
    with open(os.path.join(run_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(run_dir, "summary.txt"), "w") as fh:
        fh.write(summary)
    return run_dir
