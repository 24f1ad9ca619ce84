"""Semi-implicit Euler-Maruyama integration of the regularized SPDE.

One step of the implicit-resolvent scheme advances

    X_{n+1} = R_dt( X_n + mu*dt*X_n - dt*f_lift(t_n) + noise(X_n, dW_n) ),

where R_dt = (I + dt*(mu I + drift_lam))^{-1} is the vector resolvent
with the time step playing the role of the Yosida parameter, and f_lift
is the dual representative of the boundary forcing.  The explicit-Yosida
scheme keeps a fixed Yosida parameter eps in the drift,

    X_{n+1} = X_n - dt*yosida_drift(X_n; eps) + mu*dt*X_n
              - dt*f_lift(t_n) + noise(X_n, dW_n),

and is stable for dt <= eps/2 (the drift is (1/eps)-Lipschitz).  Noise
increments are drawn from counter-based streams keyed by (seed, replica,
step), so trajectories are reproducible and replicas independent of
scheduling order.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .constitutive import shifted_yosida_scalar, yosida_scalar
from .geometry import DiscreteField, quad_volume
from .noise import NoiseModel, RngKey, apply_noise, sample_increment
from .porous_operator import (
    BoundaryData,
    OperatorConfig,
    forcing_lift,
    resolvent_field,
    yosida_drift,
)

__all__ = [
    "Scheme",
    "SimConfig",
    "Trajectory",
    "EnergyReport",
    "step",
    "simulate",
    "simulate_ensemble",
    "energy_report",
    "trajectory_to_csv",
]


class Scheme(Enum):
    IMPLICIT_RESOLVENT = "implicit_resolvent"
    EXPLICIT_YOSIDA = "explicit_yosida"


@dataclass
class SimConfig:
    """Full description of one stochastic integration run."""

    op_cfg: OperatorConfig
    noise: NoiseModel | None
    boundary: BoundaryData | None
    x0: DiscreteField
    T: float
    N_t: int
    scheme: Scheme = Scheme.IMPLICIT_RESOLVENT
    M: int = 1
    seed: int = 0
    snapshots: int = 9

    def __post_init__(self):
        if self.T <= 0 or self.N_t < 1:
            raise ValueError("need T > 0 and N_t >= 1")
        if self.M < 1:
            raise ValueError("need at least one replica")
        if self.scheme is Scheme.EXPLICIT_YOSIDA and self.dt > self.op_cfg.eps / 2:
            raise ValueError(
                f"explicit scheme unstable: dt = {self.dt:.3e} exceeds "
                f"eps/2 = {self.op_cfg.eps / 2:.3e}"
            )
        if self.boundary is not None and self.boundary.t_max < self.T:
            raise ValueError("boundary data does not cover the horizon")

    @property
    def dt(self) -> float:
        return self.T / self.N_t

    def checkpoint_steps(self) -> np.ndarray:
        k = min(self.snapshots, self.N_t + 1)
        return np.unique(np.round(np.linspace(0, self.N_t, k)).astype(int))


@dataclass
class Trajectory:
    """Snapshots plus per-step solver diagnostics for one replica."""

    times: np.ndarray
    fields: list  # DiscreteField per checkpoint
    replica: int
    diagnostics: dict = field(default_factory=dict)
    energy: dict = field(default_factory=dict)  # per-checkpoint scalar series

    @property
    def final(self) -> DiscreteField:
        return self.fields[-1]


def step(cfg: SimConfig, X_n: DiscreteField, n: int, key: RngKey,
         info: dict | None = None) -> DiscreteField:
    """Advance one time step from X_n at step index n using stream ``key``."""
    dt = cfg.dt
    op_cfg = cfg.op_cfg
    t_n = n * dt
    arg = X_n.values.copy()
    if op_cfg.mu != 0.0:
        arg += op_cfg.mu * dt * X_n.values
    if cfg.boundary is not None:
        arg -= dt * forcing_lift(cfg.boundary, t_n)
    if cfg.noise is not None and cfg.noise.J_noise > 0:
        dw = sample_increment(cfg.noise, dt, key)
        arg += apply_noise(cfg.noise, X_n, dw).values

    arg_field = DiscreteField(op_cfg.domain, arg)
    if cfg.scheme is Scheme.IMPLICIT_RESOLVENT:
        return resolvent_field(op_cfg, arg_field, eps=dt, info=info)
    if dt > op_cfg.eps / 2:
        raise ValueError("explicit scheme requires dt <= eps/2")
    drift = yosida_drift(op_cfg, X_n, info=info)
    if info is not None:
        info["drift_dual_sq"] = op_cfg.op.dual_norm_sq(drift.values)
    return DiscreteField(op_cfg.domain, arg - dt * drift.values)


def _energy_sample(cfg: SimConfig, X: DiscreteField, eps_eff: float) -> dict:
    """Pointwise energy observables at one checkpoint."""
    op_cfg = cfg.op_cfg
    op = op_cfg.op
    x = X.values
    yosida_vals = yosida_scalar(op_cfg.law, op_cfg.lam, x)
    j = resolvent_field(op_cfg, X, eps=eps_eff)
    gap = x - j.values
    surrogate_j = shifted_yosida_scalar(op_cfg.law, op_cfg.lam, j.values)
    w = op_cfg.domain.volume_weights
    # <drift_lam(J), J> pairing in the primal/dual duality
    pair = float(surrogate_j @ (op.matrix @ j.values))
    if op_cfg.K != 0.0:
        pair -= op_cfg.K * float((w * j.values) @ (op_cfg.grad_z @ j.values))
    return {
        "dual_sq": op.dual_norm_sq(x),
        "l2_sq": op.mass_inner(x, x),
        "law_pair": float(w @ (yosida_vals * x)),
        "resolvent_dual_sq": op.dual_norm_sq(j.values),
        "gap_dual_sq": op.dual_norm_sq(gap),
        "resolvent_l2_sq": op.mass_inner(j.values, j.values),
        "drift_pair": pair,
        "mass": quad_volume(X),
    }


def simulate(cfg: SimConfig, replica: int = 0,
             collect_energy: bool = True) -> Trajectory:
    """Integrate one replica; deterministic given (config, seed, replica)."""
    dt = cfg.dt
    checkpoints = cfg.checkpoint_steps()
    eps_eff = dt if cfg.scheme is Scheme.IMPLICIT_RESOLVENT else cfg.op_cfg.eps

    X = cfg.x0.copy()
    times = [0.0]
    fields = [X.copy()]
    energy_rows = [_energy_sample(cfg, X, eps_eff)] if collect_energy else []
    iters, residuals = [], []
    drift_energy = 0.0

    key = RngKey(cfg.seed, replica=replica, step=0)
    next_cp = 1
    for n in range(cfg.N_t):
        info: dict = {}
        try:
            X = step(cfg, X, n, key, info=info)
        except Exception as exc:
            raise RuntimeError(f"step {n} (t={n * dt:.6g}) failed: {exc}") from exc
        key = key.next_step()
        iters.append(info.get("iterations", 0))
        residuals.append(info.get("residual", np.nan))
        if "drift_dual_sq" in info:
            drift_energy += dt * info["drift_dual_sq"]
        if next_cp < checkpoints.size and n + 1 == checkpoints[next_cp]:
            times.append((n + 1) * dt)
            fields.append(X.copy())
            if collect_energy:
                energy_rows.append(_energy_sample(cfg, X, eps_eff))
            next_cp += 1

    energy = {}
    if collect_energy:
        keys = energy_rows[0].keys()
        series = {k: np.array([row[k] for row in energy_rows]) for k in keys}
        t_arr = np.asarray(times)
        mu = cfg.op_cfg.mu
        # running dual-energy budget: |X|_dual^2 + 2 int (mu|J|^2 + gap^2/eps)
        integrand = (mu * series["resolvent_dual_sq"]
                     + series["gap_dual_sq"] / eps_eff)
        series["dual_budget"] = series["dual_sq"] + 2.0 * _cumtrapz(integrand, t_arr)
        # running L2 budget: |X|_2^2 + 2 int (mu|J|_2^2 + <drift(J), J>)
        integrand = mu * series["resolvent_l2_sq"] + series["drift_pair"]
        series["l2_budget"] = series["l2_sq"] + 2.0 * _cumtrapz(integrand, t_arr)
        energy = series

    diag = {
        "iterations": np.asarray(iters),
        "residuals": np.asarray(residuals),
        "drift_energy": drift_energy,
    }
    return Trajectory(np.asarray(times), fields, replica, diag, energy)


def simulate_ensemble(cfg: SimConfig, collect_energy: bool = False) -> list:
    """All M replicas in a fixed order (replica index keys the noise)."""
    return [simulate(cfg, m, collect_energy) for m in range(cfg.M)]


def _cumtrapz(y: np.ndarray, t: np.ndarray) -> np.ndarray:
    out = np.zeros_like(y)
    out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(t))
    return out


@dataclass
class EnergyReport:
    """Monte-Carlo means and standard errors of the tracked energies."""

    times: np.ndarray
    means: dict
    stderrs: dict
    replicas: int
    dual_bound_constant: float  # fitted C with E|X|_dual^2 <= C (1 + |x0|_dual^2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        keys = sorted(self.means)
        buf.write("t," + ",".join(
            [f"{k}_mean,{k}_stderr" for k in keys]) + "\n")
        for i, t in enumerate(self.times):
            row = [repr(float(t))]
            for k in keys:
                row.append(repr(float(self.means[k][i])))
                row.append(repr(float(self.stderrs[k][i])))
            buf.write(",".join(row) + "\n")
        return buf.getvalue()


def energy_report(trajectories: list, cfg: SimConfig) -> EnergyReport:
    """Aggregate per-checkpoint energies across replica trajectories."""
    if not trajectories:
        raise ValueError("need at least one trajectory")
    if any(not t.energy for t in trajectories):
        raise ValueError("trajectories were run without energy collection")
    times = trajectories[0].times
    keys = trajectories[0].energy.keys()
    m = len(trajectories)
    means, stderrs = {}, {}
    for k in keys:
        stack = np.stack([t.energy[k] for t in trajectories])
        means[k] = stack.mean(axis=0)
        # center on the first replica: identical replicas give exactly zero
        stderrs[k] = ((stack - stack[:1]).std(axis=0, ddof=1) / np.sqrt(m)
                      if m > 1 else np.zeros(stack.shape[1]))
    x0_dual_sq = cfg.op_cfg.op.dual_norm_sq(cfg.x0.values)
    c_fit = float(np.max(means["dual_sq"]) / (1.0 + x0_dual_sq))
    return EnergyReport(times, means, stderrs, m, c_fit)


def trajectory_to_csv(traj: Trajectory) -> str:
    """Long-format snapshot table: t, lattice index per axis, value."""
    domain = traj.fields[0].domain
    shape = domain.shape
    idx = np.unravel_index(np.arange(domain.node_count), shape)
    headers = ["t"] + [f"i{k}" for k in range(domain.d)] + ["value"]
    buf = io.StringIO()
    buf.write(",".join(headers) + "\n")
    for t, f in zip(traj.times, traj.fields):
        vals = f.values
        t_str = repr(float(t))
        for p in range(domain.node_count):
            coords = ",".join(str(int(idx[k][p])) for k in range(domain.d))
            buf.write(f"{t_str},{coords},{float(vals[p])!r}\n")
    return buf.getvalue()
