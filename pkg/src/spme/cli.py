"""Configuration-driven command line for all simulations and studies.

One JSON document describes a run; the only flags are --config, --out,
and --seed (the seed flag overrides the config).  Every run writes its
results CSVs next to a manifest that echoes the fully resolved
configuration (including the resolved accretivity shift and a grid
hash), so any output directory reconstructs its run.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass

from . import __version__
from .constitutive import make_law, validate_law
from .experiments import (
    drift_bound_sweep,
    eps_convergence,
    gravity_compare,
    lambda_sweep,
    write_outputs,
)
from .geometry import DiscreteField, build_grid, bump_field
from .noise import default_coefficients, validate_hs
from .porous_operator import (
    BoundaryData,
    OperatorConfig,
    accretivity_probe,
    lipschitz_probe,
    mu_auto,
)
from .robin_laplace import RobinCoefficient, assemble, eigensolve
from .sde_solver import (
    Scheme,
    SimConfig,
    energy_report,
    simulate,
    trajectory_to_csv,
)

__all__ = ["ConfigError", "RunConfig", "parse_config", "run", "main"]

SUBCOMMANDS = (
    "simulate", "eigen", "converge-eps", "converge-lambda", "gravity-demo",
    "validate-law", "probe-accretivity", "probe-lipschitz",
)

_DEFAULTS = {
    "domain": {"d": 1, "extents": 1.0, "cells": 64},
    "alpha": 1.0,
    "law": {"name": "cubic_plus_linear", "params": {}},
    "operator": {"K": 0.0, "lam": 0.5, "mu": "auto", "eps": 0.01},
    "noise": {"modes": 8, "rule": "default", "scale": 1.0},
    "boundary": {"surface": 0.0, "underground": 0.0},
    "time": {"T": 0.25, "steps": 128, "scheme": "implicit_resolvent",
             "snapshots": 9},
    "initial": {"kind": "zero"},
    "basis_modes": 32,
    "replicas": 8,
    "seed": 0,
    "output": "runs",
    "experiment": {},
}


class ConfigError(ValueError):
    pass


def _merged(defaults, given, path=""):
    if isinstance(defaults, dict):
        if not isinstance(given, dict):
            raise ConfigError(f"config field {path or '<root>'} must be an object")
        out = {}
        for key, dval in defaults.items():
            out[key] = _merged(dval, given[key], f"{path}.{key}".lstrip(".")) \
                if key in given else dval
        for key in given:
            if key not in defaults:
                out[key] = given[key]
        return out
    return given


@dataclass
class RunConfig:
    """Normalized configuration; ``data`` round-trips through JSON."""

    data: dict

    def to_json(self) -> str:
        return json.dumps(self.data, indent=2, sort_keys=True)

    def __getitem__(self, key):
        return self.data[key]


def parse_config(text: str) -> RunConfig:
    """Parse and validate a JSON run configuration.

    Syntax errors report line and column; semantic errors name the
    violated model constraint.
    """
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"parse error at line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from None
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a JSON object")
    data = _merged(_DEFAULTS, raw)

    dom = data["domain"]
    if dom["d"] not in (1, 2, 3):
        raise ConfigError(f"domain.d must be 1, 2 or 3, got {dom['d']}")
    law_cfg = data["law"]
    try:
        law = make_law(law_cfg["name"], **law_cfg.get("params", {}))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"law: {exc}") from None
    op = data["operator"]
    if op["K"] != 0 and law.c0 <= 0:
        raise ConfigError(
            "monotonicity assumption violated: the law must be strictly "
            "increasing (c0 > 0) when the gravity coefficient K is nonzero; "
            f"law {law.name!r} declares c0 = {law.c0}"
        )
    if op["lam"] <= 0 or op["eps"] <= 0:
        raise ConfigError("operator.lam and operator.eps must be positive")
    if op["mu"] != "auto" and (not isinstance(op["mu"], (int, float)) or op["mu"] < 0):
        raise ConfigError("operator.mu must be 'auto' or a nonnegative number")
    t = data["time"]
    if t["T"] <= 0 or t["steps"] < 1:
        raise ConfigError("time.T must be positive and time.steps >= 1")
    try:
        scheme = Scheme(t["scheme"])
    except ValueError:
        raise ConfigError(
            f"time.scheme must be one of {[s.value for s in Scheme]}"
        ) from None
    if scheme is Scheme.EXPLICIT_YOSIDA and t["T"] / t["steps"] > op["eps"] / 2:
        raise ConfigError(
            "explicit scheme unstable: time step exceeds eps/2 "
            f"({t['T'] / t['steps']:.3e} > {op['eps'] / 2:.3e})"
        )
    if not isinstance(data["alpha"], (int, float)) or data["alpha"] <= 0:
        raise ConfigError("alpha must be a positive constant")
    return RunConfig(data)


class _Assembled:
    """Everything the subcommands need, built once from a RunConfig."""

    def __init__(self, rc: RunConfig):
        d = rc["domain"]
        self.domain = build_grid(d["d"], d["extents"], d["cells"])
        self.alpha = RobinCoefficient.constant(self.domain, rc["alpha"])
        self.operator = assemble(self.domain, self.alpha)
        self.law = make_law(rc["law"]["name"], **rc["law"].get("params", {}))
        n_basis = min(int(rc["basis_modes"]), self.domain.node_count)
        self.basis = eigensolve(self.operator, n_basis)
        o = rc["operator"]
        self.resolved_mu = (mu_auto(self.law, o["lam"], o["K"])
                            if o["mu"] == "auto" else float(o["mu"]))
        self.op_cfg = OperatorConfig(self.operator, self.law, o["K"],
                                     o["lam"], self.resolved_mu, o["eps"],
                                     self.basis)
        n = rc["noise"]
        modes = min(int(n["modes"]), self.basis.J)
        self.noise = default_coefficients(self.basis, modes, seed=rc["seed"],
                                          scale=n["scale"])
        validate_hs(self.noise)  # admissibility of the truncated series
        b = rc["boundary"]
        self.boundary = BoundaryData(self.domain, b["surface"],
                                     b["underground"], t_max=rc["time"]["T"])
        self.x0 = self._initial(rc)
        t = rc["time"]
        self.sim = SimConfig(self.op_cfg, self.noise, self.boundary, self.x0,
                             T=t["T"], N_t=t["steps"], scheme=Scheme(t["scheme"]),
                             M=rc["replicas"], seed=rc["seed"],
                             snapshots=t["snapshots"])

    def _initial(self, rc):
        init = rc["initial"]
        if init["kind"] == "zero":
            return DiscreteField.zeros(self.domain)
        if init["kind"] == "bump":
            center = init.get("center") or [0.5 * e for e in self.domain.extents]
            radius = init.get("radius", 0.2 * min(self.domain.extents))
            return bump_field(self.domain, center, radius,
                              init.get("amplitude", 0.5))
        if init["kind"] == "eigenmode":
            return self.basis.eigenfield(int(init.get("index", 0)))
        raise ConfigError(f"unknown initial.kind {init['kind']!r}")

    def manifest(self, rc: RunConfig) -> dict:
        return {
            "config": rc.data,
            "resolved_mu": self.resolved_mu,
            "grid_hash": self.domain.grid_hash(),
        }


def _fmt(x) -> str:
    return repr(float(x))


def run(rc: RunConfig, subcommand: str, out_dir: str | None = None,
        seed: int | None = None, timestamp: str | None = None) -> int:
    """Execute one subcommand; returns the process exit status (0 only if
    every assertion of the dispatched study held)."""
    if subcommand not in SUBCOMMANDS:
        raise ConfigError(f"unknown subcommand {subcommand!r}")
    if seed is not None:
        rc = RunConfig({**rc.data, "seed": int(seed)})
    out_dir = rc["output"] if out_dir is None else out_dir
    exp = rc["experiment"]

    if subcommand == "validate-law":
        law = make_law(rc["law"]["name"], **rc["law"].get("params", {}))
        rep = validate_law(law, samples=exp.get("samples", 1000),
                           sample_range=exp.get("range", 10.0),
                           seed=rc["seed"])
        rows = ["inequality,worst_margin,witness"]
        for name, (margin, witness) in rep.margins.items():
            rows.append(f"{name},{margin!r},\"{witness}\"")
        summary = (f"law {law.name}: "
                   + ("all inequalities hold" if rep.passed
                      else f"violated: {', '.join(rep.failures)}") + "\n")
        write_outputs(out_dir, "validate-law", rc["seed"],
                      {"law_report.csv": "\n".join(rows) + "\n"},
                      {"config": rc.data, "law": law.name}, summary, timestamp)
        return 0 if rep.passed else 1

    asm = _Assembled(rc)
    manifest = asm.manifest(rc)

    if subcommand == "eigen":
        j_want = int(exp.get("modes", asm.basis.J))
        lam = asm.basis.lambdas[:j_want]
        csv = "j,lambda_j\n" + "".join(
            f"{j + 1},{_fmt(lam[j])}\n" for j in range(lam.size))
        summary = f"computed {lam.size} eigenvalues; smallest {_fmt(lam[0])}\n"
        write_outputs(out_dir, "eigen", rc["seed"], {"eigenvalues.csv": csv},
                      manifest, summary, timestamp)
        return 0

    if subcommand == "simulate":
        trajs = [simulate(asm.sim, m, collect_energy=True)
                 for m in range(asm.sim.M)]
        rep = energy_report(trajs, asm.sim)
        csvs = {
            "trajectory.csv": trajectory_to_csv(trajs[0]),
            "energy.csv": rep.to_csv(),
        }
        summary = (f"simulated {asm.sim.M} replica(s), {asm.sim.N_t} steps; "
                   f"dual-energy bound constant {rep.dual_bound_constant!r}\n")
        write_outputs(out_dir, "simulate", rc["seed"], csvs, manifest,
                      summary, timestamp)
        return 0

    if subcommand == "converge-eps":
        ladder = exp.get("ladder", [1e-2, 5e-3, 2.5e-3, 1.25e-3])
        res = eps_convergence(asm.sim, ladder)
        table = drift_bound_sweep(asm.sim, ladder, precomputed=res)
        csvs = {"convergence.csv": res.to_csv(),
                "drift_bound.csv": table.to_csv()}
        ok = res.trend_significant
        summary = (f"eps ladder {list(res.extras['drift_ladder'])}: slope "
                   f"{res.slope:.3f}, trend significant: {ok}, drift-energy "
                   f"max/min {table.max_min_ratio:.3f}\n")
        write_outputs(out_dir, "converge-eps", rc["seed"], csvs, manifest,
                      summary, timestamp)
        return 0 if ok else 1

    if subcommand == "converge-lambda":
        ladder = exp.get("ladder", [0.5, 0.25, 0.125])
        res = lambda_sweep(asm.sim, ladder)
        budget = "lam,law_pair_budget,law_pair_budget_stderr,l2_sup,l2_sup_stderr\n"
        lad = res.extras["budget_ladder"]
        for i in range(lad.size):
            budget += (f"{_fmt(lad[i])},{_fmt(res.extras['law_pair_budget'][i])},"
                       f"{_fmt(res.extras['law_pair_budget_stderr'][i])},"
                       f"{_fmt(res.extras['l2_sup'][i])},"
                       f"{_fmt(res.extras['l2_sup_stderr'][i])}\n")
        ok = res.extras["cauchy_monotone"]
        csvs = {"convergence.csv": res.to_csv(), "budget.csv": budget}
        summary = (f"lambda ladder {list(lad)}: slope {res.slope:.3f}, "
                   f"distances monotone: {ok}\n")
        write_outputs(out_dir, "converge-lambda", rc["seed"], csvs, manifest,
                      summary, timestamp)
        return 0 if ok else 1

    if subcommand == "gravity-demo":
        k_values = tuple(exp.get("K_values", [0.0, 1.0]))
        rep = gravity_compare(asm.sim, k_values)
        csvs = {
            "gravity_zbar.csv": rep.to_csv(),
            "gravity_summary.csv": rep.summary_csv(),
        }
        for K, traj in rep.trajectories.items():
            csvs[f"trajectory-K{K:g}.csv"] = trajectory_to_csv(traj)
        ok = rep.depth_shift > 2.0 * rep.shift_stderr and (
            rep.control_drift is None or rep.control_drift <= 1e-6)
        summary = (f"depth shift {rep.depth_shift!r} +- {rep.shift_stderr!r} "
                   f"(control drift {rep.control_drift!r}); "
                   f"gravity pulls deeper: {rep.depth_shift > 0}\n")
        write_outputs(out_dir, "gravity-demo", rc["seed"], csvs, manifest,
                      summary, timestamp)
        return 0 if ok else 1

    if subcommand == "probe-accretivity":
        trials = int(exp.get("trials", 1000))
        rep = accretivity_probe(asm.op_cfg, trials, rc["seed"])
        ok = rep.summary["frac_nonneg"] == 1.0
        summary = (f"accretivity probe ({trials} trials): min Q "
                   f"{rep.summary['min_q']!r}, min margin "
                   f"{rep.summary['min_margin']!r}\n")
        write_outputs(out_dir, "probe-accretivity", rc["seed"],
                      {"probe.csv": rep.to_csv()},
                      {**manifest, "probe": rep.metadata}, summary, timestamp)
        return 0 if ok else 1

    if subcommand == "probe-lipschitz":
        trials = int(exp.get("trials", 500))
        rep = lipschitz_probe(asm.op_cfg, trials, rc["seed"])
        ok = (rep.summary["max_ratio_l2"] <= rep.summary["bound"] + 1e-9
              and rep.summary["max_ratio_dual"] <= 1.0 + 1e-9)
        summary = (f"contraction probe ({trials} trials): max L2 ratio "
                   f"{rep.summary['max_ratio_l2']!r} vs bound "
                   f"{rep.summary['bound']!r}; max dual ratio "
                   f"{rep.summary['max_ratio_dual']!r}\n")
        write_outputs(out_dir, "probe-lipschitz", rc["seed"],
                      {"probe.csv": rep.to_csv()},
                      {**manifest, "probe": rep.metadata}, summary, timestamp)
        return 0 if ok else 1

    raise ConfigError(f"unhandled subcommand {subcommand!r}")  # pragma: no cover


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="spme",
        description="Stochastic porous-media equation laboratory",
    )
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", required=True, help="JSON config path")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    parser.add_argument("--version", action="version", version=__version__)
    args = parser.parse_args(argv)

    try:
        with open(args.config) as fh:
            rc = parse_config(fh.read())
        return run(rc, args.subcommand, out_dir=args.out, seed=args.seed)
    except (ConfigError, ValueError, OSError) as exc:
        record = {"error": type(exc).__name__, "message": str(exc),
                  "subcommand": args.subcommand}
        print(json.dumps(record), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
