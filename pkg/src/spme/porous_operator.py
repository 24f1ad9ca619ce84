"""The nonlinear porous-media drift operator, its resolvents, and probes.

The drift acts on a nodal moisture field x through the weak form

    <A(x), phi> = int grad(law(x)).grad(phi) - K x dphi/dz dxi
                  + int_{Gamma_u} alpha law(x) phi dsigma,

which after the Green identity pairs against eigenmodes as

    <A(x), e_j>_dual = int ( law(x) e_j - K x dphi_j/dz ) dxi,
    phi_j = e_j / lambda_j.

Nodally (through the L2 pivot) the operator is

    A(x) = Linv(law(x)) + T x,     Linv = W^{-1} (S + B),
    T    = -K W^{-1} D_z^T W,

with D_z the centered depth-difference matrix: only the test function is
ever differentiated, so no upwinding enters.  The regularized drift
replaces the law by its shifted Yosida surrogate.  The resolvent
(I + eps*(mu I + A_lam))^{-1} is solved by damped Newton on the
substituted variable y = shifted_yosida(x), where the diffusion becomes
linear, with a Picard fallback.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.linalg import solve_banded

from .constitutive import (
    ConstitutiveLaw,
    shifted_yosida_derivative,
    shifted_yosida_inverse,
    shifted_yosida_scalar,
)
from .geometry import BoundaryTag, DiscreteField, GridDomain
from .robin_laplace import RobinOperator, RobinSpectralBasis

__all__ = [
    "OperatorConfig",
    "BoundaryData",
    "ProbeReport",
    "SolverError",
    "mu_auto",
    "centered_gradient",
    "apply_drift",
    "drift_mode_pairing",
    "assemble_forcing",
    "forcing_lift",
    "resolvent_field",
    "yosida_drift",
    "sample_dual_field",
    "accretivity_probe",
    "lipschitz_probe",
]

_NEWTON_MAX_ITER = 60
_NEWTON_RTOL = 1e-10  # dual-norm residual, relative to |g|; spec asks 1e-9
_PICARD_MAX_ITER = 200_000


class SolverError(RuntimeError):
    pass


def mu_auto(law: ConstitutiveLaw, lam: float, K: float) -> float:
    """Default accretivity shift: large enough for both the resolvent
    contraction estimate ((K^2+1)/lam^3) and the quasi-accretivity
    threshold (K^2 / (4 c0), when the law has a positive modulus)."""
    mu = (K * K + 1.0) / lam**3
    if K != 0.0 and law.c0 > 0.0:
        mu = max(mu, K * K / (4.0 * law.c0))
    return mu


def centered_gradient(domain: GridDomain, axis: int) -> sp.csr_matrix:
    """Centered-difference matrix along ``axis`` (one-sided at the ends)."""
    mats = []
    for j in range(domain.d):
        n, h = domain.shape[j], domain.spacing[j]
        if j == axis:
            main = np.zeros(n)
            lower = np.full(n - 1, -0.5 / h)
            upper = np.full(n - 1, 0.5 / h)
            d1 = sp.diags([lower, main, upper], [-1, 0, 1], format="lil")
            d1[0, 0], d1[0, 1] = -1.0 / h, 1.0 / h
            d1[-1, -2], d1[-1, -1] = -1.0 / h, 1.0 / h
            mats.append(d1.tocsr())
        else:
            mats.append(sp.eye(n, format="csr"))
    out = mats[0]
    for m in mats[1:]:
        out = sp.kron(out, m, format="csr")
    return out


class OperatorConfig:
    """Bundle of the drift operator's ingredients and regularization knobs.

    Parameters
    ----------
    op : RobinOperator
        Assembled Robin-Laplace forms (provides the grid, quadrature,
        and the dual norm).
    law : ConstitutiveLaw
    K : float
        Gravity transport coefficient; requires a strictly increasing
        law (c0 > 0) when nonzero.
    lam : float
        Scalar Yosida parameter of the law regularization.
    mu : float
        Accretivity shift; ``mu_auto`` gives the default.
    eps : float
        Step parameter of the vector resolvent / Yosida of the shifted
        drift.
    basis : RobinSpectralBasis, optional
        Needed for mode pairings and the probe field sampler.
    """

    def __init__(self, op: RobinOperator, law: ConstitutiveLaw, K: float,
                 lam: float, mu: float, eps: float,
                 basis: RobinSpectralBasis | None = None):
        if lam <= 0 or eps <= 0:
            raise ValueError("regularization parameters lam, eps must be positive")
        if mu < 0:
            raise ValueError("accretivity shift mu must be nonnegative")
        if K != 0.0 and law.c0 <= 0.0:
            raise ValueError(
                "gravity transport (K != 0) requires a strictly increasing "
                "law: declared monotonicity modulus c0 must be positive"
            )
        self.op = op
        self.domain = op.domain
        self.law = law
        self.K = float(K)
        self.lam = float(lam)
        self.mu = float(mu)
        self.eps = float(eps)
        self.basis = basis
        self._grad_z = None
        self._grad_z_t_w = None
        self._bands = None  # tridiagonal band cache, 1D grids only

    @property
    def grad_z(self) -> sp.csr_matrix:
        if self._grad_z is None:
            self._grad_z = centered_gradient(self.domain, self.domain.gravity_axis)
        return self._grad_z

    @property
    def grad_z_t_w(self) -> sp.csc_matrix:
        """D_z^T diag(w), the weighted adjoint used by the transport term."""
        if self._grad_z_t_w is None:
            self._grad_z_t_w = (
                self.grad_z.T @ sp.diags(self.domain.volume_weights)
            ).tocsc()
        return self._grad_z_t_w

    def _tridiag_bands(self):
        """(a_bands, gtw_bands) in solve_banded layout; 1D grids only."""
        if self._bands is None:
            def bands(mat):
                n = mat.shape[0]
                ab = np.zeros((3, n))
                ab[0, 1:] = mat.diagonal(1)
                ab[1] = mat.diagonal()
                ab[2, :-1] = mat.diagonal(-1)
                return ab

            gtw = bands(self.grad_z_t_w) if self.K != 0.0 else None
            self._bands = (bands(self.op.matrix), gtw)
        return self._bands

    def monotonicity_modulus(self) -> float:
        """Strong-monotonicity modulus of the regularized scalar law."""
        return self.lam + self.law.c0 / (1.0 + self.lam * self.law.c0)

    def lipschitz_bracket(self, eps: float | None = None) -> float:
        """Positivity of this bracket underwrites the L2 contraction bound
        of the resolvent: lam + eps*mu*lam - eps*K^2 - eps/(2 lam^2)."""
        eps = self.eps if eps is None else eps
        return (self.lam + eps * self.mu * self.lam - eps * self.K**2
                - eps / (2.0 * self.lam**2))

    def lipschitz_constant(self, eps: float | None = None) -> float:
        """L2 contraction bound (2*bracket)^(-1/2) of the resolvent."""
        bracket = self.lipschitz_bracket(eps)
        if bracket <= 0:
            raise ValueError(
                f"contraction bracket {bracket:.3e} is not positive; "
                "increase mu or decrease eps"
            )
        return 1.0 / np.sqrt(2.0 * bracket)

    def with_eps(self, eps: float) -> "OperatorConfig":
        cfg = OperatorConfig(self.op, self.law, self.K, self.lam, self.mu,
                             eps, self.basis)
        cfg._grad_z = self._grad_z
        cfg._grad_z_t_w = self._grad_z_t_w
        return cfg


class BoundaryData:
    """Time-indexed flux data on the two boundary parts.

    ``surface`` and ``underground`` are constants or callables of time
    returning a constant (or an array over the respective face nodes).
    """

    def __init__(self, domain: GridDomain, surface=0.0, underground=0.0,
                 t_max=np.inf):
        self.domain = domain
        self.surface = surface
        self.underground = underground
        self.t_max = float(t_max)
        self._static_lift = None

    def _eval(self, spec, t, face):
        val = spec(t) if callable(spec) else spec
        val = np.asarray(val, dtype=float)
        if val.ndim == 0:
            return np.full(face.nodes.size, float(val))
        if val.size != face.nodes.size:
            raise ValueError("boundary data length does not match face")
        if not np.all(np.isfinite(val)):
            raise ValueError("boundary data must be finite")
        return val

    def values(self, t: float, tag: BoundaryTag):
        if not 0.0 <= t <= self.t_max:
            raise ValueError(f"time {t} outside data range [0, {self.t_max}]")
        spec = self.surface if tag is BoundaryTag.SURFACE else self.underground
        return {
            (f.axis, f.side): self._eval(spec, t, f)
            for f in self.domain.tagged_faces(tag)
        }

    @property
    def is_static(self) -> bool:
        return not (callable(self.surface) or callable(self.underground))


# ── Drift applications ───────────────────────────────────────────────────


def apply_drift(cfg: OperatorConfig, x: np.ndarray,
                regularized: bool = True) -> np.ndarray:
    """Nodal dual representative of the drift applied to ``x``.

    With ``regularized`` the law is replaced by its shifted Yosida
    surrogate (the lam-regularized drift); otherwise the raw law is used.
    """
    if regularized:
        law_vals = shifted_yosida_scalar(cfg.law, cfg.lam, x)
    else:
        law_vals = cfg.law(x)
    w = cfg.domain.volume_weights
    out = (cfg.op.matrix @ law_vals) / w
    if cfg.K != 0.0:
        out -= cfg.K * (cfg.grad_z_t_w @ x) / w
    return out


def drift_mode_pairing(cfg: OperatorConfig, X: DiscreteField, j: int,
                       regularized: bool = False) -> float:
    """Dual pairing <drift(X), e_j> by quadrature against phi_j = e_j/lambda_j."""
    if cfg.basis is None:
        raise ValueError("config carries no spectral basis")
    basis = cfg.basis
    w = cfg.domain.volume_weights
    e_j = basis.modes[:, j]
    if regularized:
        law_vals = shifted_yosida_scalar(cfg.law, cfg.lam, X.values)
    else:
        law_vals = cfg.law(X.values)
    val = float(w @ (law_vals * e_j))
    if cfg.K != 0.0:
        dphi = cfg.grad_z @ (e_j / basis.lambdas[j])
        val -= cfg.K * float(w @ (X.values * dphi))
    return val


def assemble_forcing(data: BoundaryData, t: float, j: int,
                     basis: RobinSpectralBasis) -> float:
    """Pairing <F_u(t) + F_s(t), e_j> = -int_Gamma data * e_j dsigma."""
    e_j = basis.modes[:, j]
    total = 0.0
    for tag in (BoundaryTag.SURFACE, BoundaryTag.UNDERGROUND):
        vals = data.values(t, tag)
        for f in data.domain.tagged_faces(tag):
            total -= float((f.weights * vals[(f.axis, f.side)]) @ e_j[f.nodes])
    return total


def forcing_lift(data: BoundaryData, t: float) -> np.ndarray:
    """Nodal dual representative of the boundary forcing functional."""
    if data.is_static and data._static_lift is not None:
        if not 0.0 <= t <= data.t_max:
            raise ValueError(f"time {t} outside data range [0, {data.t_max}]")
        return data._static_lift
    load = np.zeros(data.domain.node_count)
    for tag in (BoundaryTag.SURFACE, BoundaryTag.UNDERGROUND):
        vals = data.values(t, tag)
        for f in data.domain.tagged_faces(tag):
            np.add.at(load, f.nodes, f.weights * vals[(f.axis, f.side)])
    lift = -load / data.domain.volume_weights
    if data.is_static:
        data._static_lift = lift
    return lift


# ── Resolvent solve ──────────────────────────────────────────────────────


def _check_solvable(cfg: OperatorConfig, eps: float):
    margin = 1.0 + eps * (cfg.mu - cfg.K**2 / (4.0 * cfg.monotonicity_modulus()))
    if margin <= 0.0:
        raise SolverError(
            f"resolvent map is not monotone: margin {margin:.3e} "
            f"(mu={cfg.mu}, K={cfg.K}, lam={cfg.lam}, eps={eps})"
        )


def resolvent_field(cfg: OperatorConfig, g: DiscreteField,
                    eps: float | None = None,
                    info: dict | None = None) -> DiscreteField:
    """Solve  x + eps*(mu*x + drift_lam(x)) = g  for the nodal field x.

    Newton runs on the substituted variable y = shifted_yosida(x), in
    which the diffusion is linear; steps are damped by an Armijo search
    on the dual-norm residual, with a small-step Picard fallback.  The
    converged dual residual is at most 1e-10 relative to |g|_dual.
    ``info``, when given, receives the iteration count and final residual.
    """
    eps = cfg.eps if eps is None else float(eps)
    _check_solvable(cfg, eps)
    op, law, lam, mu, K = cfg.op, cfg.law, cfg.lam, cfg.mu, cfg.K
    w = cfg.domain.volume_weights
    a_mat = op.matrix
    g_vals = g.values
    g_dual = op.dual_norm(g_vals)
    tol = _NEWTON_RTOL * max(g_dual, 1e-14)

    def residual(y, x):
        r = (1.0 + eps * mu) * x + eps * ((a_mat @ y) / w) - g_vals
        if K != 0.0:
            r -= eps * K * (cfg.grad_z_t_w @ x) / w
        return r

    def finish(x, iterations, res_dual):
        if info is not None:
            info["iterations"] = iterations
            info["residual"] = res_dual
        return DiscreteField(cfg.domain, x)

    y = shifted_yosida_scalar(law, lam, g_vals)
    x = g_vals.copy()
    res = residual(y, x)
    res_dual = op.dual_norm(res)
    trace = [res_dual]

    banded = cfg.domain.d == 1
    for it in range(_NEWTON_MAX_ITER):
        if res_dual <= tol:
            return finish(x, it, res_dual)
        slope = shifted_yosida_derivative(law, lam, x)
        phi_prime = 1.0 / slope
        try:
            if banded:
                a_bands, gtw_bands = cfg._tridiag_bands()
                ab = eps * a_bands
                if K != 0.0:
                    ab = ab - (eps * K) * (gtw_bands * phi_prime[None, :])
                ab[1] += (1.0 + eps * mu) * w * phi_prime
                delta = solve_banded((1, 1), ab, -w * res)
            else:
                jac = eps * a_mat + sp.diags((1.0 + eps * mu) * w * phi_prime)
                if K != 0.0:
                    jac = jac - eps * K * cfg.grad_z_t_w.multiply(phi_prime[None, :])
                delta = sp.linalg.spsolve(jac.tocsc(), -w * res)
        except (RuntimeError, np.linalg.LinAlgError) as exc:  # pragma: no cover
            raise SolverError(f"resolvent Jacobian solve failed: {exc}")

        step = 1.0
        improved = False
        while step >= 2.0**-20:
            y_try = y + step * delta
            x_try = shifted_yosida_inverse(law, lam, y_try)
            res_try = residual(y_try, x_try)
            res_try_dual = op.dual_norm(res_try)
            if res_try_dual <= (1.0 - 1e-4 * step) * res_dual:
                y, x, res, res_dual = y_try, x_try, res_try, res_try_dual
                improved = True
                break
            step /= 2.0
        if not improved:
            break
        trace.append(res_dual)

    if res_dual <= tol:
        return finish(x, len(trace), res_dual)
    out = _picard_fallback(cfg, eps, g_vals, x, tol, trace)
    if info is not None:
        info["iterations"] = len(trace)
        info["residual"] = tol
    return out


def _picard_fallback(cfg, eps, g_vals, x0, tol, trace):
    """Small-step gradient iteration in the dual geometry; globally
    convergent for the monotone configurations resolvent_field accepts."""
    op, lam = cfg.op, cfg.lam
    w = cfg.domain.volume_weights
    lip_law = lam + 1.0 / lam
    # Gershgorin bound for the nodal Robin-Laplace map W^-1 (S+B).
    row_sums = np.asarray(np.abs(cfg.op.matrix).sum(axis=1)).ravel()
    lam_max = float(np.max(row_sums / w))
    t_norm = 0.0
    if cfg.K != 0.0:
        t_norm = abs(cfg.K) * float(
            np.max(np.asarray(np.abs(cfg.grad_z_t_w).sum(axis=1)).ravel() / w)
        )
    lip_total = 1.0 + eps * (cfg.mu + lip_law * lam_max + t_norm)
    tau = 1.0 / lip_total

    x = x0.copy()
    for k in range(_PICARD_MAX_ITER):
        res = (1.0 + eps * cfg.mu) * x + eps * apply_drift(cfg, x) - g_vals
        res_dual = op.dual_norm(res)
        if res_dual <= tol:
            return DiscreteField(cfg.domain, x)
        x = x - tau * res
    raise SolverError(
        f"resolvent did not converge: Newton trace {trace[:8]}..., "
        f"Picard residual {res_dual:.3e} after {_PICARD_MAX_ITER} steps "
        f"(tol {tol:.3e})"
    )


def yosida_drift(cfg: OperatorConfig, X: DiscreteField,
                 eps: float | None = None,
                 info: dict | None = None) -> DiscreteField:
    """Yosida drift  (X - resolvent(X)) / eps  of the shifted operator."""
    eps = cfg.eps if eps is None else float(eps)
    j = resolvent_field(cfg, X, eps, info=info)
    return DiscreteField(cfg.domain, (X.values - j.values) / eps,
                         validate=False)


# ── Probes ───────────────────────────────────────────────────────────────


def sample_dual_field(cfg: OperatorConfig, rng: np.random.Generator,
                      scale: float = 1.0) -> DiscreteField:
    """Random eigen-expansion with mode-j coefficient ~ N(0, 1/lambda_j)."""
    if cfg.basis is None:
        raise ValueError("config carries no spectral basis")
    basis = cfg.basis
    coeff = rng.standard_normal(basis.J) / np.sqrt(basis.lambdas)
    return DiscreteField(cfg.domain, scale * (basis.modes @ coeff),
                         validate=False)


@dataclass
class ProbeReport:
    """Per-trial probe rows (lhs, bound, margin) plus summary statistics."""

    kind: str
    rows: list
    summary: dict
    metadata: dict

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("trial,lhs,bound,margin\n")
        for i, (lhs, bound, margin) in enumerate(self.rows):
            buf.write(f"{i},{float(lhs)!r},{float(bound)!r},"
                      f"{float(margin)!r}\n")
        return buf.getvalue()


def accretivity_probe(cfg: OperatorConfig, trials: int, seed: int) -> ProbeReport:
    """Empirical shifted-monotonicity check of the raw drift in the dual
    norm.

    For random pairs (x, y) it evaluates

        Q = <(mu I + A)x - (mu I + A)y, x - y>_dual

    and the lower bound  mu|d|_dual^2 + c0|d|_2^2 - K|d|_2|d|_dual  that
    the operator's structure promises, reporting min Q, min(Q - bound),
    and the fraction of trials with Q >= -1e-12.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    op = cfg.op
    w = cfg.domain.volume_weights
    rng = np.random.default_rng(seed)
    rows = []
    for _ in range(trials):
        x = sample_dual_field(cfg, rng)
        y = sample_dual_field(cfg, rng)
        delta = x.values - y.values
        phi = op.poisson_solve(delta)
        diff_drift = apply_drift(cfg, x.values, regularized=False) - \
            apply_drift(cfg, y.values, regularized=False)
        q = float((w * (cfg.mu * delta + diff_drift)) @ phi)
        dual_sq = max(float((w * delta) @ phi), 0.0)
        l2 = op.l2_norm(delta)
        bound = cfg.mu * dual_sq + cfg.law.c0 * l2**2 \
            - abs(cfg.K) * l2 * np.sqrt(dual_sq)
        rows.append((q, bound, q - bound))

    qs = np.array([r[0] for r in rows])
    margins = np.array([r[2] for r in rows])
    summary = {
        "min_q": float(qs.min()),
        "min_margin": float(margins.min()),
        "frac_nonneg": float(np.mean(qs >= -1e-12)),
    }
    meta = {
        "mu": cfg.mu,
        "K": cfg.K,
        "c0": cfg.law.c0,
        "mu_threshold": (cfg.K**2 / (4 * cfg.law.c0)) if cfg.law.c0 > 0 else None,
        "threshold_note": "empirical threshold mu >= K^2/(4 c0) is derived "
                          "from a Young inequality, not a quoted constant",
    }
    return ProbeReport("accretivity", rows, summary, meta)


def lipschitz_probe(cfg: OperatorConfig, trials: int, seed: int) -> ProbeReport:
    """Empirical L2 contraction factor of the resolvent against its
    closed-form bound, plus dual-norm non-expansiveness.

    Rejects configurations whose contraction bracket is not positive.
    """
    bound = cfg.lipschitz_constant()  # raises if the bracket fails
    op = cfg.op
    rng = np.random.default_rng(seed)
    rows = []
    ratios_dual = []
    for _ in range(trials):
        y = sample_dual_field(cfg, rng)
        y_bar = sample_dual_field(cfg, rng)
        dy = y.values - y_bar.values
        dy_l2 = op.l2_norm(dy)
        if dy_l2 == 0.0:
            continue
        jy = resolvent_field(cfg, y)
        jy_bar = resolvent_field(cfg, y_bar)
        dj = jy.values - jy_bar.values
        ratio = op.l2_norm(dj) / dy_l2
        rows.append((ratio, bound, bound - ratio))
        ratios_dual.append(op.dual_norm(dj) / max(op.dual_norm(dy), 1e-300))

    ratios = np.array([r[0] for r in rows])
    summary = {
        "max_ratio_l2": float(ratios.max()),
        "max_ratio_dual": float(np.max(ratios_dual)),
        "bound": bound,
    }
    meta = {"lam": cfg.lam, "eps": cfg.eps, "mu": cfg.mu, "K": cfg.K,
            "bracket": cfg.lipschitz_bracket()}
    return ProbeReport("lipschitz", rows, summary, meta)
