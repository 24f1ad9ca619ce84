"""Discrete Robin-Laplace operator, Poisson solves, eigenbasis, dual norms.

The operator is the weak Laplacian with mixed boundary conditions: a
Robin condition  dphi/dnu + alpha*phi = 0  on the underground boundary
and a homogeneous Neumann condition on the surface.  Its bilinear form

    a(phi, psi) = int grad(phi).grad(psi) dxi + int_{Gamma_u} alpha phi psi dsigma

induces the primal norm |x|_V = a(x, x)^(1/2).  The dual inner product of
two fields x, y is computed through an elliptic solve,

    <x, y>_dual = int x * phi dxi   with  a(phi, .) = (y, .),

so that eigenpairs (lambda_j, e_j) of the operator diagonalize both: the
e_j are orthonormal in the (lumped) L2 inner product and
<e_i, e_j>_dual = delta_ij / lambda_j.

Discretization: per-axis three-point stiffness (exact for piecewise
linear fields) with transverse trapezoidal weights, a lumped boundary
mass for the Robin term, and the lumped trapezoidal volume mass.  The
resulting matrix is symmetric positive definite whenever the underground
boundary is non-empty and alpha > 0, and the eigenproblem stays a
standard symmetric one after the diagonal mass similarity.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import cho_solve_banded, cholesky_banded, eigh

from .geometry import BoundaryTag, DiscreteField, GridDomain

__all__ = [
    "RobinCoefficient",
    "RobinOperator",
    "RobinSpectralBasis",
    "GrowthReport",
    "EigensolverError",
    "assemble",
    "solve_poisson",
    "eigensolve",
    "vprime_inner",
    "vprime_norm_sq",
    "v_norm",
    "eigen_growth_study",
]

DENSE_EIGEN_LIMIT = 2048  # dense symmetric solve up to this many nodes


class EigensolverError(RuntimeError):
    pass


class RobinCoefficient:
    """Strictly positive permeability coefficient alpha on the underground
    boundary, stored nodally per face, with declared bounds."""

    def __init__(self, domain: GridDomain, face_values: dict,
                 alpha_min: float, alpha_max: float):
        self.domain = domain
        self.face_values = face_values  # (axis, side) -> ndarray over face nodes
        self.alpha_min = float(alpha_min)
        self.alpha_max = float(alpha_max)
        self.validate()

    @classmethod
    def constant(cls, domain, value):
        value = float(value)
        fv = {
            (f.axis, f.side): np.full(f.nodes.size, value)
            for f in domain.tagged_faces(BoundaryTag.UNDERGROUND)
        }
        return cls(domain, fv, value, value)

    @classmethod
    def from_function(cls, domain, fn, alpha_min=None, alpha_max=None):
        """Sample ``fn(*coords)`` on each underground face."""
        fv = {}
        for f in domain.tagged_faces(BoundaryTag.UNDERGROUND):
            coords = [domain.coordinate(k)[f.nodes] for k in range(domain.d)]
            fv[(f.axis, f.side)] = np.asarray(fn(*coords), dtype=float)
        lo = min(v.min() for v in fv.values())
        hi = max(v.max() for v in fv.values())
        return cls(domain, fv,
                   lo if alpha_min is None else alpha_min,
                   hi if alpha_max is None else alpha_max)

    def validate(self):
        if not self.face_values:
            raise ValueError("underground boundary is empty")
        if not (0.0 < self.alpha_min <= self.alpha_max):
            raise ValueError(
                f"need 0 < alpha_min <= alpha_max, got "
                f"[{self.alpha_min}, {self.alpha_max}]"
            )
        for key, vals in self.face_values.items():
            if vals.min() < self.alpha_min - 1e-14 or vals.max() > self.alpha_max + 1e-14:
                raise ValueError(
                    f"alpha on face {key} leaves [{self.alpha_min}, {self.alpha_max}]: "
                    f"range [{vals.min()}, {vals.max()}]"
                )


def _axis_stiffness(n_nodes: int, h: float) -> sp.csr_matrix:
    # Three-point stiffness of the 1D gradient form, exact for P1 fields.
    main = np.full(n_nodes, 2.0 / h)
    main[0] = main[-1] = 1.0 / h
    off = np.full(n_nodes - 1, -1.0 / h)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr")


def _kron_chain(mats) -> sp.csr_matrix:
    out = mats[0]
    for m in mats[1:]:
        out = sp.kron(out, m, format="csr")
    return out


class RobinOperator:
    """Assembled bilinear forms of the Robin-Laplace operator.

    ``matrix`` is the SPD stiffness-plus-boundary form; ``weights`` the
    lumped volume mass diagonal.  A factorization of ``matrix`` is cached
    for the Poisson solves behind the dual inner product.
    """

    def __init__(self, domain: GridDomain, alpha: RobinCoefficient,
                 stiffness: sp.csr_matrix, boundary_diag: np.ndarray):
        self.domain = domain
        self.alpha = alpha
        self.stiffness = stiffness
        self.boundary_diag = boundary_diag
        self.weights = domain.volume_weights
        self.matrix = (stiffness + sp.diags(boundary_diag)).tocsc()
        self._lu = None
        self._chol = None  # banded Cholesky factor, 1D grids only

    @property
    def lu(self):
        if self._lu is None:
            self._lu = spla.splu(self.matrix)
        return self._lu

    def _solve_matrix(self, b: np.ndarray) -> np.ndarray:
        if self.domain.d == 1:
            if self._chol is None:
                ab = np.zeros((2, self.domain.node_count))
                ab[1] = self.matrix.diagonal()
                ab[0, 1:] = self.matrix.diagonal(1)
                self._chol = cholesky_banded(ab)
            return cho_solve_banded((self._chol, False), b)
        return self.lu.solve(b)

    def bilinear(self, f: np.ndarray, g: np.ndarray) -> float:
        """a(f, g) on raw nodal vectors."""
        return float(f @ (self.matrix @ g))

    def mass_inner(self, f: np.ndarray, g: np.ndarray) -> float:
        """Lumped L2 inner product on raw nodal vectors."""
        return float((self.weights * f) @ g)

    def l2_norm(self, f: np.ndarray) -> float:
        return float(np.sqrt(max(self.mass_inner(f, f), 0.0)))

    def poisson_solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve  a(phi, .) = (rhs, .)  with one refinement sweep."""
        b = self.weights * rhs
        phi = self._solve_matrix(b)
        phi += self._solve_matrix(b - self.matrix @ phi)
        return phi

    def dual_inner(self, x: np.ndarray, y: np.ndarray) -> float:
        return float((self.weights * x) @ self.poisson_solve(y))

    def dual_norm_sq(self, x: np.ndarray) -> float:
        return max(self.dual_inner(x, x), 0.0)

    def dual_norm(self, x: np.ndarray) -> float:
        return float(np.sqrt(self.dual_norm_sq(x)))


def assemble(domain: GridDomain, alpha: RobinCoefficient) -> RobinOperator:
    """Assemble the symmetric Robin-Laplace forms on a grid.

    The gradient part sums per-axis three-point stiffness blocks with
    trapezoidal transverse weights; the Robin part is a lumped boundary
    mass (one-point face quadrature) which keeps the matrix symmetric.
    """
    if alpha.domain != domain:
        raise ValueError("alpha was sampled on a different domain")
    axis_w = []
    for n, h in zip(domain.shape, domain.spacing):
        w = np.full(n, h)
        w[0] = w[-1] = h / 2.0
        axis_w.append(w)

    stiffness = None
    for k in range(domain.d):
        mats = []
        for j in range(domain.d):
            if j == k:
                mats.append(_axis_stiffness(domain.shape[j], domain.spacing[j]))
            else:
                mats.append(sp.diags(axis_w[j]))
        block = _kron_chain(mats)
        stiffness = block if stiffness is None else stiffness + block

    boundary_diag = np.zeros(domain.node_count)
    for f in domain.tagged_faces(BoundaryTag.UNDERGROUND):
        np.add.at(boundary_diag, f.nodes,
                  alpha.face_values[(f.axis, f.side)] * f.weights)
    return RobinOperator(domain, alpha, stiffness.tocsr(), boundary_diag)


def solve_poisson(op: RobinOperator, rhs: DiscreteField) -> DiscreteField:
    """Solve the Robin-Neumann Poisson problem  -lap(phi) = rhs  weakly.

    The discrete residual is checked to 1e-10 relative; failure to reach
    it raises EigensolverError with the achieved residual.
    """
    phi = op.poisson_solve(rhs.values)
    b = op.weights * rhs.values
    res = np.linalg.norm(op.matrix @ phi - b)
    scale = max(np.linalg.norm(b), 1e-300)
    if res > 1e-10 * scale:
        raise EigensolverError(
            f"Poisson solve residual {res / scale:.3e} exceeds 1e-10"
        )
    return DiscreteField(op.domain, phi)


def vprime_inner(op: RobinOperator, x: DiscreteField, y: DiscreteField) -> float:
    """Dual inner product  <x, y> = int x * phi  with  -lap(phi) = y  (Robin)."""
    if x.domain != y.domain:
        raise ValueError("fields live on different domains")
    return op.dual_inner(x.values, y.values)


def vprime_norm_sq(op: RobinOperator, x: DiscreteField) -> float:
    return op.dual_norm_sq(x.values)


def v_norm(op: RobinOperator, x: DiscreteField) -> float:
    """Primal norm  (int |grad x|^2 + int_{Gamma_u} alpha x^2)^(1/2)."""
    return float(np.sqrt(max(op.bilinear(x.values, x.values), 0.0)))


@dataclass
class RobinSpectralBasis:
    """Ascending eigenpairs of the Robin-Laplace operator.

    ``modes`` has one eigenfield per column, orthonormal in the lumped L2
    inner product; ``lambdas`` are the eigenvalues.
    """

    domain: GridDomain
    alpha: RobinCoefficient
    operator: RobinOperator
    lambdas: np.ndarray
    modes: np.ndarray  # (node_count, J)

    @property
    def J(self) -> int:
        return self.lambdas.size

    def eigenfield(self, j: int) -> DiscreteField:
        return DiscreteField(self.domain, self.modes[:, j].copy(), validate=False)

    def coefficients(self, f: np.ndarray) -> np.ndarray:
        """L2 coefficients  (f, e_j)  for all computed modes."""
        return self.modes.T @ (self.operator.weights * f)


def eigensolve(op: RobinOperator, J: int) -> RobinSpectralBasis:
    """Smallest J eigenpairs of  a(e, .) = lambda (e, .).

    Dense symmetric solve after the diagonal mass similarity when the
    grid is small; shift-invert Lanczos on the generalized problem above
    DENSE_EIGEN_LIMIT nodes.  Orthonormality and eigen-residuals are
    verified to 1e-8 before returning.
    """
    n = op.domain.node_count
    if not 1 <= J <= n:
        raise ValueError(f"need 1 <= J <= {n}, got {J}")
    w = op.weights
    if n <= DENSE_EIGEN_LIMIT:
        d_inv_sqrt = 1.0 / np.sqrt(w)
        dense = op.matrix.toarray() * np.outer(d_inv_sqrt, d_inv_sqrt)
        dense = 0.5 * (dense + dense.T)
        vals, vecs = eigh(dense, subset_by_index=[0, J - 1])
        modes = vecs * d_inv_sqrt[:, None]
    else:
        v0 = np.ones(n)
        try:
            vals, modes = spla.eigsh(
                op.matrix, k=J, M=sp.diags(w), sigma=0.0, which="LM",
                v0=v0, tol=0.0,
            )
        except spla.ArpackNoConvergence as exc:  # pragma: no cover
            raise EigensolverError(f"eigensolver did not converge: {exc}")
        order = np.argsort(vals)
        vals, modes = vals[order], modes[:, order]
        # ARPACK returns M-orthonormal vectors; re-normalize defensively.
        norms = np.sqrt(np.einsum("ij,ij->j", modes, w[:, None] * modes))
        modes = modes / norms

    basis = RobinSpectralBasis(op.domain, op.alpha, op, np.asarray(vals),
                               np.asarray(modes))
    _check_basis(op, basis)
    return basis


def _check_basis(op, basis):
    gram = basis.modes.T @ (op.weights[:, None] * basis.modes)
    ortho_err = np.max(np.abs(gram - np.eye(basis.J)))
    if ortho_err > 1e-8:
        raise EigensolverError(f"orthonormality defect {ortho_err:.3e}")
    if basis.lambdas[0] <= 0:
        raise EigensolverError(f"lambda_1 = {basis.lambdas[0]:.3e} not positive")
    resid = op.matrix @ basis.modes - (op.weights[:, None] * basis.modes) * basis.lambdas
    rel = np.linalg.norm(resid, axis=0) / (
        basis.lambdas * np.linalg.norm(op.weights[:, None] * basis.modes, axis=0)
    )
    if np.max(rel) > 1e-8:
        raise EigensolverError(f"eigen-residual {np.max(rel):.3e} exceeds 1e-8")


@dataclass
class GrowthReport:
    """Per-mode growth diagnostics for products x*e_j.

    ``ratio_l2[j]``   = |x e_j|_2^2 / (lambda_j^((d-1)/2) |x|_2^2)
    ``ratio_dual[j]`` = |x e_j|_dual^2 / ((1 + lambda_j^((d+1)/2)) |x|_dual^2)
    ``sup_exponent`` is the least-squares slope of log sup|e_j| against
    log lambda_j over the upper half of the computed modes.
    """

    lambdas: np.ndarray
    sup_norms: np.ndarray
    ratio_l2: np.ndarray
    ratio_dual: np.ndarray
    max_ratio_l2: float
    max_ratio_dual: float
    sup_exponent: float

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("j,lambda_j,sup_e_j,ratio_L2,ratio_Vprime\n")
        for j in range(self.lambdas.size):
            buf.write(
                f"{j + 1},{float(self.lambdas[j])!r},"
                f"{float(self.sup_norms[j])!r},{float(self.ratio_l2[j])!r},"
                f"{float(self.ratio_dual[j])!r}\n"
            )
        return buf.getvalue()


def eigen_growth_study(basis: RobinSpectralBasis, x: DiscreteField) -> GrowthReport:
    """Measure how |x e_j| grows with lambda_j in L2 and in the dual norm.

    The continuous operator obeys |x e_j|_2^2 <= C lambda_j^((d-1)/2) |x|_2^2
    and |x e_j|_dual^2 <= C (1 + lambda_j^((d+1)/2)) |x|_dual^2; the report
    returns the per-mode ratios and the fitted sup-norm growth exponent.
    """
    if basis.J < 8:
        raise ValueError(f"need at least 8 modes, got {basis.J}")
    op = basis.operator
    d = basis.domain.d
    lam = basis.lambdas
    sup_norms = np.max(np.abs(basis.modes), axis=0)

    x_l2_sq = op.mass_inner(x.values, x.values)
    x_dual_sq = op.dual_norm_sq(x.values)
    ratio_l2 = np.zeros(basis.J)
    ratio_dual = np.zeros(basis.J)
    if x_l2_sq > 0:
        for j in range(basis.J):
            xe = x.values * basis.modes[:, j]
            ratio_l2[j] = op.mass_inner(xe, xe) / (lam[j] ** ((d - 1) / 2.0) * x_l2_sq)
            ratio_dual[j] = op.dual_norm_sq(xe) / (
                (1.0 + lam[j] ** ((d + 1) / 2.0)) * x_dual_sq
            )

    upper = slice(basis.J // 2, basis.J)
    slope = np.polyfit(np.log(lam[upper]), np.log(sup_norms[upper]), 1)[0]
    return GrowthReport(
        lambdas=lam.copy(),
        sup_norms=sup_norms,
        ratio_l2=ratio_l2,
        ratio_dual=ratio_dual,
        max_ratio_l2=float(ratio_l2.max(initial=0.0)),
        max_ratio_dual=float(ratio_dual.max(initial=0.0)),
        sup_exponent=float(slope),
    )
