import numpy as np
import pytest
from scipy.optimize import brentq

from spme import robin_laplace as rl
from spme.geometry import BoundaryTag, DiscreteField, build_grid, bump_field, quad_boundary, quad_volume

from conftest import random_dual_field


def smallest_robin_eigenvalue(alpha=1.0):
    """Oracle: smallest root of sqrt(lam)*tan(sqrt(lam)) = alpha on [0, 1]
    with a no-flux condition at 0 and the Robin condition at 1."""
    t = brentq(lambda t: t * np.tan(t) - alpha, 1e-6, np.pi / 2 - 1e-9,
               xtol=1e-15)
    return t * t


# ── assembly ─────────────────────────────────────────────────────────────


def test_constant_field_bilinear_value():
    g = build_grid(1, 1.0, 4)
    op = rl.assemble(g, rl.RobinCoefficient.constant(g, 1.0))
    one = np.ones(g.node_count)
    assert op.bilinear(one, one) == pytest.approx(1.0, abs=1e-14)


def test_bilinear_symmetry_and_boundary_lower_bound(op64, grid64):
    rng = np.random.default_rng(3)
    for _ in range(20):
        f = rng.standard_normal(grid64.node_count)
        h = rng.standard_normal(grid64.node_count)
        assert op64.bilinear(f, h) == pytest.approx(op64.bilinear(h, f),
                                                    rel=1e-12, abs=1e-12)
        field = DiscreteField(grid64, f)
        traced = quad_boundary(field * field, BoundaryTag.UNDERGROUND)
        assert op64.bilinear(f, f) >= 1.0 * traced - 1e-10


def test_alpha_bound_violation_rejected():
    g = build_grid(1, 1.0, 8)
    with pytest.raises(ValueError):
        rl.RobinCoefficient(g, {(0, 1): np.array([2.0])}, 0.5, 1.0)
    with pytest.raises(ValueError):
        rl.RobinCoefficient.constant(g, 0.0)


def test_alpha_from_function_mismatched_domain():
    g = build_grid(1, 1.0, 8)
    g2 = build_grid(1, 1.0, 16)
    alpha = rl.RobinCoefficient.constant(g2, 1.0)
    with pytest.raises(ValueError):
        rl.assemble(g, alpha)


def test_variable_alpha_enters_boundary_term():
    g = build_grid(2, [1.0, 1.0], [8, 8])
    alpha = rl.RobinCoefficient.from_function(g, lambda x, z: 1.0 + 0.5 * x * z)
    op = rl.assemble(g, alpha)
    one = np.ones(g.node_count)
    # gradient term vanishes; remaining value is int_{Gamma_u} alpha dsigma
    expected = 0.0
    for f in g.tagged_faces(BoundaryTag.UNDERGROUND):
        expected += float(f.weights @ alpha.face_values[(f.axis, f.side)])
    assert op.bilinear(one, one) == pytest.approx(expected, rel=1e-12)


# ── Poisson solve and dual norms ─────────────────────────────────────────


def test_poisson_matches_analytic_profile(op512, grid512):
    rhs = DiscreteField.constant(grid512, 1.0)
    phi = rl.solve_poisson(op512, rhs)
    x = grid512.axes[0]
    assert np.max(np.abs(phi.values - (1.5 - 0.5 * x**2))) <= 1e-10


def test_poisson_eigen_relation_and_zero(op64, basis64, grid64):
    phi = rl.solve_poisson(op64, basis64.eigenfield(2))
    expected = basis64.modes[:, 2] / basis64.lambdas[2]
    assert np.max(np.abs(phi.values - expected)) <= 1e-8
    zero = rl.solve_poisson(op64, DiscreteField.zeros(grid64))
    assert np.max(np.abs(zero.values)) == 0.0


def test_dual_inner_constant_value(op512, grid512):
    one = DiscreteField.constant(grid512, 1.0)
    assert rl.vprime_inner(op512, one, one) == pytest.approx(4.0 / 3.0,
                                                             abs=1e-3)


def test_dual_inner_symmetry(op64, basis64, grid64):
    rng = np.random.default_rng(8)
    for _ in range(20):
        x = random_dual_field(basis64, rng)
        y = random_dual_field(basis64, rng)
        a = rl.vprime_inner(op64, x, y)
        b = rl.vprime_inner(op64, y, x)
        assert a == pytest.approx(b, rel=1e-10, abs=1e-12)


def test_dual_inner_eigen_relation(op64, basis64):
    for i, j in [(0, 0), (0, 1), (2, 2), (1, 3)]:
        val = rl.vprime_inner(op64, basis64.eigenfield(i),
                              basis64.eigenfield(j))
        expected = (1.0 / basis64.lambdas[j]) if i == j else 0.0
        assert val == pytest.approx(expected, abs=1e-8)


def test_v_norm_examples(op512, grid512):
    one = DiscreteField.constant(grid512, 1.0)
    assert rl.v_norm(op512, one) == pytest.approx(1.0, abs=1e-13)
    assert rl.v_norm(op512, DiscreteField.zeros(grid512)) == 0.0
    lin = DiscreteField.from_function(grid512, lambda x: x)
    assert rl.v_norm(op512, lin) == pytest.approx(np.sqrt(2.0), abs=1e-2)


def test_duality_chain(op64, basis64, grid64):
    rng = np.random.default_rng(11)
    for _ in range(100):
        x = random_dual_field(basis64, rng)
        phi = random_dual_field(basis64, rng)
        pairing = abs(float((grid64.volume_weights * x.values) @ phi.values))
        bound = op64.dual_norm(x.values) * rl.v_norm(op64, phi)
        assert pairing <= bound * (1.0 + 1e-10) + 1e-12


# ── eigensolve ───────────────────────────────────────────────────────────


def test_eigenvalue_oracle_coarse():
    g = build_grid(1, 1.0, 256)
    op = rl.assemble(g, rl.RobinCoefficient.constant(g, 1.0))
    basis = rl.eigensolve(op, 4)
    assert basis.lambdas[0] == pytest.approx(smallest_robin_eigenvalue(),
                                             abs=2e-3)


def test_eigensolve_invariants(basis64, op64):
    gram = basis64.modes.T @ (op64.weights[:, None] * basis64.modes)
    assert np.max(np.abs(gram - np.eye(basis64.J))) <= 1e-8
    assert basis64.lambdas[0] > 0
    assert np.all(np.diff(basis64.lambdas) >= 0)
    resid = op64.matrix @ basis64.modes - (
        op64.weights[:, None] * basis64.modes) * basis64.lambdas
    rel = np.linalg.norm(resid, axis=0) / basis64.lambdas
    assert np.max(rel) <= 1e-8


def test_eigensolve_rejects_bad_mode_count(op64, grid64):
    with pytest.raises(ValueError):
        rl.eigensolve(op64, grid64.node_count + 1)
    with pytest.raises(ValueError):
        rl.eigensolve(op64, 0)


def test_iterative_eigensolve_matches_separable_oracle():
    # 2209 nodes exceeds the dense cutoff, exercising the shift-invert path.
    g = build_grid(2, [1.0, 1.0], [46, 46])
    op = rl.assemble(g, rl.RobinCoefficient.constant(g, 1.0))
    basis = rl.eigensolve(op, 6)
    t_depth = brentq(lambda t: t * np.tan(t) - 1.0, 1e-6, np.pi / 2 - 1e-9)
    t_trans = brentq(lambda t: t * np.tan(t / 2) - 1.0, 1e-6, np.pi - 1e-9)
    oracle = t_depth**2 + t_trans**2
    assert basis.lambdas[0] == pytest.approx(oracle, rel=2e-3)


def test_dual_inner_matches_eigen_expansion(tiny16):
    grid, op, basis = tiny16  # full spectrum on the tiny grid
    rng = np.random.default_rng(4)
    x = DiscreteField(grid, rng.standard_normal(grid.node_count))
    direct = op.dual_norm_sq(x.values)
    coeff = basis.coefficients(x.values)
    expansion = float(np.sum(coeff**2 / basis.lambdas))
    assert direct == pytest.approx(expansion, rel=1e-8, abs=1e-10)


def test_poisson_matches_eigen_reconstruction(tiny16):
    grid, op, basis = tiny16
    rng = np.random.default_rng(5)
    rhs = DiscreteField(grid, rng.standard_normal(grid.node_count))
    direct = rl.solve_poisson(op, rhs).values
    coeff = basis.coefficients(rhs.values)
    recon = basis.modes @ (coeff / basis.lambdas)
    assert np.max(np.abs(direct - recon)) <= 1e-8


# ── growth study ─────────────────────────────────────────────────────────


def test_growth_study_flat_sup_norms_in_1d():
    g = build_grid(1, 1.0, 256)
    op = rl.assemble(g, rl.RobinCoefficient.constant(g, 1.0))
    basis = rl.eigensolve(op, 32)
    x = bump_field(g, [0.4], 0.3)
    rep = rl.eigen_growth_study(basis, x)
    assert abs(rep.sup_exponent) <= 0.1


def test_growth_study_zero_field(basis64, grid64):
    rep = rl.eigen_growth_study(basis64, DiscreteField.zeros(grid64))
    assert rep.max_ratio_l2 == 0.0
    assert rep.max_ratio_dual == 0.0


def test_growth_ratio_stable_under_mode_doubling(op64, grid64):
    x = bump_field(grid64, [0.4], 0.3)
    maxima = []
    for j_modes in (16, 32):
        basis = rl.eigensolve(op64, j_modes)
        rep = rl.eigen_growth_study(basis, x)
        maxima.append(rep.max_ratio_l2)
        assert np.isfinite(rep.max_ratio_l2)
    assert maxima[1] <= maxima[0] * (1.0 + 1e-9)


def test_growth_study_needs_modes(op64):
    basis = rl.eigensolve(op64, 4)
    with pytest.raises(ValueError):
        rl.eigen_growth_study(basis, DiscreteField.zeros(basis.domain))


def test_growth_report_csv_columns(basis64, grid64):
    rep = rl.eigen_growth_study(basis64, bump_field(grid64, [0.4], 0.3))
    lines = rep.to_csv().strip().splitlines()
    assert lines[0] == "j,lambda_j,sup_e_j,ratio_L2,ratio_Vprime"
    assert len(lines) == basis64.J + 1
