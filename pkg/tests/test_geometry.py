import numpy as np
import pytest

from spme.geometry import (
    BoundaryTag,
    DiscreteField,
    build_grid,
    bump_field,
    depth_coordinate,
    quad_boundary,
    quad_volume,
)


def test_unit_interval_nodes_and_tags():
    g = build_grid(1, 1.0, 4)
    assert np.allclose(g.axes[0], [0, 0.25, 0.5, 0.75, 1.0])
    surface = g.tagged_faces(BoundaryTag.SURFACE)
    underground = g.tagged_faces(BoundaryTag.UNDERGROUND)
    assert len(surface) == 1 and len(underground) == 1
    # surface is the x = 0 end, underground the x = 1 end
    assert g.coordinate(0)[surface[0].nodes[0]] == 0.0
    assert g.coordinate(0)[underground[0].nodes[0]] == 1.0


def test_square_boundary_measures():
    g = build_grid(2, [1.0, 1.0], [4, 4])
    one = DiscreteField.constant(g, 1.0)
    assert quad_boundary(one, BoundaryTag.SURFACE) == pytest.approx(1.0)
    assert quad_boundary(one, BoundaryTag.UNDERGROUND) == pytest.approx(3.0)
    # every face carries exactly one tag and the split covers the boundary
    assert len(g.faces) == 4
    assert sum(f.tag is BoundaryTag.SURFACE for f in g.faces) == 1


def test_surface_is_top_of_depth_axis():
    g = build_grid(2, [1.0, 2.0], [4, 4])
    (surf,) = g.tagged_faces(BoundaryTag.SURFACE)
    assert surf.axis == g.gravity_axis == 1
    depth = g.coordinate(1)
    assert np.all(depth[surf.nodes] == 0.0)


@pytest.mark.parametrize("d,extents,cells", [
    (4, 1.0, 4), (0, 1.0, 4), (1, -1.0, 4), (1, 0.0, 4),
    (1, 1.0, 1), (2, [1.0, 1.0], [4, 1]), (2, [1.0, 1.0, 1.0], [4, 4]),
])
def test_build_grid_rejects(d, extents, cells):
    with pytest.raises(ValueError):
        build_grid(d, extents, cells)


def test_quad_volume_measure_and_affine():
    g = build_grid(1, 1.0, 4)
    assert quad_volume(DiscreteField.constant(g, 1.0)) == pytest.approx(1.0)
    lin = DiscreteField.from_function(g, lambda x: x)
    assert quad_volume(lin) == pytest.approx(0.5, abs=1e-15)
    g3 = build_grid(3, [1.0, 2.0, 0.5], [2, 3, 2])
    assert quad_volume(DiscreteField.constant(g3, 1.0)) == pytest.approx(
        1.0, rel=1e-12)


def test_quad_volume_quadratic_with_richardson_oracle():
    # Richardson extrapolation of the trapezoid sums pins the exact value.
    vals = {}
    for n in (64, 128):
        g = build_grid(1, 1.0, n)
        vals[n] = quad_volume(DiscreteField.from_function(g, lambda x: x**2))
    extrapolated = (4 * vals[128] - vals[64]) / 3
    assert extrapolated == pytest.approx(1.0 / 3.0, abs=1e-10)
    assert abs(vals[64] - 1.0 / 3.0) <= 3e-4


def test_quad_boundary_point_mass_and_zero():
    g = build_grid(1, 1.0, 4)
    f = DiscreteField.from_function(g, lambda x: 1.0 - x)
    assert quad_boundary(f, BoundaryTag.SURFACE) == pytest.approx(1.0)
    assert quad_boundary(f, BoundaryTag.UNDERGROUND) == pytest.approx(0.0)
    z = DiscreteField.zeros(g)
    for tag in BoundaryTag:
        assert quad_boundary(z, tag) == 0.0


def test_quadrature_linearity():
    g = build_grid(2, [1.0, 1.0], [6, 5])
    rng = np.random.default_rng(0)
    for _ in range(100):
        a, b = rng.standard_normal(2)
        f = DiscreteField(g, rng.standard_normal(g.node_count))
        h = DiscreteField(g, rng.standard_normal(g.node_count))
        combo = DiscreteField(g, a * f.values + b * h.values)
        lhs = quad_volume(combo)
        rhs = a * quad_volume(f) + b * quad_volume(h)
        assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)
        for tag in BoundaryTag:
            lhs_b = quad_boundary(combo, tag)
            rhs_b = a * quad_boundary(f, tag) + b * quad_boundary(h, tag)
            assert lhs_b == pytest.approx(rhs_b, rel=1e-12, abs=1e-12)


def test_boundary_parts_sum_to_full_boundary():
    g = build_grid(2, [1.0, 1.0], [5, 7])
    rng = np.random.default_rng(1)
    f = DiscreteField(g, rng.standard_normal(g.node_count))
    total = sum(
        float(face.weights @ f.values[face.nodes]) for face in g.faces
    )
    parts = quad_boundary(f, BoundaryTag.SURFACE) + quad_boundary(
        f, BoundaryTag.UNDERGROUND)
    assert parts == pytest.approx(total, rel=1e-13, abs=1e-13)


def test_refinement_second_order():
    exact = 1.0 - np.cos(1.0)
    errs = []
    for n in (16, 32, 64):
        g = build_grid(1, 1.0, n)
        f = DiscreteField.from_function(g, np.sin)
        errs.append(abs(quad_volume(f) - exact))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 1.9)


def test_field_domain_mismatch_and_validation():
    g1 = build_grid(1, 1.0, 4)
    g2 = build_grid(1, 1.0, 8)
    f1 = DiscreteField.constant(g1, 1.0)
    f2 = DiscreteField.constant(g2, 1.0)
    with pytest.raises(ValueError):
        _ = f1 + f2
    with pytest.raises(ValueError):
        DiscreteField(g1, [np.nan] * g1.node_count)
    with pytest.raises(ValueError):
        DiscreteField(g1, [1.0, 2.0])


def test_field_arithmetic():
    g = build_grid(1, 1.0, 4)
    f = DiscreteField.from_function(g, lambda x: x)
    h = 2.0 * f - f * f
    assert np.allclose(h.values, g.axes[0] * (2.0 - g.axes[0]))
    assert np.allclose((-f).values, -g.axes[0])


def test_bump_field_compact_support():
    g = build_grid(1, 1.0, 64)
    b = bump_field(g, [0.5], 0.2, amplitude=0.7)
    x = g.coordinate(0)
    assert np.all(b.values[np.abs(x - 0.5) >= 0.2] == 0.0)
    assert b.values.max() == pytest.approx(0.7, rel=1e-12)
    assert quad_volume(b) > 0


def test_depth_coordinate_is_last_axis():
    g = build_grid(2, [2.0, 1.0], [4, 4])
    z = depth_coordinate(g)
    assert z.values.max() == pytest.approx(1.0)
    assert np.all(z.reshape()[:, 0] == 0.0)
