import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diracopt.mesh import (
    DomainGrid,
    GridField,
    angular_mean,
    build_grid,
    build_point_set,
    constant_field,
    dirac_discretization,
    dirac_field,
    dirac_sum,
    field_from_function,
    integrate,
    integrate_ball,
    lp_norm,
    point_eval,
    point_eval_many,
    read_field_csv,
    resample,
    write_field_csv,
    zeros_field,
)

UNIT = (0.0, 1.0, 0.0, 1.0)


class TestBuildGrid:
    def test_unit_square_n5(self):
        g = build_grid(UNIT, 5)
        assert g.h == 0.25
        assert g.num_nodes == 25
        assert g.shape == (5, 5)

    def test_rejects_small_n(self):
        with pytest.raises(ValueError):
            build_grid(UNIT, 4)

    def test_rejects_rectangular_cells(self):
        with pytest.raises(ValueError, match="square"):
            build_grid((0.0, 1.0, 0.0, 2.0), 65)

    def test_radius_unit_square(self):
        g = build_grid(UNIT, 65)
        assert abs(g.radius - math.sqrt(2.0) / 2.0) <= 1e-15

    def test_node_coordinates(self):
        g = build_grid((1.0, 3.0, -1.0, 1.0), 9)
        assert g.h == 0.25
        assert g.x_nodes()[0] == 1.0 and g.x_nodes()[-1] == 3.0
        assert g.y_nodes()[4] == 0.0

    def test_rejects_bad_bounds(self):
        with pytest.raises(ValueError):
            build_grid((1.0, 0.0, 0.0, 1.0), 9)
        with pytest.raises(ValueError):
            build_grid((0.0, math.inf, 0.0, 1.0), 9)


class TestGridField:
    def test_rejects_wrong_length(self):
        g = build_grid(UNIT, 5)
        with pytest.raises(ValueError):
            GridField(g, np.zeros(24))

    def test_rejects_nonfinite(self):
        g = build_grid(UNIT, 5)
        vals = np.zeros(25)
        vals[7] = np.nan
        with pytest.raises(ValueError):
            GridField(g, vals)

    def test_values_read_only(self):
        f = constant_field(build_grid(UNIT, 5), 2.0)
        with pytest.raises(ValueError):
            f.values[0] = 1.0

    def test_is_dirichlet(self):
        g = build_grid(UNIT, 9)
        assert zeros_field(g).is_dirichlet()
        assert not constant_field(g, 1.0).is_dirichlet()


class TestIntegrate:
    def test_constant_one(self):
        g = build_grid(UNIT, 33)
        assert abs(integrate(constant_field(g, 1.0)) - 1.0) <= 1e-12

    def test_constant_on_rectangle(self):
        g = build_grid((0.0, 2.0, 0.0, 2.0), 17)
        assert abs(integrate(constant_field(g, 3.0)) - 12.0) <= 1e-12

    def test_sine_product_against_analytic_integral(self):
        # exact value of the integral of sin(pi x) sin(pi y) over the unit square
        expected = 4.0 / math.pi**2
        g = build_grid(UNIT, 129)
        f = field_from_function(g, lambda X, Y: np.sin(np.pi * X) * np.sin(np.pi * Y))
        assert abs(integrate(f) - expected) <= 1e-3

    def test_dirac_mass_exact(self):
        g = build_grid(UNIT, 33)
        f = dirac_field(g, (0.37, 0.61), 2.5)
        assert integrate(f) == pytest.approx(2.5, abs=1e-14)

    def test_interpolant_integral_matches_nodal_quadrature(self):
        g = build_grid(UNIT, 17)
        rng = np.random.default_rng(7)
        f = GridField(g, rng.standard_normal(g.num_nodes))
        fine = build_grid(UNIT, 33)
        assert abs(integrate(resample(f, fine)) - integrate(f)) <= 1e-12


class TestDirac:
    def test_node_coincident_single_node(self):
        g = build_grid(UNIT, 9)
        f = dirac_field(g, (0.5, 0.5), 3.0)
        nz = np.nonzero(f.values)[0]
        assert nz.size == 1
        assert f.values[nz[0]] == pytest.approx(3.0 / g.h**2, rel=1e-14)

    def test_cell_center_four_equal_nodes(self):
        g = build_grid(UNIT, 9)
        x = 0.5 + g.h / 2.0
        f = dirac_field(g, (x, x), 2.0)
        nz = np.nonzero(f.values)[0]
        assert nz.size == 4
        np.testing.assert_allclose(f.values[nz], 2.0 / (4.0 * g.h**2), rtol=1e-13)

    def test_random_points_conserve_mass(self):
        g = build_grid(UNIT, 33)
        rng = np.random.default_rng(11)
        for _ in range(100):
            p = rng.uniform(3.0 * g.h, 1.0 - 3.0 * g.h, size=2)
            m = rng.uniform(-5.0, 5.0)
            assert integrate(dirac_field(g, p, m)) == pytest.approx(m, abs=1e-14)

    def test_weights_nonnegative_and_partition(self):
        g = build_grid(UNIT, 17)
        d = dirac_discretization(g, (0.311, 0.544))
        assert all(w >= 0.0 for w in d.weights)
        assert sum(w * g.h**2 for w in d.weights) == pytest.approx(1.0, abs=1e-14)

    def test_rejects_boundary_margin(self):
        g = build_grid(UNIT, 17)
        with pytest.raises(ValueError):
            dirac_discretization(g, (g.h, 0.5))

    def test_dirac_sum_superposes(self):
        g = build_grid(UNIT, 17)
        f = dirac_sum(g, [(0.3, 0.3), (0.7, 0.7)], [1.0, -2.0])
        assert integrate(f) == pytest.approx(-1.0, abs=1e-13)


@settings(max_examples=60, deadline=None)
@given(
    px=st.floats(0.2, 0.8),
    py=st.floats(0.2, 0.8),
    mass=st.floats(-20.0, 20.0),
)
def test_dirac_mass_conservation_property(px, py, mass):
    g = build_grid(UNIT, 21)
    assert integrate(dirac_field(g, (px, py), mass)) == pytest.approx(mass, abs=1e-12)


class TestLpNorm:
    def test_zero_field(self):
        g = build_grid(UNIT, 9)
        assert lp_norm(zeros_field(g), 2.0) == 0.0

    def test_constant_l2_unit_square(self):
        g = build_grid(UNIT, 17)
        assert lp_norm(constant_field(g, -3.0), 2.0) == pytest.approx(3.0, rel=1e-12)

    def test_rejects_p_below_one(self):
        g = build_grid(UNIT, 9)
        with pytest.raises(ValueError):
            lp_norm(zeros_field(g), 0.5)

    def test_refinement_consistency_for_smooth_field(self):
        fn = lambda X, Y: np.exp(X) * np.sin(np.pi * Y)
        coarse = lp_norm(field_from_function(build_grid(UNIT, 33), fn), 1.5)
        fine = lp_norm(field_from_function(build_grid(UNIT, 129), fn), 1.5)
        assert abs(coarse - fine) / fine <= 1e-3


class TestPointEval:
    def test_node_value(self):
        g = build_grid(UNIT, 9)
        f = field_from_function(g, lambda X, Y: X + 10.0 * Y)
        assert point_eval(f, (0.25, 0.5)) == pytest.approx(5.25, abs=1e-13)

    def test_cell_center_mean_of_corners(self):
        g = build_grid(UNIT, 5)
        rng = np.random.default_rng(3)
        f = GridField(g, rng.standard_normal(g.num_nodes))
        a = f.as_array()
        val = point_eval(f, (0.125, 0.375))
        corners = (a[1, 0] + a[1, 1] + a[2, 0] + a[2, 1]) / 4.0
        assert val == pytest.approx(corners, abs=1e-14)

    def test_affine_exactness(self):
        g = build_grid(UNIT, 17)
        f = field_from_function(g, lambda X, Y: 2.0 * X + 3.0 * Y)
        rng = np.random.default_rng(5)
        pts = rng.uniform(0.0, 1.0, size=(50, 2))
        vals = point_eval_many(f, pts)
        np.testing.assert_allclose(vals, 2.0 * pts[:, 0] + 3.0 * pts[:, 1], atol=1e-13)

    def test_rejects_outside(self):
        g = build_grid(UNIT, 9)
        with pytest.raises(ValueError):
            point_eval(zeros_field(g), (1.5, 0.5))


@settings(max_examples=40, deadline=None)
@given(x=st.floats(0.0, 1.0), y=st.floats(0.0, 1.0))
def test_point_eval_affine_property(x, y):
    g = build_grid(UNIT, 13)
    f = field_from_function(g, lambda X, Y: 4.0 * X - 7.0 * Y + 0.5)
    assert point_eval(f, (x, y)) == pytest.approx(4.0 * x - 7.0 * y + 0.5, abs=1e-12)


class TestAngularMean:
    def test_constant(self):
        g = build_grid(UNIT, 33)
        means = angular_mean(constant_field(g, 4.2), (0.5, 0.5), [0.1, 0.2, 0.3])
        np.testing.assert_allclose(means, 4.2, rtol=1e-14)

    def test_log_profile(self):
        g = build_grid(UNIT, 129)
        c = (0.5, 0.5)
        eps = 1e-12

        def fn(X, Y):
            r = np.sqrt((X - c[0]) ** 2 + (Y - c[1]) ** 2)
            return np.log(1.0 / np.maximum(r, eps))

        radii = np.array([4 * g.h, 8 * g.h, 0.2])
        means = angular_mean(field_from_function(g, fn), c, radii)
        np.testing.assert_allclose(means, np.log(1.0 / radii), atol=1e-3)

    def test_radially_symmetric_profile(self):
        g = build_grid(UNIT, 129)
        f = field_from_function(
            g, lambda X, Y: (X - 0.5) ** 2 + (Y - 0.5) ** 2
        )
        means = angular_mean(f, (0.5, 0.5), [0.1, 0.25])
        # interpolation bias is O(h^2)
        np.testing.assert_allclose(means, [0.01, 0.0625], atol=1e-4)

    def test_rejects_circle_leaving_domain(self):
        g = build_grid(UNIT, 17)
        with pytest.raises(ValueError):
            angular_mean(zeros_field(g), (0.9, 0.5), [0.2])


class TestPointSet:
    def test_separation_radius(self):
        g = build_grid(UNIT, 65)
        ps = build_point_set(g, [(0.3, 0.5), (0.7, 0.5)])
        assert ps.k == 2
        assert ps.r0 == pytest.approx(0.2, abs=1e-14)

    def test_single_point_uses_boundary_distance(self):
        g = build_grid(UNIT, 65)
        ps = build_point_set(g, [(0.25, 0.5)])
        assert ps.r0 == pytest.approx(0.25, abs=1e-14)

    def test_rejects_boundary_point_with_index(self):
        g = build_grid(UNIT, 65)
        with pytest.raises(ValueError, match=r"points\[1\]"):
            build_point_set(g, [(0.5, 0.5), (1.0, 0.5)])

    def test_rejects_duplicate_points(self):
        g = build_grid(UNIT, 65)
        with pytest.raises(ValueError):
            build_point_set(g, [(0.5, 0.5), (0.5, 0.5)])

    def test_disjoint_ball_invariant(self):
        g = build_grid(UNIT, 65)
        ps = build_point_set(g, [(0.2, 0.2), (0.5, 0.2), (0.2, 0.6)])
        dmin = min(
            np.linalg.norm(ps.points[i] - ps.points[j])
            for i in range(3)
            for j in range(i + 1, 3)
        )
        assert 2.0 * ps.r0 <= dmin + 1e-14


class TestIntegrateBall:
    def test_constant_matches_disk_area(self):
        g = build_grid(UNIT, 257)
        val = integrate_ball(constant_field(g, 1.0), (0.5, 0.5), 0.3)
        assert val == pytest.approx(math.pi * 0.09, rel=5e-3)

    def test_rejects_ball_leaving_domain(self):
        g = build_grid(UNIT, 17)
        with pytest.raises(ValueError):
            integrate_ball(constant_field(g, 1.0), (0.9, 0.5), 0.2)


class TestCsvRoundTrip:
    def test_write_read(self, tmp_path):
        g = build_grid(UNIT, 9)
        rng = np.random.default_rng(13)
        f = GridField(g, rng.standard_normal(g.num_nodes))
        path = tmp_path / "field.csv"
        write_field_csv(f, path)
        back = read_field_csv(path, g)
        np.testing.assert_array_equal(back.values, f.values)

    def test_infers_grid(self, tmp_path):
        g = build_grid((0.0, 2.0, 1.0, 3.0), 9)
        f = constant_field(g, 1.5)
        path = tmp_path / "field.csv"
        write_field_csv(f, path)
        back = read_field_csv(path)
        assert back.grid.n == 9
        assert back.grid.x_max == pytest.approx(2.0)

    def test_rejects_bad_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(ValueError, match="header"):
            read_field_csv(path)

    def test_rejects_grid_mismatch(self, tmp_path):
        g = build_grid(UNIT, 9)
        path = tmp_path / "field.csv"
        write_field_csv(constant_field(g, 1.0), path)
        other = build_grid((0.0, 2.0, 0.0, 2.0), 9)
        with pytest.raises(ValueError):
            read_field_csv(path, other)


class TestResample:
    def test_identity_on_same_grid(self):
        g = build_grid(UNIT, 9)
        rng = np.random.default_rng(1)
        f = GridField(g, rng.standard_normal(g.num_nodes))
        np.testing.assert_allclose(resample(f, g).values, f.values, atol=1e-13)

    def test_refine_preserves_affine(self):
        g = build_grid(UNIT, 9)
        f = field_from_function(g, lambda X, Y: X - 2.0 * Y)
        fine = build_grid(UNIT, 33)
        expect = field_from_function(fine, lambda X, Y: X - 2.0 * Y)
        np.testing.assert_allclose(resample(f, fine).values, expect.values, atol=1e-13)

    def test_rejects_larger_target(self):
        g = build_grid(UNIT, 9)
        big = build_grid((-1.0, 2.0, -1.0, 2.0), 13)
        with pytest.raises(ValueError):
            resample(zeros_field(g), big)
