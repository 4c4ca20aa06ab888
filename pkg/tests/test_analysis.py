import math

import numpy as np
import pytest

from diracopt.analysis import (
    EstimateReport,
    ScanRecord,
    check_green_bound,
    check_moment_bound,
    check_moment_bound_ball,
    exp_norm_bound_no_forcing,
    fit_log_slope,
    green_unit_ball,
    moment_bound_ball,
    moment_bound_whole,
    threshold_scan,
)
from diracopt.mesh import build_grid, build_point_set, field_from_function, zeros_field
from diracopt.state import ProblemSpec

UNIT = (0.0, 1.0, 0.0, 1.0)


def make_problem(n, points):
    g = build_grid(UNIT, n)
    ps = build_point_set(g, list(points))
    return ProblemSpec(grid=g, points=ps, forcing=zeros_field(g),
                       target=zeros_field(g), l1_weight=1e-3)


class TestMomentBoundFormulas:
    def test_single_mass_alpha_2pi_closed_form(self):
        R, r0 = 0.7, 0.2
        got = moment_bound_whole([3.0], 2.0 * math.pi, R, r0)
        # base = 1, exponent = 1, bracket = R^2 + r0^2
        assert got == pytest.approx(math.pi * (2 * R / r0) * (R**2 + r0**2),
                                    rel=1e-14)

    def test_alpha_near_critical_tends_to_area(self):
        R, r0 = 0.7, 0.2
        got = moment_bound_whole([3.0, 1.0], 4.0 * math.pi - 1e-9, R, r0)
        assert got == pytest.approx(math.pi * R**2, rel=1e-7)

    def test_general_case_re_evaluated(self):
        masses = [2.0 * math.pi, math.pi]
        alpha, R, r0 = math.pi, math.sqrt(2.0) / 2.0, 0.2
        got = moment_bound_whole(masses, alpha, R, r0)
        m = np.array(masses)
        base = 2.0 - alpha / (2.0 * math.pi)
        expo = base * m.sum() / m.max()
        den = 2.0 - base * m / m.max()
        bracket = R**2 - 2 * r0**2 + 2 * r0**2 * np.sum(1.0 / den)
        assert got == pytest.approx(math.pi * (2 * R / r0) ** expo * bracket,
                                    rel=1e-14)

    def test_ball_single_mass_alpha_2pi(self):
        R, r0 = 0.7, 0.2
        got = moment_bound_ball([3.0], 0, 2.0 * math.pi, R, r0)
        assert got == pytest.approx(4.0 * math.pi * R * r0, rel=1e-14)

    def test_scaling_invariance(self):
        masses = np.array([2.0, 1.0, 0.5])
        args = (1.5, 0.8, 0.1)
        whole = moment_bound_whole(masses, *args)
        assert moment_bound_whole(3.0 * masses, *args) == pytest.approx(
            whole, rel=1e-13)
        ball = moment_bound_ball(masses, 1, *args)
        assert moment_bound_ball(3.0 * masses, 1, *args) == pytest.approx(
            ball, rel=1e-13)

    def test_monotone_in_alpha(self):
        alphas = [0.5 * math.pi, math.pi, 2.0 * math.pi, 3.0 * math.pi]
        vals = [moment_bound_whole([2.0, 1.0], a, 0.7, 0.2) for a in alphas]
        assert all(vals[i + 1] < vals[i] for i in range(len(vals) - 1))

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            moment_bound_whole([1.0, -2.0], math.pi, 0.7, 0.2)
        with pytest.raises(ValueError):
            moment_bound_whole([], math.pi, 0.7, 0.2)
        with pytest.raises(ValueError):
            moment_bound_whole([1.0], 4.0 * math.pi, 0.7, 0.2)
        with pytest.raises(ValueError):
            moment_bound_whole([1.0], 0.0, 0.7, 0.2)
        with pytest.raises(ValueError):
            moment_bound_whole([1.0], math.pi, 0.1, 0.5)
        with pytest.raises(ValueError):
            moment_bound_ball([1.0], 1, math.pi, 0.7, 0.2)
        with pytest.raises(ValueError):
            moment_bound_ball([1.0], -1, math.pi, 0.7, 0.2)


class TestExpNormBound:
    def test_tau_zero_closed_form(self):
        M, k, R, r0 = 2.0 * math.pi, 2, math.sqrt(2.0) / 2.0, 0.2
        got = exp_norm_bound_no_forcing(0.0, M, k, R, r0)
        bracket = R**2 + k * M * r0**2 / (4.0 * math.pi - M)
        assert got == pytest.approx(math.pi * (2 * R / r0) ** (2 * k) * bracket,
                                    rel=1e-14)

    def test_blows_up_toward_admissible_limit(self):
        M = 2.0 * math.pi
        tau_max = 4.0 * math.pi / M - 1.0
        moderate = exp_norm_bound_no_forcing(0.5 * tau_max, M, 1, 0.7, 0.2)
        extreme = exp_norm_bound_no_forcing(tau_max * (1 - 1e-9), M, 1, 0.7, 0.2)
        # the bracket diverges like 1/delta and enters at power 1/p = 1/2
        assert extreme > 1e3 * moderate

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            exp_norm_bound_no_forcing(1.0, 2.0 * math.pi, 1, 0.7, 0.2)
        with pytest.raises(ValueError):
            exp_norm_bound_no_forcing(-0.1, math.pi, 1, 0.7, 0.2)
        with pytest.raises(ValueError):
            exp_norm_bound_no_forcing(0.0, 4.0 * math.pi, 1, 0.7, 0.2)
        with pytest.raises(ValueError):
            exp_norm_bound_no_forcing(0.0, math.pi, 0, 0.7, 0.2)


class TestCheckMomentBound:
    def test_whole_domain_holds(self):
        prob = make_problem(65, [(0.35, 0.5), (0.65, 0.5)])
        rep = check_moment_bound(prob.grid, prob.points,
                                 [2.0 * math.pi, math.pi], math.pi)
        assert rep.holds
        assert rep.margin == pytest.approx(rep.rhs - rep.lhs)
        assert rep.lhs > 0.0

    def test_ball_holds_for_each_index(self):
        prob = make_problem(65, [(0.35, 0.5), (0.65, 0.5)])
        for j in range(2):
            rep = check_moment_bound_ball(prob.grid, prob.points,
                                          [2.0 * math.pi, math.pi], math.pi, j)
            assert rep.holds
            assert rep.config["ball_index"] == j

    def test_mass_count_mismatch(self):
        prob = make_problem(33, [(0.35, 0.5), (0.65, 0.5)])
        with pytest.raises(ValueError):
            check_moment_bound(prob.grid, prob.points, [1.0], math.pi)

    def test_report_serializes(self):
        prob = make_problem(33, [(0.5, 0.5)])
        rep = check_moment_bound(prob.grid, prob.points, [math.pi], math.pi)
        doc = rep.to_json()
        assert doc["name"] == "moment_bound_whole"
        assert set(doc) == {"name", "lhs", "rhs", "margin", "holds",
                            "slack", "config"}


class TestThresholdScan:
    def test_zero_mass_gives_unit_norm(self):
        prob = make_problem(17, [(0.5, 0.5)])
        records = threshold_scan(prob, [0.0], 0.0, [17, 33])
        for rec in records:
            assert rec.converged
            assert rec.norm == pytest.approx(1.0, abs=1e-12)

    def test_record_layout(self):
        prob = make_problem(17, [(0.5, 0.5)])
        records = threshold_scan(prob, [0.0, math.pi], 0.5, [17, 33])
        assert [(r.mass, r.n) for r in records] == [
            (0.0, 17), (0.0, 33), (math.pi, 17), (math.pi, 33)]
        assert all(r.tau == 0.5 for r in records)
        assert isinstance(records[0], ScanRecord)

    def test_norm_increases_with_mass(self):
        prob = make_problem(17, [(0.5, 0.5)])
        records = threshold_scan(prob, [math.pi, 2.0 * math.pi, 3.0 * math.pi],
                                 0.0, [65])
        norms = [r.norm for r in records]
        assert all(r.converged for r in records)
        assert norms[0] < norms[1] < norms[2]

    def test_rejects_nonzero_forcing(self):
        g = build_grid(UNIT, 17)
        ps = build_point_set(g, [(0.5, 0.5)])
        prob = ProblemSpec(grid=g, points=ps,
                           forcing=field_from_function(g, lambda X, Y: X * Y),
                           target=zeros_field(g), l1_weight=1e-3)
        with pytest.raises(ValueError):
            threshold_scan(prob, [1.0], 0.0, [17])

    def test_rejects_negative_tau_and_empty_lists(self):
        prob = make_problem(17, [(0.5, 0.5)])
        with pytest.raises(ValueError):
            threshold_scan(prob, [1.0], -0.5, [17])
        with pytest.raises(ValueError):
            threshold_scan(prob, [], 0.0, [17])
        with pytest.raises(ValueError):
            threshold_scan(prob, [1.0], 0.0, [])


class TestFitLogSlope:
    def test_recovers_synthetic_log_coefficient(self):
        g = build_grid(UNIT, 257)
        c = (0.5, 0.5)
        mass = 3.0

        def profile(X, Y):
            r2 = (X - c[0]) ** 2 + (Y - c[1]) ** 2
            out = np.where(r2 > 0, -np.log(np.maximum(r2, 1e-300)), 0.0)
            return (mass / (4.0 * math.pi)) * out

        field = field_from_function(g, profile)
        slope = fit_log_slope(field, c, 0.02, 0.1)
        assert slope == pytest.approx(mass / (2.0 * math.pi), rel=0.02)

    def test_zero_on_constant_field(self):
        g = build_grid(UNIT, 65)
        field = field_from_function(g, lambda X, Y: np.full_like(X, 2.5))
        assert abs(fit_log_slope(field, (0.5, 0.5), 0.05, 0.2)) <= 1e-12

    def test_rejects_bad_window(self):
        g = build_grid(UNIT, 33)
        field = zeros_field(g)
        with pytest.raises(ValueError):
            fit_log_slope(field, (0.5, 0.5), 0.1, 0.05)
        with pytest.raises(ValueError):
            fit_log_slope(field, (0.5, 0.5), 0.0, 0.05)


class TestGreenFunction:
    def test_center_value(self):
        got = green_unit_ball((0.0, 0.0), (0.5, 0.0))
        assert got == pytest.approx(math.log(2.0) / (2.0 * math.pi), abs=1e-14)

    def test_exact_symmetry(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            r = np.sqrt(rng.uniform(size=2)) * 0.999
            t = rng.uniform(0, 2 * math.pi, size=2)
            a = (r[0] * math.cos(t[0]), r[0] * math.sin(t[0]))
            b = (r[1] * math.cos(t[1]), r[1] * math.sin(t[1]))
            assert green_unit_ball(a, b) == green_unit_ball(b, a)

    def test_positive_inside(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            a = rng.uniform(-0.7, 0.7, size=2)
            b = rng.uniform(-0.7, 0.7, size=2)
            if np.allclose(a, b):
                continue
            assert green_unit_ball(a, b) > 0.0

    def test_vanishes_toward_boundary(self):
        xp = ((1.0 - 1e-7) * math.cos(0.3), (1.0 - 1e-7) * math.sin(0.3))
        assert 0.0 < green_unit_ball((0.0, 0.0), xp) <= 1e-6

    def test_harmonic_away_from_pole(self):
        hs = 1e-3
        xp = (0.1, -0.2)
        for x in ((0.4, 0.3), (-0.5, 0.1), (0.0, 0.6)):
            center = green_unit_ball(x, xp)
            lap = (
                green_unit_ball((x[0] + hs, x[1]), xp)
                + green_unit_ball((x[0] - hs, x[1]), xp)
                + green_unit_ball((x[0], x[1] + hs), xp)
                + green_unit_ball((x[0], x[1] - hs), xp)
                - 4.0 * center
            ) / hs**2
            assert abs(lap) <= 1e-3

    def test_rejects_coincident_and_exterior(self):
        with pytest.raises(ValueError):
            green_unit_ball((0.2, 0.2), (0.2, 0.2))
        with pytest.raises(ValueError):
            green_unit_ball((1.2, 0.0), (0.0, 0.0))
        with pytest.raises(ValueError):
            green_unit_ball((0.0, 0.0), (1.0, 0.0))


class TestCheckGreenBound:
    def test_holds_with_near_diagonal_stress(self):
        rep = check_green_bound(samples=2000, seed=3, near_diagonal=200)
        assert rep.holds
        assert rep.lhs <= rep.rhs
        assert rep.config["near_diagonal"] == 200

    def test_deterministic_in_seed(self):
        a = check_green_bound(samples=500, seed=5)
        b = check_green_bound(samples=500, seed=5)
        assert a.lhs == b.lhs

    def test_rejects_zero_samples(self):
        with pytest.raises(ValueError):
            check_green_bound(samples=0)

    def test_report_type(self):
        rep = check_green_bound(samples=100, seed=1)
        assert isinstance(rep, EstimateReport)
        assert rep.name == "green_bound"
