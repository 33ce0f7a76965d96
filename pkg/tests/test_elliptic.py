"""Fredholm predicates, direct solves, maximum principle, indicial exponents."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ahyamabe import elliptic as el
from ahyamabe import fspaces as fs
from ahyamabe import geometry as geo
from ahyamabe import grid as g
from ahyamabe.errors import ParameterError
from ahyamabe.grid import GridFunction


class TestIndicialRadius:
    @pytest.mark.parametrize("lam,n,expected", [
        (0.0, 3, 1.0), (3.0, 3, 2.0), (0.0, 5, 2.0), (4.0, 4, 2.5),
    ])
    def test_paper_values(self, lam, n, expected):
        assert el.indicial_radius(lam, n) == pytest.approx(expected, rel=1e-15)

    def test_negative_shift_rejected(self):
        with pytest.raises(ParameterError):
            el.indicial_radius(-0.1, 3)


class TestFredholmRanges:
    def test_lambda_zero_window_is_zero_to_n_minus_one(self):
        for n in (3, 4, 5):
            R = el.indicial_radius(0.0, n)
            for delta in np.linspace(0.01, n - 1 - 0.01, 23):
                assert el.fredholm_range_x(delta, n, R)
            assert not el.fredholm_range_x(0.0, n, R)
            assert not el.fredholm_range_x(float(n - 1), n, R)

    def test_lambda_n_window_is_minus_one_to_n(self):
        for n in (3, 4, 5):
            R = el.indicial_radius(float(n), n)
            for delta in np.linspace(-0.99, n - 0.01, 23):
                assert el.fredholm_range_x(delta, n, R)
            assert not el.fredholm_range_x(-1.0, n, R)
            assert not el.fredholm_range_x(float(n), n, R)

    def test_h_range_center(self):
        assert el.fredholm_range_h(0.0, 2.0, 3, 2.0)

    def test_h_range_strictness_at_boundary(self):
        n, q, R = 3, 2.0, 2.0
        delta = R + (n - 1) / 2.0 - (n - 1) / q  # equality case
        assert not el.fredholm_range_h(delta, q, n, R)

    @given(delta=st.floats(-6, 6), q=st.floats(1.02, 50),
           R=st.floats(0.05, 4), n=st.integers(2, 6))
    @settings(max_examples=150, deadline=None)
    def test_duality_symmetry(self, delta, q, R, n):
        q_star = q / (q - 1.0)
        assert el.fredholm_range_h(delta, q, n, R) \
            == el.fredholm_range_h(-delta, q_star, n, R)


class TestCompatibleIndices:
    def test_weak_l2_corner_membership(self):
        # a nonempty index set always contains (d/2, 2); checked at s=1, p=4,
        # d=2, n=3 where the weak-L2 condition holds
        assert el.weak_l2_condition(1.0, 4.0, 2, 3)
        assert el.compatible_indices(1.0, 4.0, 2, 1.0, 2.0, 3)

    def test_contains_own_indices(self):
        s, p, d, n = 1.5, 3.0, 2, 3
        assert el.weak_l2_condition(s, p, d, n)
        assert el.compatible_indices(s, p, d, s, p, n)
        assert el.compatible_indices(s, p, d, d - s, p / (p - 1.0), n)

    def test_weak_l2_violation(self):
        # s >= d/2 fails at s=0.5, d=2
        assert not el.weak_l2_condition(0.5, 2.0, 2, 3)
        assert not el.compatible_indices(0.5, 2.0, 2, 1.0, 2.0, 3)

    def test_nonempty_iff_weak_l2_bruteforce(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            s = float(rng.uniform(0.2, 4.0))
            p = float(rng.uniform(1.05, 8.0))
            d = int(rng.integers(1, 5))
            n = int(rng.integers(2, 6))
            assert el.weak_l2_condition(s, p, d, n) \
                == el.compatible_indices_nonempty_bruteforce(s, p, d, n), \
                (s, p, d, n)


class TestSolveShifted:
    def test_zero_source_zero_solution(self):
        m = geo.hyperbolic_ball(3)
        gr = g.build_grid(128, "uniform-in-r", 1e-3)
        prob = el.EllipticProblem(m, 1.0, GridFunction(gr, np.zeros(gr.size)))
        u = el.solve_shifted(prob, gr)
        assert np.max(np.abs(u.values)) < 1e-14

    def test_manufactured_solution_second_order(self):
        n, lam = 3, 1.0
        m = geo.hyperbolic_ball(n)
        errs = []
        for N in (256, 512, 1024):
            gr = g.build_grid(N, "uniform-in-r", 1e-3)
            rho = gr.rho
            w = rho * (1 - rho)
            lap_w = (-(n - 2) * rho - 2 * rho ** 3) \
                - (-2 * (n - 3) * rho ** 2 - 6 * rho ** 4)
            f = -lap_w + lam * w
            prob = el.EllipticProblem(m, lam, GridFunction(gr, f),
                                      outer_value=float(w[-1]))
            u = el.solve_shifted(prob, gr)
            errs.append(np.max(np.abs(u.values - w)))
        orders = [np.log2(errs[i] / errs[i + 1]) for i in range(2)]
        assert min(orders) > 1.8

    def test_barrier_equation_power_solution(self):
        # f = -Delta rho^alpha evaluated through the power-law identity makes
        # u = rho^alpha the exact continuum solution; a fixed-ratio tail never
        # refines, so the ratio shrinks along with the spacing
        alpha = 0.5
        m = geo.hyperbolic_ball(3)
        errs = []
        for N, ratio in ((512, 2.0 ** -0.125), (1024, 2.0 ** -0.0625)):
            gr = g.build_grid(N, "geometric-in-rho", 1e-4, geometric_ratio=ratio)
            f = geo.minus_laplacian_power_law(m, gr, alpha)
            prob = el.EllipticProblem(m, 0.0, GridFunction(gr, f),
                                      outer_value=float(gr.rho[-1] ** alpha))
            u = el.solve_shifted(prob, gr)
            errs.append(np.max(np.abs(u.values - gr.rho ** alpha)))
        assert errs[0] < 5e-4
        assert np.log2(errs[0] / errs[1]) > 1.8

    def test_residual_contract(self):
        m = geo.perturbed_hyperbolic(3, 0.05, 2)
        gr = g.build_grid(512, "geometric-in-rho", 1e-4)
        rng = np.random.default_rng(3)
        f = rng.uniform(-1, 1, gr.size)
        prob = el.EllipticProblem(m, 2.0, GridFunction(gr, f))
        u = el.solve_shifted(prob, gr)
        op = el.shifted_operator(m, gr, 2.0)
        res = op.residual(u.values, f)
        assert np.max(np.abs(res)) <= 1e-10 * max(1.0, np.max(np.abs(f)))


class TestMaximumPrinciple:
    @pytest.mark.parametrize("lam", [0.5, 3.0])
    def test_nonnegative_sources(self, lam):
        m = geo.hyperbolic_ball(3)
        gr = g.build_grid(384, "geometric-in-rho", 1e-4)
        op = el.shifted_operator(m, gr, lam)
        rng = np.random.default_rng(17)
        for _ in range(25):
            f = rng.uniform(0.0, 1.0, gr.size)
            u = op.solve(f, outer_value=0.0)
            assert u.min() >= -1e-12

    def test_nonnegative_outer_data(self):
        m = geo.hyperbolic_ball(3)
        gr = g.build_grid(256, "geometric-in-rho", 1e-3)
        op = el.shifted_operator(m, gr, 1.0)
        u = op.solve(np.zeros(gr.size), outer_value=0.3)
        assert u.min() >= -1e-12


class TestHomogeneousExponents:
    def test_paper_windows_n3(self):
        m = geo.hyperbolic_ball(3)
        for lam, expect in ((0.0, (0.0, 2.0)), (3.0, (-1.0, 3.0))):
            fit = el.homogeneous_exponents(m, lam, eps=1e-5)
            assert fit["delta_minus"] == pytest.approx(expect[0], abs=1e-3)
            assert fit["delta_plus"] == pytest.approx(expect[1], abs=1e-3)

    def test_formula_n4(self):
        fit = el.homogeneous_exponents(geo.hyperbolic_ball(4), 0.0, eps=1e-5)
        assert fit["delta_minus"] == pytest.approx(0.0, abs=1e-3)
        assert fit["delta_plus"] == pytest.approx(3.0, abs=1e-3)

    def test_fit_quality_reported(self):
        fit = el.homogeneous_exponents(geo.hyperbolic_ball(3), 1.0, eps=1e-5)
        assert fit["r2_minus"] > 0.999
        assert fit["r2_plus"] > 0.999


class TestSolvabilityExperiment:
    def test_interior_weight_tracks_source(self):
        m = geo.hyperbolic_ball(3)
        gr = g.build_grid(1024, "geometric-in-rho", 1e-5)
        lam = 3.0  # X-window (-1, 3)
        op = el.shifted_operator(m, gr, lam)
        for delta in (0.5, 1.5, 2.0):
            u = op.solve(gr.rho ** delta, outer_value=0.0)
            beta, _ = fs.decay_exponent(GridFunction(gr, u), (1e-3, 2e-2))
            assert beta == pytest.approx(delta, abs=0.05)

    def test_lower_endpoint_contaminated(self):
        # the prescribed-decay closure admits the homogeneous rho^(-1) branch
        # that a zero Dirichlet row would artificially suppress
        m = geo.hyperbolic_ball(3)
        gr = g.build_grid(1024, "geometric-in-rho", 1e-5)
        P, Q = g.effective_physical_coefficients(m, gr)
        op = el.ShiftedOperator(gr, P, Q, 3.0, outer_decay=-1.0)
        u = op.solve(gr.rho ** (-1.0))
        beta, _ = fs.decay_exponent(GridFunction(gr, u), (1e-3, 2e-2))
        assert beta <= -1.0 + 0.05


class TestScanRows:
    def test_rows_carry_flags_and_exponents(self):
        m = geo.hyperbolic_ball(3)
        rows = el.fredholm_scan_rows(m, [0.0, 3.0], [-1.0, 0.5, 3.0], q=2.0)
        assert len(rows) == 6
        by_lam = {}
        for row in rows:
            by_lam.setdefault(row["Lambda"], row)
        assert by_lam[0.0]["exp_minus_fitted"] == pytest.approx(0.0, abs=1e-3)
        assert by_lam[0.0]["exp_plus_fitted"] == pytest.approx(2.0, abs=1e-3)
        assert by_lam[3.0]["exp_minus_fitted"] == pytest.approx(-1.0, abs=1e-3)
        assert by_lam[3.0]["exp_plus_fitted"] == pytest.approx(3.0, abs=1e-3)
        inside = [r for r in rows if r["Lambda"] == 3.0 and r["delta"] == 0.5]
        assert inside[0]["in_range_X"]
