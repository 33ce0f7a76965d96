"""Conditioning, barriers, monotone iteration, full pipeline and uniqueness."""

import numpy as np
import pytest

from ahyamabe import fspaces as fs
from ahyamabe import geometry as geo
from ahyamabe import grid as g
from ahyamabe import yamabe as ya
from ahyamabe.errors import ObstructionError, ParameterError, PreconditionError
from ahyamabe.grid import GridFunction

# conformal coefficient: for n=3, Theta_pert = 1 + c rho gives
# R[g] + 6 = (a_n (n-2) - Rbreve (q_n - 2)) c rho + O(rho^2) = 32 c rho + ...
DECAY1_C = 0.09375  # 32 c = 3, so the fitted tau should be 3


@pytest.fixture(scope="module")
def decay1_metric():
    return geo.conformal_hyperbolic(3, DECAY1_C, 1, 1.0)


class TestConstants:
    def test_dimension_three(self):
        c = ya.Constants(3)
        assert c.q_n == 6.0
        assert c.a_n == 8.0
        assert c.r_breve == -6.0

    def test_dimension_two_rejected(self):
        with pytest.raises(ParameterError):
            ya.Constants(2)


class TestConditioning:
    def test_hyperbolic_is_noop(self):
        m = geo.hyperbolic_ball(3)
        gr = g.build_grid(512, "geometric-in-rho", 1e-4)
        m2, theta, log = ya.condition_at_infinity(m, 2, gr)
        assert np.max(np.abs(theta.values - 1.0)) < 1e-12
        assert all(step["skipped"] for step in log["steps"])

    def test_decay1_single_step(self, decay1_metric):
        gr = g.build_grid(1024, "geometric-in-rho", 1e-4)
        m2, theta, log = ya.condition_at_infinity(decay1_metric, 2, gr)
        step = log["steps"][0]
        assert not step["skipped"]
        # fitted tau = 32 c and correction u = tau / (2 (k+1)(n-1)(n-k)) = tau/16
        assert step["tau"] == pytest.approx(3.0, abs=1e-3)
        assert step["u"] == pytest.approx(step["tau"] / 16.0, rel=1e-12)
        assert step["pre_decay"] == pytest.approx(1.0, abs=0.05)
        assert step["post_decay"] >= 1.9

    def test_decay_improves_by_at_least_09_per_step(self, decay1_metric):
        gr = g.build_grid(1024, "geometric-in-rho", 1e-4)
        _, _, log = ya.condition_at_infinity(decay1_metric, 2, gr)
        step = log["steps"][0]
        assert step["post_decay"] - step["pre_decay"] >= 0.9

    def test_order_n_obstructed(self, decay1_metric):
        gr = g.build_grid(512, "geometric-in-rho", 1e-4)
        with pytest.raises(ObstructionError):
            ya.condition_at_infinity(decay1_metric, 3, gr)

    def test_accumulated_factor_positive_and_normalized(self, decay1_metric):
        gr = g.build_grid(1024, "geometric-in-rho", 1e-4)
        _, theta, _ = ya.condition_at_infinity(decay1_metric, 2, gr)
        assert np.all(theta.values > 0)
        assert abs(theta.values[-1] - 1.0) < 1e-2  # -> 1 toward the boundary


class TestBarrier:
    def test_hyperbolic_upper_barrier_is_zero(self):
        m = geo.hyperbolic_ball(3)
        gr = g.build_grid(512, "uniform-in-r", 1e-4)
        consts = ya.Constants(3)
        cfg = ya.YamabeConfig()
        scaled, _ = ya.lower_scalar_curvature(m, gr, cfg, consts)
        barrier = ya.build_upper_barrier(scaled, cfg, consts)
        assert barrier.K == 0.0
        assert np.max(np.abs(barrier.u_plus)) == 0.0
        assert np.min(barrier.v.values) >= 0.0

    def test_supersolution_inequality_pointwise(self, decay1_metric):
        gr = g.build_grid(768, "uniform-in-r", 1e-4)
        consts = ya.Constants(3)
        cfg = ya.YamabeConfig()
        conditioned, _, _ = ya.condition_at_infinity(decay1_metric, 2, gr, cfg)
        scaled, _ = ya.lower_scalar_curvature(conditioned, gr, cfg, consts)
        barrier = ya.build_upper_barrier(scaled, cfg, consts)
        F, _ = ya._nonlinearity(consts, scaled.R)
        assert np.max(F(barrier.u_plus)) <= 1e-9
        assert barrier.c > 0.0

    def test_precondition_enforced(self, decay1_metric):
        # skipping the lowering stage leaves R above the hyperbolic value
        gr = g.build_grid(512, "uniform-in-r", 1e-4)
        consts = ya.Constants(3)
        cfg = ya.YamabeConfig()
        R = decay1_metric.scalar_curvature_physical_arrays(gr.r)
        scaled = ya.ConformalGridMetric(decay1_metric, gr, np.ones(gr.size), R)
        with pytest.raises(PreconditionError):
            ya.build_upper_barrier(scaled, cfg, consts)


class TestLambda:
    def test_hyperbolic_value(self):
        # sup(-F') at z = 0 is -Rbreve (q_n - 1) + R = 30 - 6 = 24; margin 10%
        m = geo.hyperbolic_ball(3)
        gr = g.build_grid(256, "uniform-in-r", 1e-3)
        consts = ya.Constants(3)
        scaled = ya.ConformalGridMetric(
            m, gr, np.ones(gr.size), np.full(gr.size, -6.0))
        lam = ya.lambda_for_monotonicity(scaled, np.zeros(gr.size), consts)
        assert lam == pytest.approx(26.4, rel=1e-12)

    def test_larger_barrier_never_decreases_lambda(self):
        m = geo.hyperbolic_ball(3)
        gr = g.build_grid(256, "uniform-in-r", 1e-3)
        consts = ya.Constants(3)
        scaled = ya.ConformalGridMetric(
            m, gr, np.ones(gr.size), np.full(gr.size, -6.0))
        u_plus = 0.3 * gr.rho
        lam1 = ya.lambda_for_monotonicity(scaled, u_plus, consts)
        lam2 = ya.lambda_for_monotonicity(scaled, 2.0 * u_plus, consts)
        assert lam2 >= lam1

    def test_shifted_nonlinearity_nondecreasing_on_samples(self, decay1_metric):
        gr = g.build_grid(512, "uniform-in-r", 1e-4)
        consts = ya.Constants(3)
        cfg = ya.YamabeConfig()
        conditioned, _, _ = ya.condition_at_infinity(decay1_metric, 2, gr, cfg)
        scaled, _ = ya.lower_scalar_curvature(conditioned, gr, cfg, consts)
        barrier = ya.build_upper_barrier(scaled, cfg, consts)
        lam = ya.lambda_for_monotonicity(scaled, barrier.u_plus, consts)
        F, _ = ya._nonlinearity(consts, scaled.R)
        zs = np.linspace(0.0, np.max(barrier.u_plus), 64)
        vals = np.array([F(z) + lam * z for z in zs])
        assert np.all(np.diff(vals, axis=0) >= -1e-10)


class TestMonotoneIterate:
    def test_hyperbolic_converges_immediately(self):
        m = geo.hyperbolic_ball(3)
        gr = g.build_grid(512, "uniform-in-r", 1e-4)
        consts = ya.Constants(3)
        cfg = ya.YamabeConfig()
        scaled, _ = ya.lower_scalar_curvature(m, gr, cfg, consts)
        barrier = ya.build_upper_barrier(scaled, cfg, consts)
        lam = ya.lambda_for_monotonicity(scaled, barrier.u_plus, consts)
        u, trace = ya.monotone_iterate(scaled, lam, barrier, cfg, consts)
        assert trace["iterations"] <= 2
        assert np.max(np.abs(u.values)) < 1e-10

    def test_ordering_and_contraction(self, decay1_metric):
        gr = g.build_grid(768, "uniform-in-r", 1e-4)
        consts = ya.Constants(3)
        cfg = ya.YamabeConfig()
        conditioned, _, _ = ya.condition_at_infinity(decay1_metric, 2, gr, cfg)
        scaled, _ = ya.lower_scalar_curvature(conditioned, gr, cfg, consts)
        barrier = ya.build_upper_barrier(scaled, cfg, consts)
        lam = ya.lambda_for_monotonicity(scaled, barrier.u_plus, consts)
        u, trace = ya.monotone_iterate(scaled, lam, barrier, cfg, consts)
        # sandwiched between the barriers
        assert np.min(u.values) >= -1e-10
        assert np.max(u.values - barrier.u_plus) <= 1e-10
        ratios = trace["contraction_ratios"]
        assert all(r < 1.0 for r in ratios[1:])
        assert trace["fixed_point_residual"] <= 10.0 * cfg.tol * lam

    def test_larger_shift_same_limit(self, decay1_metric):
        gr = g.build_grid(512, "uniform-in-r", 1e-4)
        consts = ya.Constants(3)
        cfg = ya.YamabeConfig()
        conditioned, _, _ = ya.condition_at_infinity(decay1_metric, 2, gr, cfg)
        scaled, _ = ya.lower_scalar_curvature(conditioned, gr, cfg, consts)
        barrier = ya.build_upper_barrier(scaled, cfg, consts)
        lam = ya.lambda_for_monotonicity(scaled, barrier.u_plus, consts)
        u1, _ = ya.monotone_iterate(scaled, lam, barrier, cfg, consts)
        u2, _ = ya.monotone_iterate(scaled, 2.0 * lam, barrier, cfg, consts)
        assert np.max(np.abs(u1.values - u2.values)) < 50.0 * cfg.tol


class TestYamabeSolve:
    @pytest.mark.parametrize("n", [3, 4])
    def test_hyperbolic_identity_factor(self, n):
        m = geo.hyperbolic_ball(n)
        gr = g.build_grid(512, "uniform-in-r", 1e-4)
        theta, rep = ya.yamabe_solve(m, gr)
        assert np.max(np.abs(theta.values - 1.0)) <= 1e-8

    def test_round_trip_uniqueness_oracle(self):
        m = geo.conformal_hyperbolic(3, 0.1, 2, 1.0)
        errs = []
        for N in (512, 1024):
            gr = g.build_grid(N, "uniform-in-r", 1e-4)
            theta, _ = ya.yamabe_solve(m, gr)
            phi = 1.0 + 0.1 * gr.rho ** 2
            errs.append(np.max(np.abs(theta.values * phi - 1.0)))
        assert errs[0] < 1e-6
        assert np.log2(errs[0] / errs[1]) > 1.8

    def test_perturbed_family_residual_second_order(self):
        m = geo.perturbed_hyperbolic(3, 0.05, 3)
        resids = []
        for N in (512, 1024):
            gr = g.build_grid(N, "uniform-in-r", 1e-4)
            _, rep = ya.yamabe_solve(m, gr)
            resids.append(rep.residual_sup)
        assert np.log2(resids[0] / resids[1]) > 1.8

    def test_inadmissible_metric_rejected(self):
        m = geo.scaled_hyperbolic(3, 1.21)
        gr = g.build_grid(256, "uniform-in-r", 1e-3)
        with pytest.raises(PreconditionError):
            ya.yamabe_solve(m, gr)

    def test_uniqueness_across_configurations(self):
        # different shift margin, grid resolution and conditioning order must
        # agree on the conformal factor within the combined tolerance
        m = geo.conformal_hyperbolic(3, 0.09375, 1, 1.0)
        gr1 = g.build_grid(1024, "uniform-in-r", 1e-4)
        gr2 = g.build_grid(2048, "uniform-in-r", 1e-4)
        t1, _ = ya.yamabe_solve(m, gr1, ya.YamabeConfig(lambda_margin=0.1,
                                                        target_order=2))
        t2, _ = ya.yamabe_solve(m, gr2, ya.YamabeConfig(lambda_margin=0.5,
                                                        target_order=1))
        t2i = np.interp(gr1.r, gr2.r, t2.values)
        h2 = np.max(np.diff(gr1.r)) ** 2
        assert np.max(np.abs(t1.values - t2i)) < 5.0 * max(1e-10, h2) * 100

    def test_conformal_residual_symmetry(self):
        # composing the recovered factor with the perturbation reproduces the
        # hyperbolic coefficients
        m = geo.conformal_hyperbolic(3, 0.1, 2, 1.0)
        gr = g.build_grid(1024, "uniform-in-r", 1e-4)
        theta, _ = ya.yamabe_solve(m, gr)
        qn = 6.0
        a_rec = theta.values ** (qn - 2.0) * m.a.value(gr.r)
        a_hyp = geo.hyperbolic_ball(3).a.value(gr.r)
        assert np.max(np.abs(a_rec - a_hyp)) < 1e-5

    def test_flat_family_solves(self):
        # the flat ball satisfies the boundary normalization with this
        # defining function, so the pipeline accepts it
        m = geo.flat_ball(3)
        gr = g.build_grid(512, "uniform-in-r", 1e-4)
        # the deep interior well (R(0) = -48) forces a large shift and a
        # contraction ratio near 0.91, so the default iteration cap is short
        theta, rep = ya.yamabe_solve(m, gr, ya.YamabeConfig(max_iter=400))
        assert np.all(theta.values > 0)
        ratios = rep.iteration["contraction_ratios"]
        assert all(r < 1.0 for r in ratios[1:])


class TestVerifySolution:
    def test_exact_factor_residual_at_floor(self):
        m = geo.hyperbolic_ball(3)
        gr = g.build_grid(512, "uniform-in-r", 1e-4)
        diag = ya.verify_solution(m, geo.ConformalFactor.constant(1.0), gr)
        assert diag["residual_sup"] < 1e-8

    def test_round_trip_inverse_factor(self):
        m = geo.conformal_hyperbolic(3, 0.1, 2, 1.0)
        gr = g.build_grid(1024, "uniform-in-r", 1e-4)
        inv = GridFunction(gr, 1.0 / (1.0 + 0.1 * gr.rho ** 2))
        diag = ya.verify_solution(m, inv, gr)
        assert diag["residual_sup"] < 1e-3  # O(h^2) through the discrete route

    def test_wrong_factor_flagged(self):
        n = 3
        m = geo.hyperbolic_ball(n)
        gr = g.build_grid(512, "uniform-in-r", 1e-4)
        diag = ya.verify_solution(m, geo.ConformalFactor.constant(1.01), gr)
        expected = n * (n - 1) * abs(1.01 ** (2.0 - 6.0) - 1.0)
        assert diag["residual_sup"] == pytest.approx(expected, rel=1e-6)

    def test_theta_decay_reported(self):
        m = geo.conformal_hyperbolic(3, 0.1, 2, 1.0)
        gr = g.build_grid(1024, "uniform-in-r", 1e-4)
        theta, rep = ya.yamabe_solve(m, gr)
        assert rep.theta_decay["beta"] == pytest.approx(2.0, abs=0.1)
