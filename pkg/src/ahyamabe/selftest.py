"""Cross-module invariant battery behind the `selftest` subcommand.

Each check returns (name, passed, detail).  The battery is deterministic for
a fixed seed; AHY_THREADS caps the worker pool used to run independent
checks, with results reported in submission order.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import elliptic, fspaces, geometry, mollify, yamabe
from . import grid as gridmod
from .errors import ObstructionError
from .grid import GridFunction


def worker_count():
    raw = os.environ.get("AHY_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _check_hyperbolic_identity(seed):
    worst = 0.0
    for n in (3, 4, 5):
        m = geometry.hyperbolic_ball(n)
        gr = gridmod.build_grid(256, "uniform-in-r", 1e-3)
        vals = m.scalar_curvature_physical_arrays(gr.r)
        worst = max(worst, float(np.max(np.abs(vals + n * (n - 1)))))
    return worst < 1e-9, f"max |R[g] + n(n-1)| = {worst:.3e}"


def _check_warped_oracle(seed):
    # arclength-gauge finite differences, independent of the analytic derivatives
    m = geometry.perturbed_hyperbolic(3, 0.1, 2)
    worst = 0.0
    for r0 in (0.2, 0.45, 0.7):
        h = 0.01
        offs = np.arange(-3, 4)
        rr = r0 + offs * h
        c = m.areal_radius().value(rr)
        a = m.a.value(rr)
        w1 = np.array([-1, 9, -45, 0, 45, -9, 1]) / (60.0 * h)
        s_prime = np.sqrt(a)
        cdot = (w1 @ c) / s_prime[3]
        cdot_samples = (np.vstack([np.roll(np.eye(7)[3], k) for k in range(-0, 1)]) @ c)
        # cdot at all 7 nodes via 5-point interior stencils
        w1_5 = np.array([1, -8, 0, 8, -1]) / (12.0 * h)
        cdots = np.array([w1_5 @ c[i - 2:i + 3] for i in range(2, 5)]) / s_prime[2:5]
        cddot = (np.array([-1, 0, 1]) / (2 * h) @ cdots) / s_prime[3]
        n = m.n
        oracle = (-2 * (n - 1) * cddot / c[3]
                  + (n - 1) * (n - 2) * (1 - cdots[1] ** 2) / c[3] ** 2)
        worst = max(worst, abs(oracle - m.scalar_curvature_compactified(r0)))
    return worst < 1e-6, f"max |warped formula - arclength FD| = {worst:.3e}"


def _check_power_law_identity(seed):
    m = geometry.hyperbolic_ball(3)
    gr = gridmod.build_grid(512, "uniform-in-r", 0.02)
    worst = 0.0
    for alpha in (0.5, 1.0, 2.0):
        u = GridFunction(gr, gr.rho ** alpha)
        lhs = -gridmod.laplace_beltrami_arrays(m, gr, u.values)
        rhs = geometry.minus_laplacian_power_law(m, gr, alpha)
        worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return worst < 5e-4, f"max power-law defect = {worst:.3e}"


def _check_cross_formula(seed):
    m = geometry.hyperbolic_ball(3)
    theta = geometry.ConformalFactor.power_law(0.1, 2)
    gaps = []
    for N in (256, 512):
        gr = gridmod.build_grid(N, "uniform-in-r", 1e-3)
        pred = geometry.conformal_scalar_curvature(m, theta, gr)
        direct = geometry.scalar_curvature_physical(
            geometry.conformal_change_metric(m, theta), gr)
        gaps.append(float(np.max(np.abs(pred.values - direct.values))))
    order = np.log2(gaps[0] / gaps[1])
    return order > 1.5, f"gap {gaps[0]:.2e} -> {gaps[1]:.2e}, order {order:.2f}"


def _check_quadrature_scaling(seed):
    m = geometry.hyperbolic_ball(3)
    gr = gridmod.build_grid(256, "geometric-in-rho", 1e-3)
    u = GridFunction(gr, np.sin(gr.r) + 1.5)
    beta = 0.7
    lhs = gridmod.quadrature_weighted(
        m, GridFunction(gr, gr.rho ** beta * u.values), 2.0, 0.4 + beta)
    rhs = gridmod.quadrature_weighted(m, u, 2.0, 0.4)
    rel = abs(lhs - rhs) / rhs
    return rel < 1e-12, f"scaling identity relative gap = {rel:.3e}"


def _check_norm_monotonicity(seed):
    m = geometry.hyperbolic_ball(3)
    gr = gridmod.build_grid(512, "geometric-in-rho", 1e-3)
    u = GridFunction(gr, gr.rho ** 1.2 * (1 + 0.2 * np.sin(gr.r)))
    vals = [fspaces.weighted_sobolev_norm(m, u, fspaces.WeightSpec(k, 2.0, 0.5))
            for k in (0, 1, 2)]
    ok = vals[0] <= vals[1] <= vals[2]
    return ok, f"norms by k: {vals[0]:.5g} <= {vals[1]:.5g} <= {vals[2]:.5g}"


def _check_inclusion(seed):
    n, p = 3, 2.0
    m = geometry.hyperbolic_ball(n)
    ratios = []
    for eps in (1e-2, 1e-3):
        gr = gridmod.build_grid(768, "geometric-in-rho", eps)
        cover = fspaces.MobiusCover.for_grid(gr)
        dp = 0.3
        dd = dp + (n - 1) / p + 0.3
        for fn in (lambda r: gridmod.rho_of_r(r),
                   lambda r: gridmod.rho_of_r(r) ** 1.5,
                   lambda r: gridmod.rho_of_r(r) ** 2 * (1 + 0.3 * np.sin(r))):
            u = gridmod.from_callable(gr, fn)
            w = fspaces.weighted_sobolev_norm(m, u, fspaces.WeightSpec(1, p, dp))
            gs, _, _ = fspaces.gs_norm(u, fspaces.WeightSpec(1, p, dd), cover)
            ratios.append(w / gs)
    c = max(ratios)
    return c < 10.0, f"corpus constant C = {c:.3f}"


def _check_fredholm_predicates(seed):
    ok = (elliptic.indicial_radius(0, 3) == 1.0
          and elliptic.indicial_radius(3, 3) == 2.0
          and elliptic.indicial_radius(0, 5) == 2.0)
    for n in (3, 4, 5):
        R0 = elliptic.indicial_radius(0.0, n)
        Rn = elliptic.indicial_radius(float(n), n)
        ok = ok and not elliptic.fredholm_range_x(0.0, n, R0)
        ok = ok and elliptic.fredholm_range_x(0.5 * (n - 1), n, R0)
        ok = ok and not elliptic.fredholm_range_x(-1.0, n, Rn)
        ok = ok and not elliptic.fredholm_range_x(float(n), n, Rn)
        ok = ok and elliptic.fredholm_range_x(float(n) - 0.5, n, Rn)
    return ok, "window endpoints excluded, centers included"


def _check_range_symmetry(seed):
    rng = np.random.default_rng(seed)
    for _ in range(200):
        delta = rng.uniform(-6, 6)
        q = rng.uniform(1.01, 40.0)
        R = rng.uniform(0.1, 4.0)
        n = int(rng.integers(2, 7))
        qs = q / (q - 1.0)
        if elliptic.fredholm_range_h(delta, q, n, R) \
                != elliptic.fredholm_range_h(-delta, qs, n, R):
            return False, f"symmetry failed at delta={delta:.3f} q={q:.3f}"
    return True, "duality symmetry on 200 random samples"


def _check_weak_l2(seed):
    rng = np.random.default_rng(seed + 1)
    for _ in range(20):
        s = rng.uniform(0.2, 4.0)
        p = rng.uniform(1.05, 8.0)
        d = int(rng.integers(1, 5))
        n = int(rng.integers(2, 6))
        pred = elliptic.weak_l2_condition(s, p, d, n)
        brute = elliptic.compatible_indices_nonempty_bruteforce(s, p, d, n)
        if pred != brute:
            return False, f"mismatch at s={s:.3f} p={p:.3f} d={d} n={n}"
    return True, "brute-force grid search matches on 20 random triples"


def _check_max_principle(seed):
    m = geometry.hyperbolic_ball(3)
    gr = gridmod.build_grid(384, "geometric-in-rho", 1e-4)
    rng = np.random.default_rng(seed + 2)
    worst = 0.0
    for lam in (0.5, 3.0):
        op = elliptic.shifted_operator(m, gr, lam)
        for _ in range(20):
            f = rng.uniform(0.0, 1.0, gr.size)
            u = op.solve(f, outer_value=0.0)
            worst = min(worst, float(u.min()))
    return worst >= -1e-12, f"worst minimum = {worst:.3e}"


def _check_exponents(seed):
    m = geometry.hyperbolic_ball(3)
    ok = True
    details = []
    for lam, expect in ((0.0, (0.0, 2.0)), (3.0, (-1.0, 3.0))):
        fit = elliptic.homogeneous_exponents(m, lam, eps=1e-5)
        err = max(abs(fit["delta_minus"] - expect[0]),
                  abs(fit["delta_plus"] - expect[1]))
        details.append(f"Lambda={lam}: err={err:.2e}")
        ok = ok and err < 1e-3
    return ok, "; ".join(details)


def _check_solvability(seed):
    m = geometry.hyperbolic_ball(3)
    gr = gridmod.build_grid(1024, "geometric-in-rho", 1e-5)
    lam = 3.0
    op = elliptic.shifted_operator(m, gr, lam)
    window = (1e-3, 2e-2)
    # interior weight: fitted decay tracks the source power
    ok = True
    details = []
    for delta in (0.5, 1.5):
        u = op.solve(gr.rho ** delta, outer_value=0.0)
        beta, _ = fspaces.decay_exponent(GridFunction(gr, u), window)
        ok = ok and abs(beta - delta) < 0.05
        details.append(f"delta={delta}: fitted {beta:.3f}")
    # lower endpoint: homogeneous contamination caps the decay
    u = op.solve(gr.rho ** (-1.0), outer_value=0.0)
    beta, _ = fspaces.decay_exponent(GridFunction(gr, u), window)
    ok = ok and beta <= -1.0 + 0.05
    details.append(f"endpoint: fitted {beta:.3f}")
    return ok, "; ".join(details)


def _check_yamabe_hyperbolic(seed):
    worst = 0.0
    for n in (3, 4):
        m = geometry.hyperbolic_ball(n)
        gr = gridmod.build_grid(512, "uniform-in-r", 1e-4)
        theta, _ = yamabe.yamabe_solve(m, gr)
        worst = max(worst, float(np.max(np.abs(theta.values - 1.0))))
    return worst <= 1e-8, f"max |Theta - 1| = {worst:.3e}"


def _check_yamabe_roundtrip(seed):
    m = geometry.conformal_hyperbolic(3, 0.1, 2, 1.0)
    gr = gridmod.build_grid(1024, "uniform-in-r", 1e-4)
    theta, rep = yamabe.yamabe_solve(m, gr)
    phi = 1.0 + 0.1 * gr.rho ** 2
    err = float(np.max(np.abs(theta.values * phi - 1.0)))
    ratios = rep.iteration["contraction_ratios"]
    ok = err < 1e-6 and all(r < 1.0 for r in ratios[1:])
    return ok, f"|Theta phi - 1| = {err:.3e}, iterations {rep.iteration['iterations']}"


def _check_conditioning(seed):
    m = geometry.conformal_hyperbolic(3, 0.09375, 1, 1.0)
    gr = gridmod.build_grid(1024, "geometric-in-rho", 1e-4)
    _, _, log = yamabe.condition_at_infinity(m, 2, gr)
    step = log["steps"][0]
    improved = step["post_decay"] is not None and step["post_decay"] >= 1.9
    try:
        yamabe.condition_at_infinity(m, 3, gr)
        obstructed = False
    except ObstructionError:
        obstructed = True
    ok = improved and obstructed and not step["skipped"]
    return ok, (f"decay {step['pre_decay']:.2f} -> {step['post_decay']:.2f}, "
                f"obstruction at order n raised: {obstructed}")


def _check_monotone_invariants(seed):
    report = []
    ok = True
    for maker in (lambda: geometry.hyperbolic_ball(3),
                  lambda: geometry.conformal_hyperbolic(3, 0.09375, 1, 1.0),
                  lambda: geometry.perturbed_hyperbolic(3, 0.05, 3),
                  lambda: geometry.flat_ball(3)):
        m = maker()
        gr = gridmod.build_grid(512, "uniform-in-r", 1e-4)
        theta, rep = yamabe.yamabe_solve(m, gr, yamabe.YamabeConfig(max_iter=400))
        ratios = rep.iteration["contraction_ratios"]
        fam = m.provenance["family"]
        good = all(r < 1.0 for r in ratios[1:]) and np.all(theta.values > 0)
        ok = ok and good
        report.append(f"{fam}: iters {rep.iteration['iterations']}")
    return ok, "; ".join(report)


def _check_mollify(seed):
    kernel = mollify.Kernel(quad_points=40)
    u = mollify.build_field(lambda x, y: np.full_like(x, 2.0), nx=64, ny=56)
    c = mollify.h_convolve(u, kernel)
    const_err = float(np.max(np.abs(c.values - 2.0)))
    f = mollify.build_field(lambda x, y: np.sin(x) + y * np.cos(x), nx=64, ny=56)
    conv = mollify.h_convolve(f, kernel)
    base = f.restrict_y(conv.y[0], conv.y[-1])
    gap = mollify.HalfSpaceField(conv.x, conv.y, conv.values - base.values, conv.period)
    beta, _ = mollify.decay_fit(gap)
    expansion = mollify.taylor_expand(
        mollify.build_field(lambda x, y: np.sin(x) + y * np.cos(x), nx=64, ny=56),
        1, kernel)
    rem_beta = expansion["remainder_decay"][0]
    ok = const_err < 1e-10 and beta >= 0.9 and rem_beta >= 0.85
    return ok, (f"const err {const_err:.1e}, trace-preservation decay {beta:.2f}, "
                f"m=1 remainder decay {rem_beta:.2f}")


CHECKS = [
    ("geometry.hyperbolic_identity", _check_hyperbolic_identity),
    ("geometry.warped_oracle", _check_warped_oracle),
    ("geometry.power_law_identity", _check_power_law_identity),
    ("geometry.cross_formula", _check_cross_formula),
    ("grid.quadrature_scaling", _check_quadrature_scaling),
    ("fspaces.norm_monotonicity", _check_norm_monotonicity),
    ("fspaces.inclusion_constant", _check_inclusion),
    ("elliptic.fredholm_predicates", _check_fredholm_predicates),
    ("elliptic.range_symmetry", _check_range_symmetry),
    ("elliptic.weak_l2_equivalence", _check_weak_l2),
    ("elliptic.max_principle", _check_max_principle),
    ("elliptic.homogeneous_exponents", _check_exponents),
    ("elliptic.solvability_window", _check_solvability),
    ("yamabe.hyperbolic_fixed_point", _check_yamabe_hyperbolic),
    ("yamabe.conformal_roundtrip", _check_yamabe_roundtrip),
    ("yamabe.conditioning", _check_conditioning),
    ("yamabe.monotone_invariants", _check_monotone_invariants),
    ("mollify.suite", _check_mollify),
]


def run_all(seed=0):
    """Run every invariant check; returns a list of dicts in a fixed order."""
    results = []
    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        futures = [(name, pool.submit(fn, seed)) for name, fn in CHECKS]
        for name, fut in futures:
            try:
                passed, detail = fut.result()
            except Exception as exc:  # a crashed check is a failed check
                passed, detail = False, f"exception: {exc}"
            results.append({"name": name, "passed": bool(passed), "detail": detail})
    return results
