"""Radial conformally compact metrics and their curvature.

A metric is stored through its compactified coefficients,
``gbar = a(r) dr^2 + b(r) r^2 dOmega^2`` on the unit ball, with the physical
metric ``g = rho^-2 gbar`` and the fixed defining function
``rho = (1 - r^2)/(1 + r^2)``.  Coefficients carry hand-coded first and
second derivatives so every curvature quantity below is analytic; no
symbolic engine is involved.

Builtin families: the hyperbolic ball (a = b = 4/(1+r^2)^2), the flat ball,
conformal deformations by factors (1 + c rho^k)^sigma, coefficient
perturbations a_hyp (1 + alpha rho^j), and globally scaled coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import grid as gridmod
from .errors import (DimensionError, MetricDegeneracyError, ParameterError,
                     PositivityError)
from .grid import GridFunction, d2rho_dr2, drho_dr, rho_of_r


# ---------------------------------------------------------------------------
# C^2 coefficient functions of r, closed under products
# ---------------------------------------------------------------------------

class Coefficient:
    """A positive C^2 function of r on [0, 1] with analytic derivatives."""

    def value(self, r):
        raise NotImplementedError

    def d1(self, r):
        raise NotImplementedError

    def d2(self, r):
        raise NotImplementedError

    def eval_all(self, r):
        return self.value(r), self.d1(r), self.d2(r)


class ConstantCoefficient(Coefficient):
    def __init__(self, c):
        self.c = float(c)

    def value(self, r):
        return np.full_like(np.asarray(r, dtype=float), self.c)

    def d1(self, r):
        return np.zeros_like(np.asarray(r, dtype=float))

    d2 = d1


class HyperbolicCoefficient(Coefficient):
    """4/(1 + r^2)^2, the stereographic round-sphere coefficient."""

    def value(self, r):
        r = np.asarray(r, dtype=float)
        return 4.0 / (1.0 + r * r) ** 2

    def d1(self, r):
        r = np.asarray(r, dtype=float)
        return -16.0 * r / (1.0 + r * r) ** 3

    def d2(self, r):
        r = np.asarray(r, dtype=float)
        return (-16.0 + 80.0 * r * r) / (1.0 + r * r) ** 4


class ProductCoefficient(Coefficient):
    def __init__(self, f, g):
        self.f = f
        self.g = g

    def value(self, r):
        return self.f.value(r) * self.g.value(r)

    def d1(self, r):
        return self.f.d1(r) * self.g.value(r) + self.f.value(r) * self.g.d1(r)

    def d2(self, r):
        return (self.f.d2(r) * self.g.value(r)
                + 2.0 * self.f.d1(r) * self.g.d1(r)
                + self.f.value(r) * self.g.d2(r))


class RhoComposedCoefficient(Coefficient):
    """phi(rho(r)) for a RhoFunction phi, via the chain rule."""

    def __init__(self, phi):
        self.phi = phi

    def value(self, r):
        return self.phi.value(rho_of_r(r))

    def d1(self, r):
        return self.phi.d1(rho_of_r(r)) * drho_dr(r)

    def d2(self, r):
        rho = rho_of_r(r)
        rp = drho_dr(r)
        return self.phi.d2(rho) * rp * rp + self.phi.d1(rho) * d2rho_dr2(r)


# ---------------------------------------------------------------------------
# C^2 functions of rho (conformal-factor profiles)
# ---------------------------------------------------------------------------

class RhoFunction:
    def value(self, rho):
        raise NotImplementedError

    def d1(self, rho):
        raise NotImplementedError

    def d2(self, rho):
        raise NotImplementedError


class ConstantFactor(RhoFunction):
    def __init__(self, c):
        self.c = float(c)

    def value(self, rho):
        return np.full_like(np.asarray(rho, dtype=float), self.c)

    def d1(self, rho):
        return np.zeros_like(np.asarray(rho, dtype=float))

    d2 = d1


class PowerLawFactor(RhoFunction):
    """(1 + c rho^k)^sigma; boundary-normalized since the value at rho=0 is 1."""

    def __init__(self, c, k, sigma=1.0):
        if k < 1:
            raise ParameterError("power-law factor needs k >= 1")
        self.c = float(c)
        self.k = float(k)
        self.sigma = float(sigma)

    def _base(self, rho):
        rho = np.asarray(rho, dtype=float)
        return 1.0 + self.c * rho ** self.k

    def value(self, rho):
        return self._base(rho) ** self.sigma

    def d1(self, rho):
        rho = np.asarray(rho, dtype=float)
        base = self._base(rho)
        return self.sigma * base ** (self.sigma - 1.0) * self.c * self.k * rho ** (self.k - 1.0)

    def d2(self, rho):
        rho = np.asarray(rho, dtype=float)
        base = self._base(rho)
        bp = self.c * self.k * rho ** (self.k - 1.0)
        bpp = self.c * self.k * (self.k - 1.0) * rho ** (self.k - 2.0) if self.k != 1.0 \
            else np.zeros_like(rho)
        s = self.sigma
        return s * (s - 1.0) * base ** (s - 2.0) * bp * bp + s * base ** (s - 1.0) * bpp


class BumpCorrectionFactor(RhoFunction):
    """1 + eta(rho) rho^k u with a quintic cutoff eta supported in rho < rho_cut.

    eta = 1 on rho <= rho_cut/2 and 0 on rho >= rho_cut, C^2 across the joins.
    """

    def __init__(self, u, k, rho_cut=0.2):
        if k < 1:
            raise ParameterError("correction order k must be >= 1")
        if not 0.0 < rho_cut < 1.0:
            raise ParameterError("rho_cut must lie in (0, 1)")
        self.u = float(u)
        self.k = int(k)
        self.rho_cut = float(rho_cut)

    def _eta(self, rho):
        lo, hi = self.rho_cut / 2.0, self.rho_cut
        x = np.clip((np.asarray(rho, dtype=float) - lo) / (hi - lo), 0.0, 1.0)
        return 1.0 - x ** 3 * (10.0 - 15.0 * x + 6.0 * x * x)

    def _eta_d1(self, rho):
        lo, hi = self.rho_cut / 2.0, self.rho_cut
        rho = np.asarray(rho, dtype=float)
        x = (rho - lo) / (hi - lo)
        inside = (x > 0.0) & (x < 1.0)
        x = np.clip(x, 0.0, 1.0)
        d = -(30.0 * x * x - 60.0 * x ** 3 + 30.0 * x ** 4) / (hi - lo)
        return np.where(inside, d, 0.0)

    def _eta_d2(self, rho):
        lo, hi = self.rho_cut / 2.0, self.rho_cut
        rho = np.asarray(rho, dtype=float)
        x = (rho - lo) / (hi - lo)
        inside = (x > 0.0) & (x < 1.0)
        x = np.clip(x, 0.0, 1.0)
        d = -(60.0 * x - 180.0 * x * x + 120.0 * x ** 3) / (hi - lo) ** 2
        return np.where(inside, d, 0.0)

    def value(self, rho):
        rho = np.asarray(rho, dtype=float)
        return 1.0 + self._eta(rho) * rho ** self.k * self.u

    def d1(self, rho):
        rho = np.asarray(rho, dtype=float)
        k = self.k
        return self.u * (self._eta_d1(rho) * rho ** k
                         + self._eta(rho) * k * rho ** (k - 1))

    def d2(self, rho):
        rho = np.asarray(rho, dtype=float)
        k = self.k
        term = self._eta_d2(rho) * rho ** k \
            + 2.0 * self._eta_d1(rho) * k * rho ** (k - 1) \
            + self._eta(rho) * k * (k - 1) * (rho ** (k - 2) if k >= 2 else np.zeros_like(rho))
        return self.u * term


class PowerFactor(RhoFunction):
    """base(rho)^e for an arbitrary positive RhoFunction base."""

    def __init__(self, base, e):
        self.base = base
        self.e = float(e)

    def value(self, rho):
        return self.base.value(rho) ** self.e

    def d1(self, rho):
        return self.e * self.base.value(rho) ** (self.e - 1.0) * self.base.d1(rho)

    def d2(self, rho):
        v = self.base.value(rho)
        v1 = self.base.d1(rho)
        v2 = self.base.d2(rho)
        e = self.e
        return e * (e - 1.0) * v ** (e - 2.0) * v1 * v1 + e * v ** (e - 1.0) * v2


class ProductFactor(RhoFunction):
    def __init__(self, f, g):
        self.f = f
        self.g = g

    def value(self, rho):
        return self.f.value(rho) * self.g.value(rho)

    def d1(self, rho):
        return self.f.d1(rho) * self.g.value(rho) + self.f.value(rho) * self.g.d1(rho)

    def d2(self, rho):
        return (self.f.d2(rho) * self.g.value(rho)
                + 2.0 * self.f.d1(rho) * self.g.d1(rho)
                + self.f.value(rho) * self.g.d2(rho))


# ---------------------------------------------------------------------------
# Conformal factors
# ---------------------------------------------------------------------------

@dataclass
class ConformalFactor:
    """A positive conformal-factor profile Theta(rho) with analytic derivatives.

    ``boundary_normalized`` records whether Theta -> 1 as rho -> 0.
    """

    profile: RhoFunction
    family: str
    params: tuple
    boundary_normalized: bool = True

    @staticmethod
    def power_law(c, k, sigma=1.0):
        return ConformalFactor(PowerLawFactor(c, k, sigma), "power-law", (c, k, sigma),
                               boundary_normalized=True)

    @staticmethod
    def constant(value):
        return ConformalFactor(ConstantFactor(value), "constant", (value,),
                               boundary_normalized=(value == 1.0))

    @staticmethod
    def bump_correction(u, k, rho_cut=0.2):
        return ConformalFactor(BumpCorrectionFactor(u, k, rho_cut), "bump",
                               (u, k, rho_cut), boundary_normalized=True)

    def value(self, rho):
        return self.profile.value(rho)

    def sample(self, grid, label="Theta"):
        return GridFunction(grid, self.value(grid.rho), label)

    def check_positive(self, samples=4096):
        rho = np.linspace(0.0, 1.0, samples)
        v = self.value(rho)
        if np.any(v <= 0.0):
            raise PositivityError("conformal factor is not positive on [0, 1]")


# ---------------------------------------------------------------------------
# Radial metrics
# ---------------------------------------------------------------------------

class _ArealRadius:
    """c(r) = r sqrt(b(r)) with derivatives from b's."""

    def __init__(self, b):
        self.b = b

    def value(self, r):
        r = np.asarray(r, dtype=float)
        return r * np.sqrt(self.b.value(r))

    def d1(self, r):
        r = np.asarray(r, dtype=float)
        b, b1 = self.b.value(r), self.b.d1(r)
        s = np.sqrt(b)
        return s + r * b1 / (2.0 * s)

    def d2(self, r):
        r = np.asarray(r, dtype=float)
        b, b1, b2 = self.b.value(r), self.b.d1(r), self.b.d2(r)
        s = np.sqrt(b)
        s1 = b1 / (2.0 * s)
        s2 = b2 / (2.0 * s) - b1 * b1 / (4.0 * b * s)
        return 2.0 * s1 + r * s2


@dataclass
class RadialMetric:
    """Rotationally symmetric compactified metric a(r) dr^2 + b(r) r^2 dOmega^2."""

    n: int
    a: Coefficient
    b: Coefficient
    provenance: dict

    _SERIES_CUTOFF = 1e-4  # below this r the warped formula switches to its even limit

    def __post_init__(self):
        if self.n < 2:
            raise DimensionError("dimension must be at least 2")
        self._validate()

    def _validate(self, samples=2048):
        r = np.linspace(0.0, 1.0, samples)
        a, b = self.a.value(r), self.b.value(r)
        if np.any(a <= 0.0) or np.any(b <= 0.0):
            raise MetricDegeneracyError("coefficients a, b must be positive on [0, 1]")
        if abs(a[0] - b[0]) > 1e-10 * max(abs(a[0]), 1.0):
            raise MetricDegeneracyError("smoothness at the center requires a(0) = b(0)")

    # -- elementary fields --------------------------------------------------

    def areal_radius(self):
        return _ArealRadius(self.b)

    def ah_defect(self):
        """a(1) - 1; zero exactly when |d rho|_gbar = 1 at the boundary."""
        return float(self.a.value(np.array([1.0]))[0] - 1.0)

    @property
    def is_ah_admissible(self):
        return abs(self.ah_defect()) <= 1e-12

    def grad_rho_sq(self, r):
        """|d rho|^2_gbar = rho'(r)^2 / a(r)."""
        return drho_dr(r) ** 2 / self.a.value(r)

    def laplacian_rho_compactified(self, r):
        """Delta_gbar rho, with the even-extension value at r = 0."""
        r = np.asarray(r, dtype=float)
        a, a1 = self.a.value(r), self.a.d1(r)
        c = self.areal_radius()
        cv, c1 = c.value(r), c.d1(r)
        rp, rpp = drho_dr(r), d2rho_dr2(r)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = rpp / a - a1 * rp / (2.0 * a * a) + (self.n - 1) * c1 * rp / (cv * a)
        center = r == 0.0
        if np.any(center):
            out = np.where(center, self.n * d2rho_dr2(0.0) / self.a.value(np.zeros(1))[0], out)
        return out

    def laplacian_coefficients(self, r):
        """P, Q with Delta_g u = P u'' + Q u' for radial u.

        Q is singular at r = 0 (angular focusing term); callers override the
        center node via the even-extension limit.
        """
        P, Q_reg, A, _ = self.physical_laplacian_parts(r)
        return P, Q_reg + A

    def physical_laplacian_parts(self, r):
        """Split Delta_g = P d2 + (Q_reg + A) d1 with A the angular focusing
        term rho^2 (n-1) c'/(c a), singular like (n-1)/r at the center.

        gamma = r c'/c (-> 1 at the center) converts A u' into the
        second-order-safe substitute (A r) u'' near r = 0.
        """
        r = np.asarray(r, dtype=float)
        a, a1 = self.a.value(r), self.a.d1(r)
        c = self.areal_radius()
        cv, c1 = c.value(r), c.d1(r)
        rho = rho_of_r(r)
        rp = drho_dr(r)
        P = rho * rho / a
        Q_reg = -rho * rho * a1 / (2.0 * a * a) - (self.n - 2) * rho * rp / a
        with np.errstate(divide="ignore", invalid="ignore"):
            A = rho * rho * (self.n - 1) * c1 / (cv * a)
            gamma = r * c1 / cv
        A = np.where(r == 0.0, np.inf, A)
        gamma = np.where(r == 0.0, 1.0, gamma)
        return P, Q_reg, A, gamma

    # -- curvature ----------------------------------------------------------

    def scalar_curvature_compactified(self, r):
        """R[gbar] from the warped-product formula in the r gauge.

        With areal radius c(r) = r sqrt(b) and arclength second derivative
        cddot = c''/a - a' c'/(2 a^2),
        R = -2(n-1) cddot/c + (n-1)(n-2) (1 - c'^2/a)/c^2.
        Below the series cutoff the even-extension limit
        R(0) = -n(n-1) (3 b''(0) - a''(0)) / (2 a(0)^2) is used.
        """
        scalar_input = np.isscalar(r) or np.ndim(r) == 0
        r = np.atleast_1d(np.asarray(r, dtype=float))
        n = self.n
        a, a1 = self.a.value(r), self.a.d1(r)
        if np.any(a <= 0.0) or np.any(self.b.value(r) <= 0.0):
            raise MetricDegeneracyError("metric degenerate at evaluation points")
        c = self.areal_radius()
        cv, c1, c2 = c.value(r), c.d1(r), c.d2(r)
        with np.errstate(divide="ignore", invalid="ignore"):
            cddot = c2 / a - a1 * c1 / (2.0 * a * a)
            out = (-2.0 * (n - 1) * cddot / cv
                   + (n - 1) * (n - 2) * (1.0 - c1 * c1 / a) / (cv * cv))
        small = r < self._SERIES_CUTOFF
        if np.any(small):
            z = np.zeros(1)
            a0 = self.a.value(z)[0]
            a2 = self.a.d2(z)[0]
            b2 = self.b.d2(z)[0]
            limit = -n * (n - 1) * (3.0 * b2 - a2) / (2.0 * a0 * a0)
            out = np.where(small, limit, out)
        return float(out[0]) if scalar_input else out

    def scalar_curvature_physical_arrays(self, r):
        """Samples of R[g] for g = rho^-2 gbar.

        R[g] = -n(n-1)|d rho|^2_gbar + 2(n-1) rho Delta_gbar rho + rho^2 R[gbar].
        """
        n = self.n
        rho = rho_of_r(r)
        return (-n * (n - 1) * self.grad_rho_sq(r)
                + 2.0 * (n - 1) * rho * self.laplacian_rho_compactified(r)
                + rho * rho * self.scalar_curvature_compactified(r))


# ---------------------------------------------------------------------------
# Builtin families
# ---------------------------------------------------------------------------

def hyperbolic_ball(n):
    """The Poincare ball reference: a = b = 4/(1+r^2)^2, scalar curvature -n(n-1)."""
    if n < 2:
        raise DimensionError("hyperbolic ball needs n >= 2")
    coeff = HyperbolicCoefficient()
    return RadialMetric(n=n, a=coeff, b=coeff,
                        provenance={"family": "hyperbolic", "n": n, "params": []})


def flat_ball(n):
    """a = b = 1.  With this defining function the compactified flat ball still
    satisfies |d rho| = 1 at the boundary, so it is AH-admissible."""
    if n < 2:
        raise DimensionError("flat ball needs n >= 2")
    one = ConstantCoefficient(1.0)
    return RadialMetric(n=n, a=one, b=one,
                        provenance={"family": "flat", "n": n, "params": []})


def conformal_hyperbolic(n, c, k, sigma=1.0):
    """Theta^(q_n - 2) gbar_hyp with Theta = (1 + c rho^k)^sigma; AH-admissible."""
    theta = ConformalFactor.power_law(c, k, sigma)
    return conformal_change_metric(hyperbolic_ball(n), theta)


def perturbed_hyperbolic(n, alpha_a, j_a, alpha_b=None, j_b=None):
    """a = a_hyp (1 + alpha_a rho^j_a), b likewise; AH-admissible for |alpha| < 1."""
    if alpha_b is None:
        alpha_b = alpha_a
    if j_b is None:
        j_b = j_a
    base = HyperbolicCoefficient()
    fa = RhoComposedCoefficient(PowerLawFactor(alpha_a, j_a, 1.0))
    fb = RhoComposedCoefficient(PowerLawFactor(alpha_b, j_b, 1.0))
    return RadialMetric(
        n=n, a=ProductCoefficient(base, fa), b=ProductCoefficient(base, fb),
        provenance={"family": "perturbed", "n": n,
                    "params": [alpha_a, j_a, alpha_b, j_b]})


def scaled_hyperbolic(n, scale):
    """scale * gbar_hyp; violates the AH condition unless scale = 1."""
    if scale <= 0.0:
        raise MetricDegeneracyError("scale must be positive")
    base = HyperbolicCoefficient()
    f = ConstantCoefficient(scale)
    return RadialMetric(n=n, a=ProductCoefficient(base, f), b=ProductCoefficient(base, f),
                        provenance={"family": "scaled", "n": n, "params": [scale]})


def make_metric(family, n, params=()):
    """Config-facing factory for the builtin families."""
    params = list(params)
    if family == "hyperbolic":
        return hyperbolic_ball(n)
    if family == "flat":
        return flat_ball(n)
    if family == "conformal":
        if len(params) not in (2, 3):
            raise ParameterError("conformal family needs params [c, k] or [c, k, sigma]")
        sigma = params[2] if len(params) == 3 else 1.0
        return conformal_hyperbolic(n, params[0], params[1], sigma)
    if family == "perturbed":
        if len(params) not in (2, 4):
            raise ParameterError(
                "perturbed family needs params [alpha, j] or [alpha_a, j_a, alpha_b, j_b]")
        if len(params) == 2:
            return perturbed_hyperbolic(n, params[0], params[1])
        return perturbed_hyperbolic(n, params[0], params[1], params[2], params[3])
    if family == "scaled":
        if len(params) != 1:
            raise ParameterError("scaled family needs params [scale]")
        return scaled_hyperbolic(n, params[0])
    raise ParameterError(f"unknown metric family {family!r}")


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def ah_defect(metric):
    return metric.ah_defect()


def scalar_curvature_compactified(metric, r):
    return metric.scalar_curvature_compactified(r)


def scalar_curvature_physical(metric, grid):
    """GridFunction of R[g] sampled analytically; approaches -n(n-1) for
    AH-admissible metrics."""
    vals = metric.scalar_curvature_physical_arrays(grid.r)
    return GridFunction(grid, vals, label="R_physical")


def critical_exponent(n):
    """q_n = 2n/(n-2); undefined in dimension 2."""
    if n < 3:
        raise DimensionError("critical exponent undefined for n < 3")
    return 2.0 * n / (n - 2.0)


def scale_metric(metric, factor_profile, tag="scaled-by-factor"):
    """New compactified metric phi(rho) * gbar for a positive profile phi."""
    f = RhoComposedCoefficient(factor_profile)
    prov = dict(metric.provenance)
    history = list(prov.get("history", []))
    history.append(tag)
    prov["history"] = history
    return RadialMetric(n=metric.n, a=ProductCoefficient(metric.a, f),
                        b=ProductCoefficient(metric.b, f), provenance=prov)


def conformal_change_metric(metric, theta):
    """Compactified metric of Theta^(q_n - 2) g, i.e. coefficients scaled by
    Theta^(q_n - 2).  AH admissibility is preserved exactly when Theta(0) = 1."""
    qn = critical_exponent(metric.n)
    theta.check_positive()
    profile = PowerFactor(theta.profile, qn - 2.0)
    return scale_metric(metric, profile,
                        tag=f"conformal:{theta.family}{tuple(theta.params)}")


def conformal_scalar_curvature(metric, theta, grid):
    """Predicted R[Theta^(q_n-2) g] via the conformal-change identity,

    R = (-(q_n + 2) Delta_g Theta + R[g] Theta) Theta^(1 - q_n),

    with Delta_g applied discretely to the Theta samples.  Accepts either a
    ConformalFactor or a positive GridFunction.
    """
    qn = critical_exponent(metric.n)
    if isinstance(theta, GridFunction):
        th = theta.values
    else:
        th = theta.value(grid.rho)
    if np.any(th <= 0.0):
        raise PositivityError("conformal factor must be positive on the grid")
    lap = gridmod.laplace_beltrami_arrays(metric, grid, th)
    rg = metric.scalar_curvature_physical_arrays(grid.r)
    vals = (-(qn + 2.0) * lap + rg * th) * th ** (1.0 - qn)
    return GridFunction(grid, vals, label="R_conformal_predicted")


def scalar_curvature_from_omega(metric, omega, grid):
    """R[omega^-2 gbar] from the decomposition

    R - Rbreve_n = Rbreve_n (|d omega|^2_gbar - 1) + 2(n-1) omega Delta_gbar omega
                   + omega^2 R[gbar],

    with omega differentiated discretely.  omega may vanish at the boundary
    but must be positive at interior nodes.
    """
    n = metric.n
    w = omega.values
    interior = grid.rho > grid.rho[-1] * 1.5
    if np.any(w[interior] <= 0.0):
        raise PositivityError("omega must be positive in the interior")
    rbreve = -float(n * (n - 1))
    a = metric.a.value(grid.r)
    d1 = gridmod.derivative_arrays(grid, w, 1)
    grad_sq = d1 * d1 / a
    # Delta_gbar omega = omega''/a - a' omega'/(2a^2) + (n-1) c' omega'/(c a),
    # with the same near-center angular substitution as the physical operator
    a1 = metric.a.d1(grid.r)
    c = metric.areal_radius()
    cv, c1 = c.value(grid.r), c.d1(grid.r)
    d2 = gridmod.derivative_arrays(grid, w, 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        A_bar = (n - 1) * c1 / (cv * a)
        peclet = np.abs(A_bar) * _local_h(grid.r) * a / 2.0
    sub = np.zeros(grid.size, dtype=bool)
    sub[1:-1] = (peclet[1:-1] > 0.9) & (grid.r[1:-1] < 0.1)
    A_safe = np.where(np.isfinite(A_bar), A_bar, 0.0)
    angular = np.where(sub, A_safe * grid.r * d2, A_safe * d1)
    lap_bar = d2 / a - a1 * d1 / (2.0 * a * a) + angular
    lap_bar[0] = n * d2[0] / a[0]
    vals = rbreve * (grad_sq - 1.0) + 2.0 * (n - 1) * w * lap_bar \
        + w * w * metric.scalar_curvature_compactified(grid.r) + rbreve
    return GridFunction(grid, vals, label="R_from_omega")


def _local_h(r):
    h = np.zeros_like(r)
    h[1:-1] = np.maximum(np.diff(r)[:-1], np.diff(r)[1:])
    return h


def minus_laplacian_power_law(metric, grid, alpha):
    """Analytic samples of -Delta_g rho^alpha via the power-law identity

    -Delta_g rho^alpha = -alpha rho^(alpha+1) Delta_gbar rho
                         + alpha (n-1-alpha) rho^alpha |d rho|^2_gbar.
    """
    n = metric.n
    rho = grid.rho
    return (-alpha * rho ** (alpha + 1.0) * metric.laplacian_rho_compactified(grid.r)
            + alpha * (n - 1.0 - alpha) * rho ** alpha * metric.grad_rho_sq(grid.r))
