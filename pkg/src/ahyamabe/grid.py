"""Graded radial grids, derivative stencils, the physical Laplacian and
weighted quadrature.

The radial coordinate r lives on [0, 1 - eps_trunc]; the boundary defining
function rho(r) = (1 - r^2)/(1 + r^2) decreases from 1 at the center to an
eps-level value at the outermost node.  All stencils are nonuniform 3-point
(exact on quadratics) with one-sided closures at the ends; second derivatives
at the two end nodes use 4-point one-sided weights to stay second order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError

GEOMETRIC_RATIO_DEFAULT = 2.0 ** (-1.0 / 8.0)


def rho_of_r(r):
    """Defining function rho(r) = (1 - r^2)/(1 + r^2) on the unit ball."""
    r = np.asarray(r, dtype=float)
    return (1.0 - r * r) / (1.0 + r * r)


def drho_dr(r):
    r = np.asarray(r, dtype=float)
    return -4.0 * r / (1.0 + r * r) ** 2


def d2rho_dr2(r):
    r = np.asarray(r, dtype=float)
    return -4.0 * (1.0 - 3.0 * r * r) / (1.0 + r * r) ** 3


def r_of_rho(rho):
    """Inverse of rho(r); valid for rho in (0, 1]."""
    rho = np.asarray(rho, dtype=float)
    return np.sqrt((1.0 - rho) / (1.0 + rho))


def fd_weights(x, x0, m):
    """Finite-difference weights for the m-th derivative at x0 on nodes x.

    Fornberg's recursion; exact for polynomials of degree len(x)-1.
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    c = np.zeros((n, m + 1))
    c[0, 0] = 1.0
    c1 = 1.0
    c4 = x[0] - x0
    for i in range(1, n):
        mn = min(i, m)
        c2 = 1.0
        c5 = c4
        c4 = x[i] - x0
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, m]


@dataclass(frozen=True)
class RadialGrid:
    """Radial discretization with cached defining-function samples."""

    r: np.ndarray
    rho: np.ndarray
    grading: str
    eps_trunc: float

    @property
    def size(self):
        return len(self.r)

    def __post_init__(self):
        if len(self.r) < 16:
            raise ParameterError("grid needs at least 16 nodes")
        if self.r[0] != 0.0:
            raise ParameterError("innermost node must sit at r = 0")
        dr = np.diff(self.r)
        if np.any(dr <= 0):
            raise ParameterError("nodes must be strictly increasing")
        if np.any(np.diff(self.rho) >= 0):
            raise ParameterError("rho samples must be strictly decreasing")


@dataclass
class GridFunction:
    """Sampled radial field aligned with a RadialGrid.

    ``closure``, when present, regenerates the samples on a refined grid and
    is used by convergence studies.
    """

    grid: RadialGrid
    values: np.ndarray
    label: str = ""
    closure: object = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.r.shape:
            raise ParameterError("value array must match the grid size")
        if not np.all(np.isfinite(self.values)):
            raise ParameterError(f"non-finite samples in grid function {self.label!r}")

    def resampled(self, grid):
        if self.closure is None:
            raise ParameterError("grid function has no analytic closure to resample")
        return GridFunction(grid, self.closure(grid.r), self.label, self.closure)


def from_callable(grid, fn, label=""):
    return GridFunction(grid, fn(grid.r), label, fn)


def build_grid(N, grading="uniform-in-r", eps_trunc=1e-4,
               geometric_ratio=GEOMETRIC_RATIO_DEFAULT, rho_tail_start=0.5):
    """Build a radial grid on [0, 1 - eps_trunc].

    ``uniform-in-r`` spaces nodes evenly in r.  ``geometric-in-rho`` keeps a
    uniform interior and a boundary tail whose consecutive rho values hold a
    fixed ratio (default 2^(-1/8)), which keeps the mesh Peclet number of the
    degenerate Laplacian bounded near the boundary.
    """
    if N < 16:
        raise ParameterError("N must be at least 16")
    if not 0.0 < eps_trunc < 0.5:
        raise ParameterError("eps_trunc must lie in (0, 0.5)")
    r_max = 1.0 - eps_trunc

    if grading == "uniform-in-r":
        r = np.linspace(0.0, r_max, N)
    elif grading == "geometric-in-rho":
        if not 0.0 < geometric_ratio < 1.0:
            raise ParameterError("geometric ratio must lie in (0, 1)")
        rho_min = float(rho_of_r(r_max))
        if rho_tail_start <= rho_min:
            raise ParameterError("tail start must exceed the truncation rho-level")
        n_tail = int(np.ceil(np.log(rho_min / rho_tail_start) / np.log(geometric_ratio)))
        n_tail = max(n_tail, 4)
        if n_tail > N - 8:
            raise ParameterError(
                f"N={N} too small for the geometric tail ({n_tail} nodes); increase N")
        # exact geometric sequence from rho_min upward, then uniform in r inside
        tail_rho = rho_min * geometric_ratio ** (-np.arange(n_tail, dtype=float))
        tail_r = r_of_rho(tail_rho)[::-1]          # increasing in r
        r_inner_max = tail_r[0]
        inner = np.linspace(0.0, r_inner_max, N - n_tail + 1)
        r = np.concatenate([inner[:-1], tail_r])
        # keep the exact tail levels: a round trip through r costs a few ulps
        rho = np.concatenate([rho_of_r(inner[:-1]), tail_rho[::-1]])
        return RadialGrid(r=r, rho=rho, grading=grading, eps_trunc=float(eps_trunc))
    else:
        raise ParameterError(f"unknown grading {grading!r}")

    return RadialGrid(r=r, rho=rho_of_r(r), grading=grading, eps_trunc=float(eps_trunc))


def _interior_first_derivative_weights(r):
    """Vectorized 3-point first-derivative weights at interior nodes."""
    hm = r[1:-1] - r[:-2]
    hp = r[2:] - r[1:-1]
    wl = -hp / (hm * (hm + hp))
    wc = (hp - hm) / (hm * hp)
    wr = hm / (hp * (hm + hp))
    return wl, wc, wr


def _interior_second_derivative_weights(r):
    hm = r[1:-1] - r[:-2]
    hp = r[2:] - r[1:-1]
    wl = 2.0 / (hm * (hm + hp))
    wc = -2.0 / (hm * hp)
    wr = 2.0 / (hp * (hm + hp))
    return wl, wc, wr


def derivative_arrays(grid, values, order):
    """Apply the derivative stencil of the given order to a sample array."""
    r = grid.r
    u = np.asarray(values, dtype=float)
    if len(r) < 5:
        raise ParameterError("derivative stencils need at least 5 nodes")
    out = np.empty_like(u)
    if order == 1:
        wl, wc, wr = _interior_first_derivative_weights(r)
        out[1:-1] = wl * u[:-2] + wc * u[1:-1] + wr * u[2:]
        w0 = fd_weights(r[:3], r[0], 1)
        wN = fd_weights(r[-3:], r[-1], 1)
        out[0] = w0 @ u[:3]
        out[-1] = wN @ u[-3:]
    elif order == 2:
        wl, wc, wr = _interior_second_derivative_weights(r)
        out[1:-1] = wl * u[:-2] + wc * u[1:-1] + wr * u[2:]
        w0 = fd_weights(r[:4], r[0], 2)
        wN = fd_weights(r[-4:], r[-1], 2)
        out[0] = w0 @ u[:4]
        out[-1] = wN @ u[-4:]
    else:
        raise ParameterError("derivative order must be 1 or 2")
    return out


def differentiate(u, order=1):
    """O(h^2) derivative of a grid function with respect to r."""
    return GridFunction(u.grid, derivative_arrays(u.grid, u.values, order),
                        label=f"d{order}({u.label})/dr{order}" if u.label else "")


def rho_derivative_arrays(grid, values, order=1):
    """d/drho applied ``order`` times, via the chain rule through r.

    rho'(0) = 0, so the center node uses the L'Hopital limit
    du/drho(0) = u''(0) / rho''(0), valid for fields even in r.
    """
    out = np.asarray(values, dtype=float)
    drho = drho_dr(grid.r)
    for _ in range(order):
        d1 = derivative_arrays(grid, out, 1)
        d2_center = derivative_arrays(grid, out, 2)[0]
        with np.errstate(divide="ignore", invalid="ignore"):
            out = d1 / drho
        out[0] = d2_center / d2rho_dr2(0.0)
    return out


def radial_log_derivative_arrays(grid, values, order=1):
    """(rho d/drho) applied ``order`` times."""
    out = np.asarray(values, dtype=float)
    for _ in range(order):
        out = grid.rho * rho_derivative_arrays(grid, out, 1)
    return out


def effective_physical_coefficients(metric, grid):
    """P, Q arrays for Delta_g = P d2 + Q d1 with the near-center angular
    substitution applied.

    At nodes where the mesh Peclet number of the angular term A u' exceeds
    0.9 (r below about (n-1) h / 1.8), the term is traded for (A r) u''; this
    is accurate to O(r^2) for fields even in r and keeps both the assembled
    matrix an M-matrix and the applied operator second order at those nodes.
    The returned node-0 entries are placeholders; callers impose either the
    regularity row or the even-extension limit there.
    """
    P, Q_reg, A, gamma = metric.physical_laplacian_parts(grid.r)
    P = np.array(P, dtype=float)
    Q = np.asarray(Q_reg, dtype=float) + np.where(np.isfinite(A), A, 0.0)
    r = grid.r
    h = np.zeros_like(r)
    h[1:-1] = np.maximum(np.diff(r)[:-1], np.diff(r)[1:])
    with np.errstate(divide="ignore", invalid="ignore"):
        peclet = np.abs(A) * h / (2.0 * P)
    substitute = np.zeros(len(r), dtype=bool)
    substitute[1:-1] = (peclet[1:-1] > 0.9) & (r[1:-1] < 0.1)
    if np.any(substitute):
        A_safe = np.where(np.isfinite(A), A, 0.0)
        P = np.where(substitute, P + A_safe * r, P)
        Q = np.where(substitute, np.asarray(Q_reg, dtype=float), Q)
    Q = np.array(Q)
    Q[0] = 0.0
    return P, Q


def laplace_beltrami_arrays(metric, grid, values):
    """Samples of the physical Laplacian applied to a radial sample array.

    The center value uses the even-extension limit (u odd-part-free), where
    Delta_gbar u(0) = n u''(0)/a(0), rho(0) = 1 and rho'(0) = 0.
    """
    P, Q = effective_physical_coefficients(metric, grid)
    d1 = derivative_arrays(grid, values, 1)
    d2 = derivative_arrays(grid, values, 2)
    out = P * d2 + Q * d1
    a0 = metric.a.value(np.array([0.0]))[0]
    out[0] = metric.n * d2[0] / a0
    return out


def laplace_beltrami(metric, u):
    """Delta_g of a radial grid function; O(h^2) on smooth samples."""
    vals = laplace_beltrami_arrays(metric, u.grid, u.values)
    return GridFunction(u.grid, vals, label=f"lap({u.label})" if u.label else "")


def volume_weights(metric, grid, measure="physical"):
    """Trapezoid weights for integration against the chosen volume measure.

    ``physical`` integrates against rho^-n dV_gbar, ``compactified`` against
    dV_gbar; the sphere factor Vol(S^{n-1}) c(r)^{n-1} sqrt(a) is folded in.
    """
    n = metric.n
    r = grid.r
    a = metric.a.value(r)
    c = metric.areal_radius().value(r)
    sphere = 2.0 * np.pi ** (n / 2.0) / _gamma_half(n)
    dens = sphere * np.sqrt(a) * c ** (n - 1)
    if measure == "physical":
        dens = dens * grid.rho ** (-n)
    elif measure != "compactified":
        raise ParameterError(f"unknown measure {measure!r}")
    w = np.zeros_like(r)
    dr = np.diff(r)
    w[:-1] += 0.5 * dr
    w[1:] += 0.5 * dr
    return w * dens


def _gamma_half(n):
    from math import gamma
    return gamma(n / 2.0)


def quadrature_weighted(metric, u, p, delta, measure="physical"):
    """(integral of |rho^-delta u|^p against the chosen measure)^(1/p).

    Computed over the truncated domain; divergence as eps_trunc -> 0 is the
    caller's diagnostic, not an error here.
    """
    if p < 1.0:
        raise ParameterError("p must be at least 1")
    w = volume_weights(metric, u.grid, measure)
    integrand = np.abs(u.grid.rho ** (-delta) * u.values) ** p
    return float(np.sum(w * integrand) ** (1.0 / p))


def export_csv(u, extra_columns=None):
    """Serialize a grid function as CSV text with columns r, rho, value."""
    header = ["r", "rho", u.label or "value"]
    cols = [u.grid.r, u.grid.rho, u.values]
    if extra_columns:
        for name, vals in extra_columns:
            header.append(name)
            cols.append(np.asarray(vals, dtype=float))
    lines = [",".join(header)]
    for row in zip(*cols):
        lines.append(",".join(f"{x:.17g}" for x in row))
    return "\n".join(lines) + "\n"
