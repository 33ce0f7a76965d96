"""Half-plane group mollification and boundary Taylor expansion.

Works on the 2-D upper half-space with the affine group law
(xi, eta) . (x, y) = (xi + eta x, eta y), identity (0, 1) and inverse
(x, y)^-1 = (-x/y, 1/y).  Convolution u * psi = int u(z.w) psi(w^-1) dV(w)
against the invariant measure dV = y^-2 dx dy smooths in the interior while
leaving boundary traces unchanged; the correction operator
S_k(u) = sum_{j<k} ((-y)^j / j!) d_y^j u arranges vanishing y-derivatives of
expansion coefficients, and the boundary Taylor expansion built from both
has remainder decaying at the expansion order.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

from .errors import DomainExhaustionError, ParameterError, PositivityError
from .grid import fd_weights

KERNEL_RADIUS = 0.25          # bump support: hyperbolic distance below 1/4
KERNEL_BOX_X = 0.2527         # sinh(1/4), slightly padded below
KERNEL_BOX_Y = (0.7788, 1.2841)   # (e^-1/4, e^1/4)


# ---------------------------------------------------------------------------
# Group structure
# ---------------------------------------------------------------------------

def group_mul(z, w):
    """(xi, eta) . (x, y) = (xi + eta x, eta y); second coordinates positive."""
    (xi, eta), (x, y) = z, w
    if eta <= 0.0 or y <= 0.0:
        raise ParameterError("group elements need positive second coordinate")
    return (xi + eta * x, eta * y)


def group_inv(z):
    x, y = z
    if y <= 0.0:
        raise ParameterError("group elements need positive second coordinate")
    return (-x / y, 1.0 / y)


def hyperbolic_distance(z, w):
    """arcosh(1 + |z - w|^2 / (2 y_z y_w)) on the upper half-plane."""
    (x1, y1), (x2, y2) = z, w
    q = ((x1 - x2) ** 2 + (y1 - y2) ** 2) / (2.0 * y1 * y2)
    return float(np.arccosh(1.0 + q))


# ---------------------------------------------------------------------------
# Fields
# ---------------------------------------------------------------------------

@dataclass
class HalfSpaceField:
    """Samples u(x_i, y_j): x uniform and periodic on [0, period), y geometric."""

    x: np.ndarray
    y: np.ndarray
    values: np.ndarray
    period: float

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.x), len(self.y)):
            raise ParameterError("field shape must be (len(x), len(y))")
        if np.any(self.y <= 0.0) or np.any(np.diff(self.y) <= 0.0):
            raise ParameterError("y levels must be positive and increasing")
        if not np.all(np.isfinite(self.values)):
            raise ParameterError("field samples must be finite")

    @property
    def log_ratio(self):
        return np.log(self.y[1] / self.y[0])

    def interpolate(self, xq, yq):
        """Bilinear interpolation in (x, log y); x wraps periodically."""
        xq = np.asarray(xq, dtype=float)
        yq = np.asarray(yq, dtype=float)
        if np.any(yq < self.y[0] * (1 - 1e-12)) or np.any(yq > self.y[-1] * (1 + 1e-12)):
            raise DomainExhaustionError("query outside the sampled y-range")
        hx = self.period / len(self.x)
        fx = np.mod(xq, self.period) / hx
        ix = np.floor(fx).astype(int) % len(self.x)
        tx = fx - np.floor(fx)
        ix1 = (ix + 1) % len(self.x)
        fy = np.log(np.clip(yq, self.y[0], self.y[-1]) / self.y[0]) / self.log_ratio
        iy = np.clip(np.floor(fy).astype(int), 0, len(self.y) - 2)
        ty = fy - iy
        v = self.values
        return ((1 - tx) * (1 - ty) * v[ix, iy] + tx * (1 - ty) * v[ix1, iy]
                + (1 - tx) * ty * v[ix, iy + 1] + tx * ty * v[ix1, iy + 1])

    def y_derivative(self, order=1):
        """d_y^order along columns, nonuniform stencils, O(h^2)."""
        vals = self.values
        for _ in range(order):
            vals = _axis1_derivative(self.y, vals)
        return HalfSpaceField(self.x, self.y, vals, self.period)

    def restrict_y(self, y_lo, y_hi):
        sel = (self.y >= y_lo * (1 - 1e-12)) & (self.y <= y_hi * (1 + 1e-12))
        if np.count_nonzero(sel) < 4:
            raise DomainExhaustionError("fewer than 4 y-levels after restriction")
        return HalfSpaceField(self.x, self.y[sel], self.values[:, sel], self.period)

    def sup_profile(self):
        """max_x |u| per y-level."""
        return np.max(np.abs(self.values), axis=0)


def _axis1_derivative(nodes, values, order=1):
    y = np.asarray(nodes, dtype=float)
    u = np.asarray(values, dtype=float)
    m = len(y)
    if m < 4:
        raise ParameterError("y-derivatives need at least 4 levels")
    out = np.empty_like(u)
    hm = y[1:-1] - y[:-2]
    hp = y[2:] - y[1:-1]
    wl = -hp / (hm * (hm + hp))
    wc = (hp - hm) / (hm * hp)
    wr = hm / (hp * (hm + hp))
    out[:, 1:-1] = wl * u[:, :-2] + wc * u[:, 1:-1] + wr * u[:, 2:]
    w0 = fd_weights(y[:3], y[0], 1)
    wN = fd_weights(y[-3:], y[-1], 1)
    out[:, 0] = u[:, :3] @ w0
    out[:, -1] = u[:, -3:] @ wN
    return out


def build_field(fn, nx=96, ny=72, period=2.0 * np.pi, y_min=1e-3, y_max=2.0):
    """Sample fn(x, y) on a periodic-x, geometric-y grid."""
    x = np.arange(nx) * (period / nx)
    y = y_min * (y_max / y_min) ** (np.arange(ny) / (ny - 1.0))
    X, Y = np.meshgrid(x, y, indexing="ij")
    return HalfSpaceField(x, y, fn(X, Y), period)


# ---------------------------------------------------------------------------
# Kernel
# ---------------------------------------------------------------------------

class Kernel:
    """Smooth bump supported in the hyperbolic ball of radius 1/4 at (0, 1),
    psi(w) = exp(-1/(1 - (4 d(w, (0,1)))^2)), normalized so the quadrature of
    psi-dagger against dV equals one on the same nodes used for convolution."""

    def __init__(self, quad_points=48):
        self.quad_points = int(quad_points)
        xi = np.linspace(-KERNEL_BOX_X, KERNEL_BOX_X, self.quad_points)
        eta = np.linspace(KERNEL_BOX_Y[0], KERNEL_BOX_Y[1], self.quad_points)
        wxi = np.full_like(xi, xi[1] - xi[0])
        wxi[[0, -1]] *= 0.5
        weta = np.full_like(eta, eta[1] - eta[0])
        weta[[0, -1]] *= 0.5
        XI, ETA = np.meshgrid(xi, eta, indexing="ij")
        psi_dagger = self._bump(-XI / ETA, 1.0 / ETA)
        self.xi = XI.ravel()
        self.eta = ETA.ravel()
        raw = (wxi[:, None] * weta[None, :] / ETA ** 2 * psi_dagger).ravel()
        total = float(np.sum(raw))
        if total <= 0.0:
            raise PositivityError("kernel quadrature degenerate")
        self.norm_constant = 1.0 / total
        self.weights = raw / total
        keep = self.weights != 0.0
        self.xi, self.eta, self.weights = self.xi[keep], self.eta[keep], self.weights[keep]

    @staticmethod
    def _bump(x, y):
        q = (x ** 2 + (y - 1.0) ** 2) / (2.0 * y)
        d = np.arccosh(1.0 + q)
        t = 4.0 * d
        out = np.zeros_like(d)
        inside = t < 1.0
        out[inside] = np.exp(-1.0 / (1.0 - t[inside] ** 2))
        return out

    def value(self, x, y):
        """psi at (x, y), including the normalization."""
        return self.norm_constant * self._bump(np.asarray(x, dtype=float),
                                               np.asarray(y, dtype=float))

    def moment(self, fn):
        """Quadrature of fn(xi, eta) psi(w^-1) dV over the support."""
        return float(np.sum(self.weights * fn(self.xi, self.eta)))


def h_convolve(u, kernel):
    """(u * psi)(z) = int u(z . w) psi(w^-1) dV(w) on the y-sublevels where
    every sample z . w stays inside the field's domain."""
    eta_min, eta_max = float(kernel.eta.min()), float(kernel.eta.max())
    sel = (u.y * eta_min >= u.y[0] * (1 - 1e-12)) \
        & (u.y * eta_max <= u.y[-1] * (1 + 1e-12))
    if not np.any(sel):
        raise DomainExhaustionError("no y-level admits the kernel support")
    y_out = u.y[sel]
    X, Y = np.meshgrid(u.x, y_out, indexing="ij")
    out = np.zeros_like(X)
    for xi_k, eta_k, w_k in zip(kernel.xi, kernel.eta, kernel.weights):
        out += w_k * u.interpolate(X + Y * xi_k, Y * eta_k)
    return HalfSpaceField(u.x, y_out, out, u.period)


# ---------------------------------------------------------------------------
# Correction operator and Taylor expansion
# ---------------------------------------------------------------------------

def s_operator(u, k):
    """S_k(u) = sum_{j=0}^{k-1} ((-y)^j / j!) d_y^j u."""
    if k < 1:
        raise ParameterError("correction order k must be at least 1")
    if k > 3:
        raise ParameterError("stencil budget limits the correction order to 3")
    vals = np.zeros_like(u.values)
    dj = u.values
    for j in range(k):
        if j > 0:
            dj = _axis1_derivative(u.y, dj)
        vals += ((-u.y) ** j / factorial(j)) * dj
    return HalfSpaceField(u.x, u.y, vals, u.period)


def boundary_trace(field, levels=3):
    """Richardson extrapolation to y = 0 from the smallest y-levels."""
    y = field.y[:levels]
    V = np.vander(y, levels, increasing=True)
    coef = np.linalg.solve(V.T, np.eye(levels)[0])  # weights reproducing p(0)
    return field.values[:, :levels] @ coef


def decay_fit(field, window=None, mask_floor=1e-14):
    """Slope of log sup_x|u| against log y; returns (beta, r2)."""
    prof = field.sup_profile()
    y = field.y
    if window is not None:
        sel = (y >= window[0]) & (y <= window[1])
    else:
        sel = np.ones_like(y, dtype=bool)
    sel &= prof > mask_floor
    if np.count_nonzero(sel) < 4:
        raise DomainExhaustionError("too few levels for a decay fit")
    xs, ys = np.log(y[sel]), np.log(prof[sel])
    A = np.vstack([xs, np.ones_like(xs)]).T
    coef, *_ = np.linalg.lstsq(A, ys, rcond=None)
    ss_tot = float(np.sum((ys - ys.mean()) ** 2))
    ss_res = float(np.sum((A @ coef - ys) ** 2))
    r2 = 1.0 if ss_tot <= 1e-30 else 1.0 - ss_res / ss_tot
    return float(coef[0]), r2


def taylor_expand(u, m, kernel):
    """Coefficients u_k = S_{m-k}((d_y^k u) * psi) for k < m, the partial sum
    P_{m-1}[u] = sum (y^j/j!) u_j, and the remainder u - P_{m-1}[u].

    Returns a dict with the coefficient fields (on the shrunken convolution
    domain), the remainder, extrapolated traces, and the remainder decay fit.
    """
    if not 1 <= m <= 3:
        raise ParameterError("expansion order m must lie in 1..3")
    coeffs = []
    for k in range(m):
        dk = u.y_derivative(k) if k else u
        smoothed = h_convolve(dk, kernel)
        coeffs.append(s_operator(smoothed, m - k))
    y_lo = max(c.y[0] for c in coeffs)
    y_hi = min(c.y[-1] for c in coeffs)
    coeffs = [c.restrict_y(y_lo, y_hi) for c in coeffs]
    base = u.restrict_y(y_lo, y_hi)
    partial = np.zeros_like(base.values)
    for j, c in enumerate(coeffs):
        partial += (base.y ** j / factorial(j)) * c.values
    remainder = HalfSpaceField(base.x, base.y, base.values - partial, base.period)
    traces = [boundary_trace(c) for c in coeffs]
    try:
        rem_decay = decay_fit(remainder)
    except DomainExhaustionError:
        rem_decay = (float("inf"), 1.0)
    return {"coefficients": coeffs, "partial_sum": partial,
            "remainder": remainder, "traces": traces,
            "remainder_decay": rem_decay}


def field_csv(field):
    """CSV serialization with columns x, y, value."""
    lines = ["x,y,value"]
    for i, xv in enumerate(field.x):
        for j, yv in enumerate(field.y):
            lines.append(f"{xv:.17g},{yv:.17g},{field.values[i, j]:.17g}")
    return "\n".join(lines) + "\n"
