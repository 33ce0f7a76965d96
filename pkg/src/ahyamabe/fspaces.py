"""Weighted Sobolev, window-supremum (Gicquaud-Sakovich style), and fortified
norms at integer smoothness, plus boundary decay-exponent estimation.

Radial reductions used throughout:

* weighted Sobolev norm: sum over j <= k of the L^p_delta norm of
  (rho d/drho)^j u against the physical volume measure;
* window norm: sup over dyadic window centers rho_i of
  rho_i^-delta (sum_j int_{rho_i/e}^{rho_i e} |(rho d/drho)^j u|^p drho/rho)^(1/p),
  the scale-invariant 1-D shadow of a unit-ball chart norm;
* fortified norms: j-th boundary derivative enters through the scalar
  rho^j d^j u/drho^j, the pointwise magnitude of the j-tensor it represents.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import grid as gridmod
from .errors import InsufficientDataError, ParameterError
from .grid import GridFunction

WINDOW_HALF_WIDTH = np.e          # windows are [rho_i/e, rho_i e]
COVER_CENTER_RATIO = 0.5          # consecutive centers shrink by 1/2
DIVERGENCE_RATIO = 1.5            # norm ratio across eps levels flagging divergence


@dataclass(frozen=True)
class WeightSpec:
    """(k, p, delta[, m]) selecting a norm at integer smoothness."""

    k: int
    p: float
    delta: float
    m: int | None = None

    def __post_init__(self):
        if self.k < 0:
            raise ParameterError("derivative order k must be nonnegative")
        if self.k > 2:
            raise ParameterError("stencil support limits k to at most 2")
        if not 1.0 < self.p < np.inf:
            raise ParameterError("p must lie in (1, oo)")
        if self.m is not None and not 0 <= self.m <= self.k:
            raise ParameterError("fortification order m must satisfy 0 <= m <= k")


@dataclass(frozen=True)
class MobiusCover:
    """Dyadic window centers rho_i with windows [rho_i/e, rho_i e]."""

    centers: np.ndarray

    def __post_init__(self):
        if len(self.centers) == 0:
            raise ParameterError("cover must contain at least one window")
        if np.any(np.diff(self.centers) >= 0):
            raise ParameterError("centers must be strictly decreasing")

    @staticmethod
    def for_grid(grid, rho_start=0.125):
        """Centers from rho_start down by factors of 1/2 until the windows
        cover (eps_trunc, rho_start]; overlap multiplicity is at most 3."""
        rho_min = grid.rho[-1]
        centers = []
        c = rho_start
        while c / WINDOW_HALF_WIDTH > rho_min:
            centers.append(c)
            c *= COVER_CENTER_RATIO
        centers.append(c)
        return MobiusCover(np.asarray(centers))


def _log_measure_weights(grid, lo, hi):
    """Trapezoid weights for integral against drho/rho restricted to [lo, hi]."""
    rho = grid.rho
    inside = (rho >= lo) & (rho <= hi)
    idx = np.where(inside)[0]
    if len(idx) < 2:
        return None, None
    sub = rho[idx][::-1]          # increasing in rho
    t = np.log(sub)
    w = np.zeros_like(sub)
    dt = np.diff(t)
    w[:-1] += 0.5 * dt
    w[1:] += 0.5 * dt
    return idx[::-1], w


def weighted_sobolev_norm(metric, u, spec):
    """Sum over j <= k of || (rho d/drho)^j u ||_{L^p_delta} with the physical
    volume measure, over the truncated domain."""
    total = 0.0
    vals = u.values
    for j in range(spec.k + 1):
        if j > 0:
            vals = gridmod.radial_log_derivative_arrays(u.grid, u.values, j)
        gf = GridFunction(u.grid, vals)
        total += gridmod.quadrature_weighted(metric, gf, spec.p, spec.delta, "physical")
    return total


def gs_norm(u, spec, cover):
    """Window-supremum norm; returns (value, per-window profile, divergent flag).

    The profile pairs each center rho_i with its window value; the divergent
    flag is set when the profile grows toward the boundary (fitted log-log
    slope below -0.05 across the tail).
    """
    profile = []
    for c in cover.centers:
        idx, w = _log_measure_weights(u.grid, c / WINDOW_HALF_WIDTH, c * WINDOW_HALF_WIDTH)
        if idx is None:
            continue
        acc = 0.0
        for j in range(spec.k + 1):
            if j == 0:
                vals = u.values
            else:
                vals = gridmod.radial_log_derivative_arrays(u.grid, u.values, j)
            acc += float(np.sum(w * np.abs(vals[idx]) ** spec.p))
        profile.append((float(c), c ** (-spec.delta) * acc ** (1.0 / spec.p)))
    if not profile:
        raise ParameterError("no window of the cover intersects the grid")
    values = np.array([v for _, v in profile])
    centers = np.array([c for c, _ in profile])
    divergent = False
    mask = values > 1e-300
    if np.count_nonzero(mask) >= 3:
        slope = np.polyfit(np.log(centers[mask]), np.log(values[mask]), 1)[0]
        divergent = slope < -0.05
    return float(values.max()), profile, divergent


@dataclass
class NormResult:
    value: float
    profile: list = field(default_factory=list)
    divergent: bool = False


def fortified_norm_h(metric, u, spec):
    """Sum over j <= m of the weighted Sobolev norm of the boundary-derivative
    scalar rho^j d^j u/drho^j at smoothness k - j and weight j - n/p."""
    if spec.m is None:
        raise ParameterError("fortified norm needs the fortification order m")
    n = metric.n
    total = 0.0
    for j in range(spec.m + 1):
        dj = gridmod.rho_derivative_arrays(u.grid, u.values, j) if j else u.values
        scalar = GridFunction(u.grid, u.grid.rho ** j * dj)
        sub = WeightSpec(k=spec.k - j, p=spec.p, delta=j - n / spec.p)
        total += weighted_sobolev_norm(metric, scalar, sub)
    return total


def fortified_norm_x(u, spec, cover):
    """Sum over j <= m of the window norm of rho^j d^j u/drho^j at weight j."""
    if spec.m is None:
        raise ParameterError("fortified norm needs the fortification order m")
    total = 0.0
    profiles = []
    divergent = False
    for j in range(spec.m + 1):
        dj = gridmod.rho_derivative_arrays(u.grid, u.values, j) if j else u.values
        scalar = GridFunction(u.grid, u.grid.rho ** j * dj)
        sub = WeightSpec(k=spec.k - j, p=spec.p, delta=float(j))
        v, prof, div = gs_norm(scalar, sub, cover)
        total += v
        profiles.append(prof)
        divergent = divergent or div
    return NormResult(value=total, profile=profiles, divergent=divergent)


def decay_exponent(u, fit_window, mask_floor=1e-14):
    """Least-squares slope beta of log|u| against log rho over the window.

    Returns (beta, r_squared).  Samples with |u| below the mask floor are
    dropped; an all-masked window raises InsufficientDataError.
    """
    lo, hi = fit_window
    if not 0.0 < lo < hi:
        raise ParameterError("fit window must satisfy 0 < lo < hi")
    rho = u.grid.rho
    sel = (rho >= lo) & (rho <= hi) & (np.abs(u.values) > mask_floor)
    if np.count_nonzero(sel) < 5:
        raise InsufficientDataError(
            f"fewer than 5 usable samples in fit window [{lo:g}, {hi:g}]")
    x = np.log(rho[sel])
    y = np.log(np.abs(u.values[sel]))
    A = np.vstack([x, np.ones_like(x)]).T
    coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
    beta = float(coef[0])
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot <= 1e-30:
        r2 = 1.0
    else:
        ss_res = float(res[0]) if len(res) else float(np.sum((A @ coef - y) ** 2))
        r2 = 1.0 - ss_res / ss_tot
    return beta, r2


def norm_profile_csv(profile):
    """Serialize a per-window profile as CSV text (rho_i, value)."""
    lines = ["rho_i,value"]
    for c, v in profile:
        lines.append(f"{c:.17g},{v:.17g}")
    return "\n".join(lines) + "\n"
