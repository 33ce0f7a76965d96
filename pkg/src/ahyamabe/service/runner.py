"""Subcommand dispatch shared by the HTTP service and the CLI client.

Every run is deterministic given (config, seed): random corpora draw from a
seeded generator, artifacts print floats with 17 significant digits, and
timing never enters the serialized report.
"""

from __future__ import annotations

import time

import numpy as np

from .. import elliptic, fspaces, geometry, mollify, selftest
from .. import grid as gridmod
from .. import yamabe as yamabe_mod
from ..errors import AhyError
from ..grid import GridFunction
from .models import RunConfig, RunResult


def json_text(obj):
    """Deterministic JSON with 17-significant-digit floats."""
    return _emit(obj, 0) + "\n"


def _emit(obj, indent):
    pad = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f'{pad}  "{k}": {_emit(v, indent + 1)}' for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        seq = list(obj)
        if not seq:
            return "[]"
        items = [f"{pad}  {_emit(v, indent + 1)}" for v in seq]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    if isinstance(obj, bool) or obj is None:
        return {True: "true", False: "false", None: "null"}[obj]
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if np.isnan(x):
            return '"nan"'
        if np.isinf(x):
            return '"inf"' if x > 0 else '"-inf"'
        return f"{x:.17g}"
    if isinstance(obj, str):
        return '"' + obj.replace("\\", "\\\\").replace('"', '\\"') + '"'
    raise TypeError(f"cannot serialize {type(obj)!r}")


def config_to_toml(cfg: RunConfig) -> str:
    """Serialize a RunConfig to the TOML subset the CLI accepts."""
    lines = []
    if cfg.subcommand is not None:
        lines.append(f'subcommand = "{cfg.subcommand}"')
    lines.append(f"seed = {cfg.seed}")

    def scalar(v):
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, str):
            return f'"{v}"'
        if isinstance(v, float):
            return f"{v:.17g}"
        return str(v)

    def table(name, model, skip_none=True):
        lines.append("")
        lines.append(f"[{name}]")
        for key, val in model.model_dump().items():
            if val is None and skip_none:
                continue
            if isinstance(val, list):
                lines.append(f"{key} = [" + ", ".join(scalar(x) for x in val) + "]")
            else:
                lines.append(f"{key} = {scalar(val)}")

    table("metric", cfg.metric)
    table("grid", cfg.grid)
    table("field", cfg.field)
    table("yamabe", cfg.yamabe)
    table("scan", cfg.scan)
    table("mollify", cfg.mollify)
    for w in cfg.weights:
        lines.append("")
        lines.append("[[weights]]")
        for key, val in w.model_dump().items():
            if val is None:
                continue
            lines.append(f"{key} = {scalar(val)}")
    return "\n".join(lines) + "\n"


def _build(cfg: RunConfig):
    metric = geometry.make_metric(cfg.metric.family, cfg.metric.n, cfg.metric.params)
    grid = gridmod.build_grid(cfg.grid.N, cfg.grid.grading, cfg.grid.eps_trunc)
    return metric, grid


def _field_values(spec, grid):
    rho = grid.rho
    if spec.kind == "constant":
        return np.full_like(rho, spec.coeff)
    base = spec.coeff * rho ** spec.beta * (1.0 + spec.modulation * rho)
    if spec.kind == "power-log":
        return base * np.log(rho)
    return base


def run_config(cfg: RunConfig) -> RunResult:
    t0 = time.perf_counter()
    if cfg.subcommand is None:
        return RunResult(status="error", subcommand="", report={}, artifacts={},
                         error="no subcommand selected", error_stage="dispatch")
    try:
        report, artifacts = _DISPATCH[cfg.subcommand](cfg)
        status = "ok"
        err = stage = None
    except AhyError as exc:
        report, artifacts = {}, {}
        status, err, stage = "error", str(exc), getattr(exc, "stage", None)
    return RunResult(status=status, subcommand=cfg.subcommand, report=report,
                     artifacts=artifacts, timing_s=time.perf_counter() - t0,
                     error=err, error_stage=stage)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _run_curvature(cfg):
    metric, grid = _build(cfg)
    r_bar = metric.scalar_curvature_compactified(grid.r)
    r_phys = metric.scalar_curvature_physical_arrays(grid.r)
    grad_defect = metric.grad_rho_sq(grid.r) - 1.0
    n = metric.n
    excess = r_phys + n * (n - 1)
    report = {
        "family": cfg.metric.family,
        "n": n,
        "ah_defect": metric.ah_defect(),
        "ah_admissible": metric.is_ah_admissible,
        "scalar_curvature_center": float(r_phys[0]),
        "scalar_curvature_boundary": float(r_phys[-1]),
    }
    if np.max(np.abs(excess)) > 1e-10:
        try:
            beta, r2 = fspaces.decay_exponent(
                GridFunction(grid, excess),
                (max(2 * grid.eps_trunc, 2e-4), 0.05))
            report["curvature_excess_decay"] = {"beta": beta, "r2": r2}
        except AhyError:
            report["curvature_excess_decay"] = None
    else:
        report["curvature_excess_decay"] = {"beta": float("inf"), "r2": 1.0}
    csv = gridmod.export_csv(
        GridFunction(grid, r_bar, "R_compactified"),
        extra_columns=[("R_physical", r_phys), ("grad_rho_sq_minus_1", grad_defect)])
    return report, {"curvature.csv": csv}


def _run_norms(cfg):
    metric, grid = _build(cfg)
    u = GridFunction(grid, _field_values(cfg.field, grid), "u")
    cover = fspaces.MobiusCover.for_grid(grid)
    entries = []
    artifacts = {}
    weights = cfg.weights or [None]
    for i, wm in enumerate(weights):
        if wm is None:
            spec = fspaces.WeightSpec(0, 2.0, 0.0)
        else:
            spec = fspaces.WeightSpec(wm.k, wm.p, wm.delta, wm.m)
        entry = {"k": spec.k, "p": spec.p, "delta": spec.delta, "m": spec.m}
        entry["weighted_sobolev"] = fspaces.weighted_sobolev_norm(metric, u, spec)
        gs_val, profile, divergent = fspaces.gs_norm(u, spec, cover)
        entry["gs"] = gs_val
        entry["gs_divergent_profile"] = divergent
        artifacts[f"norm_profile_{i}.csv"] = fspaces.norm_profile_csv(profile)
        if spec.m is not None:
            entry["fortified_h"] = fspaces.fortified_norm_h(metric, u, spec)
            res = fspaces.fortified_norm_x(u, spec, cover)
            entry["fortified_x"] = res.value
            entry["fortified_x_divergent"] = res.divergent
        entries.append(entry)
    report = {"field": cfg.field.model_dump(), "norms": entries}
    return report, artifacts


def _run_fredholm_scan(cfg):
    metric, grid = _build(cfg)
    rows = elliptic.fredholm_scan_rows(
        metric, cfg.scan.lambdas, cfg.scan.deltas, q=cfg.scan.q,
        eps=min(grid.eps_trunc, 1e-4))
    header = ["Lambda", "delta", "indicial_radius", "in_range_X", "in_range_H",
              "exp_minus_fitted", "exp_plus_fitted", "exponent_residual"]
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for key in header:
            v = row[key]
            if isinstance(v, bool):
                cells.append("1" if v else "0")
            else:
                cells.append(f"{v:.17g}")
        lines.append(",".join(cells))
    exponents = {}
    for row in rows:
        exponents[f"{row['Lambda']:.17g}"] = {
            "indicial_radius": row["indicial_radius"],
            "delta_minus": row["exp_minus_fitted"],
            "delta_plus": row["exp_plus_fitted"],
        }
    report = {"n": metric.n, "q": cfg.scan.q, "exponents_by_lambda": exponents}
    return report, {"fredholm_scan.csv": "\n".join(lines) + "\n"}


def _run_yamabe(cfg):
    metric, grid = _build(cfg)
    ycfg = yamabe_mod.YamabeConfig(
        target_order=cfg.yamabe.target_order, alpha=cfg.yamabe.alpha,
        tol=cfg.yamabe.tol, max_iter=cfg.yamabe.max_iter,
        lambda_margin=cfg.yamabe.lambda_margin, rho_cut=cfg.yamabe.rho_cut)
    theta, rep = yamabe_mod.yamabe_solve(metric, grid, ycfg)
    diag = yamabe_mod.verify_solution(metric, theta, grid, ycfg)
    report = rep.to_dict(include_timing=False)
    report["independent_route_residual_sup"] = diag["residual_sup"]
    theta_csv = gridmod.export_csv(theta)
    resid_csv = gridmod.export_csv(
        GridFunction(grid, diag["residual"], "residual"))
    return report, {"theta.csv": theta_csv, "residual.csv": resid_csv}


def _run_mollify_demo(cfg):
    ms = cfg.mollify
    kernel = mollify.Kernel(quad_points=ms.quad_points)
    rng = np.random.default_rng(cfg.seed)

    def mk(fn):
        return mollify.build_field(fn, nx=ms.nx, ny=ms.ny,
                                   y_min=ms.y_min, y_max=ms.y_max)

    const = mollify.h_convolve(mk(lambda x, y: np.full_like(x, 1.0)), kernel)
    const_err = float(np.max(np.abs(const.values - 1.0)))

    eta_moment = kernel.moment(lambda xi, eta: eta)
    xi_moment = kernel.moment(lambda xi, eta: xi)

    u = mk(lambda x, y: np.sin(x) + y * np.cos(x))
    diff = mollify.h_convolve(u, kernel)
    base = u.restrict_y(diff.y[0], diff.y[-1])
    gap = mollify.HalfSpaceField(diff.x, diff.y, diff.values - base.values, diff.period)
    trace_decay = mollify.decay_fit(gap)

    expansion = mollify.taylor_expand(
        mk(lambda x, y: np.sin(x) + y * np.cos(x) + y ** 2 * np.sin(2 * x)),
        2, kernel)

    rough = mk(lambda x, y: rng.standard_normal(x.shape))
    smoothed = mollify.h_convolve(rough, kernel)
    d2x = np.abs(np.roll(smoothed.values, -1, axis=0)
                 - 2 * smoothed.values + np.roll(smoothed.values, 1, axis=0))
    smoothing_bound = float(np.max(d2x) / np.max(np.abs(rough.values)))

    report = {
        "constant_preservation_error": const_err,
        "eta_moment": eta_moment,
        "xi_moment": xi_moment,
        "trace_preservation_decay": {"beta": trace_decay[0], "r2": trace_decay[1]},
        "taylor_remainder_decay": {"beta": expansion["remainder_decay"][0],
                                   "r2": expansion["remainder_decay"][1]},
        "smoothing_second_difference_ratio": smoothing_bound,
    }
    return report, {"mollified_field.csv": mollify.field_csv(diff)}


def _run_selftest(cfg):
    checks = selftest.run_all(seed=cfg.seed)
    report = {
        "passed": all(c["passed"] for c in checks),
        "checks": checks,
    }
    lines = ["name,passed,detail"]
    for c in checks:
        detail = c["detail"].replace(",", ";")
        lines.append(f"{c['name']},{1 if c['passed'] else 0},{detail}")
    return report, {"selftest.csv": "\n".join(lines) + "\n"}


_DISPATCH = {
    "curvature": _run_curvature,
    "norms": _run_norms,
    "fredholm-scan": _run_fredholm_scan,
    "yamabe": _run_yamabe,
    "mollify-demo": _run_mollify_demo,
    "selftest": _run_selftest,
}
