"""Pydantic request/response models shared by the HTTP service and the CLI.

``RunConfig`` mirrors the TOML configuration document; all range constraints
declared by the numerical modules are enforced at parse time so that a bad
config is rejected with field-level errors before any computation starts.
"""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field, field_validator, model_validator

SUBCOMMANDS = ("curvature", "norms", "fredholm-scan", "yamabe",
               "mollify-demo", "selftest")


class MetricSpec(BaseModel):
    family: Literal["hyperbolic", "flat", "conformal", "perturbed", "scaled"] \
        = "hyperbolic"
    n: int = Field(default=3, ge=2)
    params: list[float] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_params(self):
        counts = {"hyperbolic": (0,), "flat": (0,), "conformal": (2, 3),
                  "perturbed": (2, 4), "scaled": (1,)}
        if len(self.params) not in counts[self.family]:
            raise ValueError(
                f"family {self.family!r} takes {counts[self.family]} parameters, "
                f"got {len(self.params)}")
        return self


class GridSpec(BaseModel):
    N: int = Field(default=512, ge=16)
    grading: Literal["uniform-in-r", "geometric-in-rho"] = "uniform-in-r"
    eps_trunc: float = Field(default=1e-4, gt=0.0, lt=0.5)


class WeightSpecModel(BaseModel):
    k: int = Field(ge=0, le=2)
    p: float = Field(gt=1.0)
    delta: float = 0.0
    m: Optional[int] = Field(default=None, ge=0)

    @model_validator(mode="after")
    def _check_m(self):
        if self.m is not None and self.m > self.k:
            raise ValueError("fortification order m must not exceed k")
        return self


class FieldSpec(BaseModel):
    """Synthetic radial field u = coeff * rho^beta * (1 + modulation rho),
    optionally with a log factor."""

    kind: Literal["power", "power-log", "constant"] = "power"
    beta: float = 1.0
    coeff: float = 1.0
    modulation: float = 0.0


class YamabeSpec(BaseModel):
    target_order: Optional[int] = Field(default=None, ge=0)
    alpha: float = Field(default=0.5, gt=0.0, lt=1.0)
    tol: float = Field(default=1e-10, gt=0.0)
    max_iter: int = Field(default=200, ge=1)
    lambda_margin: float = Field(default=0.1, ge=0.0)
    rho_cut: float = Field(default=0.2, gt=0.0, lt=1.0)


class ScanSpec(BaseModel):
    lambdas: list[float] = Field(default_factory=lambda: [0.0, 3.0])
    deltas: list[float] = Field(default_factory=lambda: [-1.0, 0.0, 1.0, 2.0, 3.0])
    q: float = Field(default=2.0, gt=1.0)

    @field_validator("lambdas")
    @classmethod
    def _nonneg(cls, v):
        if any(x < 0 for x in v):
            raise ValueError("shifts must be nonnegative")
        return v


class MollifySpec(BaseModel):
    nx: int = Field(default=96, ge=16)
    ny: int = Field(default=72, ge=16)
    y_min: float = Field(default=1e-3, gt=0.0)
    y_max: float = Field(default=2.0, gt=0.0)
    quad_points: int = Field(default=48, ge=12)


class RunConfig(BaseModel):
    subcommand: Optional[Literal[
        "curvature", "norms", "fredholm-scan", "yamabe",
        "mollify-demo", "selftest"]] = None
    seed: int = 0
    metric: MetricSpec = Field(default_factory=MetricSpec)
    grid: GridSpec = Field(default_factory=GridSpec)
    weights: list[WeightSpecModel] = Field(default_factory=list)
    field: FieldSpec = Field(default_factory=FieldSpec)
    yamabe: YamabeSpec = Field(default_factory=YamabeSpec)
    scan: ScanSpec = Field(default_factory=ScanSpec)
    mollify: MollifySpec = Field(default_factory=MollifySpec)

    @model_validator(mode="after")
    def _cross_checks(self):
        if self.subcommand == "yamabe" and self.metric.n < 3:
            raise ValueError(
                "the conformal solver needs n >= 3 (critical exponent undefined)")
        if self.subcommand == "yamabe" and self.yamabe.target_order is not None \
                and self.yamabe.target_order >= self.metric.n:
            raise ValueError(
                f"conditioning order {self.yamabe.target_order} is obstructed "
                f"for n = {self.metric.n}; orders above n-1 are inadmissible")
        return self


class RunResult(BaseModel):
    status: Literal["ok", "error"]
    subcommand: str
    report: dict = Field(default_factory=dict)
    artifacts: dict[str, str] = Field(default_factory=dict)
    timing_s: Optional[float] = None
    error: Optional[str] = None
    error_stage: Optional[str] = None
