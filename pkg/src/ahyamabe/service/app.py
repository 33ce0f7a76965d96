"""FastAPI application exposing the numerical library.

POST /run executes any subcommand from a full RunConfig; the granular
endpoints accept the same body and pin the subcommand.  Validation errors
surface as 422 responses with field-level details; numerical-stage errors
return status "error" with the stage label inside a 200 response so clients
can distinguish bad requests from legitimate mathematical obstructions.
"""

from __future__ import annotations

from fastapi import FastAPI

from .models import SUBCOMMANDS, RunConfig, RunResult
from .runner import run_config


def create_app() -> FastAPI:
    app = FastAPI(
        title="ahyamabe",
        description="Curvature, weighted norms, Fredholm diagnostics and a "
                    "constructive conformal solver for radial asymptotically "
                    "hyperbolic metrics.",
        version="0.1.0",
    )

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.post("/run", response_model=RunResult)
    def run(cfg: RunConfig) -> RunResult:
        return run_config(cfg)

    def _make_endpoint(name: str):
        async def endpoint(cfg: RunConfig) -> RunResult:
            # re-validate so subcommand-dependent constraints apply
            pinned = RunConfig.model_validate(
                {**cfg.model_dump(), "subcommand": name})
            return run_config(pinned)
        endpoint.__name__ = f"run_{name.replace('-', '_')}"
        return endpoint

    for sub in SUBCOMMANDS:
        app.post(f"/{sub}", response_model=RunResult)(_make_endpoint(sub))

    return app


app = create_app()
