"""Thin command-line client for the compute service.

Subcommands mirror the service endpoints; the config document is TOML.  By
default the request runs against an in-process instance of the FastAPI app,
so no server is needed; pass --server URL to talk to a remote instance.
Artifacts (report.json plus CSV files) are written to --out and are
byte-identical across repeated runs with the same config and seed.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from pydantic import ValidationError

from .service.models import SUBCOMMANDS, RunConfig, RunResult
from .service.runner import config_to_toml, json_text


def parse_config(text: str) -> RunConfig:
    """Parse and validate a TOML config document."""
    data = tomllib.loads(text)
    return RunConfig.model_validate(data)


def _post(server, cfg: RunConfig) -> RunResult:
    """Send the request to a remote service, or run the ASGI app in-process."""
    import httpx
    if server:
        with httpx.Client(base_url=server, timeout=600.0) as client:
            resp = client.post("/run", json=cfg.model_dump())
    else:
        import asyncio
        from .service.app import app

        async def _go():
            transport = httpx.ASGITransport(app=app)
            async with httpx.AsyncClient(transport=transport,
                                         base_url="http://service",
                                         timeout=600.0) as client:
                return await client.post("/run", json=cfg.model_dump())

        resp = asyncio.run(_go())
    if resp.status_code != 200:
        raise SystemExit(f"service error {resp.status_code}: {resp.text}")
    return RunResult.model_validate(resp.json())


def _write_artifacts(result: RunResult, out_dir: Path, quiet: bool):
    out_dir.mkdir(parents=True, exist_ok=True)
    report_path = out_dir / "report.json"
    report_path.write_text(json_text({
        "subcommand": result.subcommand,
        "status": result.status,
        "report": result.report,
    }))
    for name, text in result.artifacts.items():
        (out_dir / name).write_text(text)
    if not quiet:
        print(f"wrote {report_path}")
        for name in result.artifacts:
            print(f"wrote {out_dir / name}")


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="ahyamabe",
        description="Curvature profiles, weighted norms, Fredholm scans and "
                    "the conformal constant-curvature solver for radial "
                    "asymptotically hyperbolic metrics.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_run_parser(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=Path, default=None,
                       help="TOML configuration document")
        p.add_argument("--out", type=Path, default=Path("out"),
                       help="artifact output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--grid-N", type=int, default=None, dest="grid_n",
                       help="override the grid size")
        p.add_argument("--quiet", action="store_true")
        p.add_argument("--server", default=None,
                       help="base URL of a running service (default: in-process)")
        return p

    for name in SUBCOMMANDS:
        add_run_parser(name, f"run the {name} subcommand")

    serve = sub.add_parser("serve", help="start the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)

    args = parser.parse_args(argv)

    if args.command == "serve":
        import uvicorn
        from .service.app import app
        uvicorn.run(app, host=args.host, port=args.port)
        return 0

    if args.config is not None:
        try:
            text = args.config.read_text()
        except OSError as exc:
            print(f"cannot read config: {exc}", file=sys.stderr)
            return 2
    else:
        text = ""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        print(f"config is not valid TOML: {exc}", file=sys.stderr)
        return 2
    declared = data.get("subcommand")
    if declared is not None and declared != args.command:
        print(f"config declares subcommand {declared!r} but {args.command!r} "
              f"was requested", file=sys.stderr)
        return 2
    data["subcommand"] = args.command
    if args.seed is not None:
        data["seed"] = args.seed
    if args.grid_n is not None:
        data.setdefault("grid", {})["N"] = args.grid_n
    try:
        cfg = RunConfig.model_validate(data)
    except ValidationError as exc:
        print("invalid configuration:", file=sys.stderr)
        for err in exc.errors():
            loc = ".".join(str(x) for x in err["loc"])
            print(f"  {loc}: {err['msg']}", file=sys.stderr)
        return 2

    result = _post(args.server, cfg)

    _write_artifacts(result, args.out, args.quiet)
    if result.status != "ok":
        stage = f" [{result.error_stage}]" if result.error_stage else ""
        print(f"{cfg.subcommand} failed{stage}: {result.error}", file=sys.stderr)
        return 1
    if not args.quiet:
        print(f"{cfg.subcommand} ok ({result.timing_s:.2f} s)")
        if cfg.subcommand == "selftest":
            for check in result.report["checks"]:
                mark = "PASS" if check["passed"] else "FAIL"
                print(f"  {mark} {check['name']}: {check['detail']}")
    if cfg.subcommand == "selftest" and not result.report.get("passed", False):
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
