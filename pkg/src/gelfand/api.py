"""HTTP front end: one POST endpoint per command, all sharing ``run_command``."""
from __future__ import annotations

from typing import Any

from fastapi import FastAPI
from fastapi.responses import JSONResponse
from pydantic import BaseModel, ConfigDict

from . import __version__
from .config import SCHEMA_VERSION, ExperimentConfig
from .service import COMMANDS, EXIT_CONFIG, EXIT_NUMERIC, run_command


class Report(BaseModel):
    """Command report; the body fields vary by command."""
    model_config = ConfigDict(extra="allow")

    schema_version: str
    command: str
    status: str
    exit_code: int
    config: dict[str, Any]


class Health(BaseModel):
    status: str
    version: str
    schema_version: str
    commands: list[str]


_HTTP = {0: 200, 1: 200, EXIT_CONFIG: 422, EXIT_NUMERIC: 500}

app = FastAPI(title="gelfand", version=__version__,
              description="Numerical laboratory for -Lap u = rho^2 V e^u on planar domains.")


@app.get("/health", response_model=Health)
def health() -> Health:
    return Health(status="ok", version=__version__, schema_version=SCHEMA_VERSION, commands=sorted(COMMANDS))


def _endpoint(name: str):
    def handler(cfg: ExperimentConfig | None = None) -> JSONResponse:
        report, code = run_command(name, cfg or ExperimentConfig())
        return JSONResponse(report, status_code=_HTTP[code])

    handler.__name__ = f"run_{name}"
    handler.__doc__ = COMMANDS[name].__doc__
    return handler


for _name in COMMANDS:
    app.post(f"/{_name}", response_model=Report, name=_name)(_endpoint(_name))


def serve() -> None:
    """Console entry point: ``gelfand-serve [--host H] [--port P]``."""
    import argparse

    import uvicorn

    ap = argparse.ArgumentParser(prog="gelfand-serve")
    ap.add_argument("--host", default="127.0.0.1")
    ap.add_argument("--port", type=int, default=8000)
    args = ap.parse_args()
    uvicorn.run(app, host=args.host, port=args.port)
