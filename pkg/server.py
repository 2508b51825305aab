import math
import os
import uuid

from typing import List, Optional, Dict, Any, Tuple
from fastapi import FastAPI, HTTPException
from fastapi.responses import FileResponse
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, ValidationError

from execution import __version__
from execution.config import (
    BaiConfig,
    DiagConfig,
    EnsembleConfig,
    RunConfig,
    configure_logging,
    default_config,
)
from execution.export import run_and_export

import logging

# Configure Logging
LOG_FILE = configure_logging("server")
logger = logging.getLogger(__name__)

logger.info("Server is starting up... Logging configured.")


app = FastAPI(title="WignerSim")


# CORS
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

# Directories
TMP_DIR = ".tmp"
os.makedirs(TMP_DIR, exist_ok=True)


class RunRequest(BaseModel):
    """Fields left unset fall back to the command's default configuration."""
    ensemble: Optional[EnsembleConfig] = None
    n_grid: Optional[List[int]] = None
    replicas: Optional[int] = None
    z_grid: Optional[List[Tuple[float, float]]] = None
    checks: Optional[List[str]] = None
    seed: Optional[int] = None
    format: Optional[str] = None
    c0: Optional[float] = None
    bai: Optional[BaiConfig] = None
    diag: Optional[DiagConfig] = None
    truncate: Optional[bool] = None


def _json_safe(value):
    """Non-finite floats become strings so the response stays valid JSON."""
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_json_safe(v) for v in value]
    return value


def _run(command: str, request: Optional[RunRequest]) -> Dict[str, Any]:
    run_id = str(uuid.uuid4())
    run_dir = os.path.join(TMP_DIR, run_id)

    try:
        overrides = request.model_dump(exclude_none=True) if request else {}
        # HTTP runs stay in-process; the pool is for CLI batch runs
        cfg = RunConfig.model_validate(default_config(command).model_dump() | overrides
                                       | {"out": run_dir, "workers": 1})
    except (ValidationError, ValueError) as e:
        logger.error(f"Invalid {command} request: {e}")
        raise HTTPException(status_code=400, detail=str(e))

    os.makedirs(run_dir, exist_ok=True)
    logger.info(f"Run {run_id}: {command} (seed={cfg.seed})")
    try:
        outcome = run_and_export(command, cfg, run_dir)
    except ValueError as e:
        logger.error(f"Run {run_id} rejected: {e}")
        raise HTTPException(status_code=400, detail=str(e))
    except Exception as e:
        logger.error(f"Error in {command} run {run_id}: {e}")
        raise HTTPException(status_code=500, detail=str(e))

    return {
        "run_id": run_id,
        "passed": outcome.exit_code == 0,
        "summary": outcome.lines,
        "reports": [_json_safe(r.model_dump(mode="python")) for r in outcome.reports],
        "files": [f"/download/{run_id}/{p.name}" for p in outcome.files],
    }


@app.get("/")
async def read_root():
    return {"service": "WignerSim", "version": __version__, "status": "ok"}


@app.post("/lawcheck")
def lawcheck(request: Optional[RunRequest] = None):
    return _run("lawcheck", request)


@app.post("/simulate")
def simulate(request: Optional[RunRequest] = None):
    return _run("simulate", request)


@app.post("/rate")
def rate(request: Optional[RunRequest] = None):
    return _run("rate", request)


@app.post("/bai")
def bai(request: Optional[RunRequest] = None):
    return _run("bai", request)


@app.get("/download/{run_id}/{filename}")
async def download_file(run_id: str, filename: str):
    file_path = os.path.join(TMP_DIR, run_id, filename)
    if os.path.basename(filename) != filename or not os.path.exists(file_path):
        raise HTTPException(status_code=404, detail="File not found")
    return FileResponse(file_path, filename=filename)


if __name__ == "__main__":
    print("Please run this server using an ASGI runner, e.g.:")
    print("  fastapi run server.py")
    # or: uvicorn server:app --host 0.0.0.0 --port 8001
