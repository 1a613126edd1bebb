# routes/common.py

import json
import logging
import os
import tempfile
from typing import Any, Dict

from fastapi import HTTPException, UploadFile
from sqlalchemy.orm import Session

import run_manager
from tools.errors import StatArbError
from tools.pipeline import run_tool_async
from tools.reporting import to_plain

logger = logging.getLogger("routes.common")


def http_error(e: StatArbError) -> HTTPException:
    """Validation/IO problems are the caller's (422); numerical failures are ours (500)."""
    status = 422 if e.exit_code == 1 else 500
    return HTTPException(status_code=status, detail=str(e))


def parse_form_config(raw: str) -> Dict[str, Any]:
    try:
        config = json.loads(raw or "{}")
    except json.JSONDecodeError as e:
        raise HTTPException(status_code=422, detail=f"config is not valid JSON: {e}")
    if not isinstance(config, dict):
        raise HTTPException(status_code=422, detail="config must be a JSON object")
    return config


async def run_recorded(db: Session, command: str, fn, inputs: Dict[str, Any]) -> Dict[str, Any]:
    """Runs a pipeline tool in a worker thread and records the run."""
    run = run_manager.create_run(db, command, inputs.get("config"))
    try:
        result = await run_tool_async(fn, inputs)
    except StatArbError as e:
        logger.error(f"{command} run {run.id} failed: {e}")
        run_manager.fail_run(db, run.id, str(e), e.exit_code)
        raise http_error(e)
    run_manager.record_result(db, run.id, result)
    return {"run_id": run.id, **to_plain(result)}


async def run_with_upload(db: Session, command: str, fn, file: UploadFile, inputs: Dict[str, Any]) -> Dict[str, Any]:
    raw = await file.read()
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, os.path.basename(file.filename or "prices.csv"))
        with open(path, "wb") as f:
            f.write(raw)
        return await run_recorded(db, command, fn, {**inputs, "prices": path})
